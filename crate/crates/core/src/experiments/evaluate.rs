//! Post-training evaluation against the case reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Mlp, Order, Point, SLOT_V, SLOT_X};
use crate::physics::{energy, mass, soliton, soliton_jet, CaseSpec, InitialCondition, UniformGrid};
use crate::reference::{Etdrk4, Snapshot, SpectralConfig};

/// Anything that can be sampled for `u` and `u_x`.
pub trait Field {
    fn sample(&self, points: &[Point]) -> (Vec<f64>, Vec<f64>);
}

impl Field for Mlp {
    fn sample(&self, points: &[Point]) -> (Vec<f64>, Vec<f64>) {
        let jets = self.eval_batch(points, Order::First);
        (jets.slot(SLOT_V).to_vec(), jets.slot(SLOT_X).to_vec())
    }
}

/// A field given pointwise as `(t, x) ↦ (u, u_x)`.
pub struct FnField<F>(pub F);

impl<F: Fn(f64, f64) -> (f64, f64)> Field for FnField<F> {
    fn sample(&self, points: &[Point]) -> (Vec<f64>, Vec<f64>) {
        points.iter().map(|p| (self.0)(p.t, p.x)).unzip()
    }
}

/// Reference solution of a case.
#[derive(Clone, Debug)]
pub enum Reference {
    Soliton { c: f64, x0: f64 },
    /// Spectral snapshots at a fixed set of times.
    Spectral(Vec<Snapshot>),
}

const TIME_MATCH: f64 = 1e-9;

impl Reference {
    /// The analytic soliton, or a spectral solve sampled at `times`.
    ///
    /// The two-soliton data is a sum of two sech² profiles, which is not a
    /// Hirota state (they differ by 1.1e-2 at t = 0 even with matched
    /// centres), so its truth comes from the solver.
    pub fn for_case(case: &CaseSpec, times: &[f64], modes: usize, dt: f64) -> Result<Self> {
        match case.ic {
            InitialCondition::Soliton { c, x0 } => Ok(Reference::Soliton { c, x0 }),
            InitialCondition::TwoSoliton { .. } | InitialCondition::Cosine => Reference::spectral(case, times, modes, dt),
        }
    }

    pub fn spectral(case: &CaseSpec, times: &[f64], modes: usize, dt: f64) -> Result<Self> {
        let mut sorted = times.to_vec();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup_by(|a, b| (*a - *b).abs() < TIME_MATCH);
        let config = SpectralConfig { n_modes: modes, dt, ..SpectralConfig::new(case.domain.x_min, case.domain.x_max) };
        let mut solver = Etdrk4::new(config, case.params)?;
        Ok(Reference::Spectral(solver.solve(|x| case.initial(x), &sorted)?))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Reference::Soliton { .. } => "analytic",
            Reference::Spectral(_) => "spectral",
        }
    }

    /// `u` and `u_x` at time `t` on `xs`.
    pub fn slice(&self, t: f64, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok(match self {
            Reference::Soliton { c, x0 } => xs.iter().map(|&x| (soliton(t, x, *c, *x0), soliton_jet(t, x, *c, *x0).vx)).unzip(),
            Reference::Spectral(snaps) => {
                let s = snaps
                    .iter()
                    .find(|s| (s.t - t).abs() < TIME_MATCH)
                    .ok_or_else(|| Error::Config(format!("no reference snapshot at t = {t}")))?;
                xs.iter().map(|&x| (s.eval(x), s.eval_dx(x))).unzip()
            }
        })
    }
}

/// One row of `invariants.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantRow {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    /// max over x of |u − u_ref|.
    pub error: f64,
}

/// Times `i T / (n − 1)`.
pub fn time_grid(t_max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| if i + 1 == n { t_max } else { t_max * i as f64 / (n - 1) as f64 }).collect()
}

/// Trapezoid mass and energy of `field` and its max-abs error against
/// `reference` at each time.
pub fn invariant_series(
    field: &dyn Field,
    case: &CaseSpec,
    reference: &Reference,
    times: &[f64],
    grid: &UniformGrid,
) -> Result<Vec<InvariantRow>> {
    let xs = grid.nodes();
    let mut rows = Vec::with_capacity(times.len());
    for &t in times {
        let pts: Vec<Point> = xs.iter().map(|&x| Point::new(t, x)).collect();
        let (u, ux) = field.sample(&pts);
        let (r, _) = reference.slice(t, &xs)?;
        let error = u.iter().zip(&r).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
        rows.push(InvariantRow { t, mass: mass(&u, grid)?, energy: energy(&u, &ux, grid, &case.params)?, error });
    }
    Ok(rows)
}

/// `‖pred − ref‖₂ / ‖ref‖₂`.
pub fn l2_relative_error(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(Error::LengthMismatch { what: "relative error grid", expected: reference.len(), got: pred.len() });
    }
    let den: f64 = reference.iter().map(|r| r * r).sum();
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    let num: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r) * (p - r)).sum();
    Ok((num / den).sqrt())
}

/// Row-major `(t, x)` evaluation grid with prediction and reference.
#[derive(Clone, Debug, PartialEq)]
pub struct ContourGrid {
    pub times: Vec<f64>,
    pub xs: Vec<f64>,
    pub pred: Vec<f64>,
    pub reference: Vec<f64>,
}

pub fn contour_grid(net: &Mlp, reference: &Reference, times: &[f64], xs: &[f64]) -> Result<ContourGrid> {
    let pts: Vec<Point> = times.iter().flat_map(|&t| xs.iter().map(move |&x| Point::new(t, x))).collect();
    let pred = net.eval_values(&pts);
    let mut refs = Vec::with_capacity(pts.len());
    for &t in times {
        refs.extend(reference.slice(t, xs)?.0);
    }
    Ok(ContourGrid { times: times.to_vec(), xs: xs.to_vec(), pred, reference: refs })
}

impl ContourGrid {
    pub fn l2_relative_error(&self) -> Result<f64> {
        l2_relative_error(&self.pred, &self.reference)
    }

    /// Relative L2 error restricted to the time slice `i`.
    pub fn slice_error(&self, i: usize) -> Result<f64> {
        let n = self.xs.len();
        l2_relative_error(&self.pred[i * n..(i + 1) * n], &self.reference[i * n..(i + 1) * n])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Activation;
    use crate::physics::CaseName;

    #[test]
    fn relative_error_examples() {
        let r = [1.0, -2.0, 0.5];
        assert_eq!(l2_relative_error(&r, &r).unwrap(), 0.0);
        let p: Vec<f64> = r.iter().map(|v| 1.01 * v).collect();
        assert!((l2_relative_error(&p, &r).unwrap() - 0.01).abs() < 1e-14);
        assert!((l2_relative_error(&[0.0; 3], &r).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(l2_relative_error(&r, &[0.0; 3]), Err(Error::ZeroReference)));
        assert!(l2_relative_error(&r, &r[..2]).is_err());
    }

    #[test]
    fn exact_solution_series() {
        let case = CaseSpec::preset(CaseName::OneSoliton);
        let reference = Reference::for_case(&case, &[], 0, 0.0).unwrap();
        let exact = FnField(|t, x| (soliton(t, x, 1.0, 0.0), soliton_jet(t, x, 1.0, 0.0).vx));
        let grid = UniformGrid::new(-20.0, 20.0, 256).unwrap();
        let times = time_grid(3.0, 13);
        let rows = invariant_series(&exact, &case, &reference, &times, &grid).unwrap();
        assert_eq!(rows.len(), 13);
        for r in rows {
            assert!((r.mass - 2.0).abs() < 5e-4 && (r.energy + 0.2).abs() < 5e-4, "{r:?}");
            assert_eq!(r.error, 0.0);
        }
    }

    #[test]
    fn zero_network_series() {
        let case = CaseSpec::preset(CaseName::OneSoliton);
        let reference = Reference::for_case(&case, &[], 0, 0.0).unwrap();
        let n = crate::network::parameter_count(2, 3);
        let zero = Mlp::from_params(2, 3, Activation::Sine, 0, vec![0.0; n]).unwrap();
        // 401 nodes put a node on every crest position c t for t in steps of 0.1.
        let grid = UniformGrid::new(-20.0, 20.0, 401).unwrap();
        let rows = invariant_series(&zero, &case, &reference, &time_grid(3.0, 31), &grid).unwrap();
        assert_eq!(rows.len(), 31);
        for r in rows {
            assert_eq!((r.mass, r.energy), (0.0, 0.0));
            assert!((r.error - 0.5).abs() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn time_grid_hits_endpoints() {
        let t = time_grid(3.0, 61);
        assert_eq!((t[0], t[60]), (0.0, 3.0));
        assert!((t[1] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn spectral_reference_lookup() {
        let case = CaseSpec::preset(CaseName::Cosine).with_horizon(0.01);
        let r = Reference::for_case(&case, &[0.01, 0.0, 0.0], 64, 1e-3).unwrap();
        let (u, _) = r.slice(0.0, &[0.0, 0.5]).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-12 && u[1].abs() < 1e-12);
        assert!(r.slice(0.005, &[0.0]).is_err());
        assert_eq!(r.name(), "spectral");
    }

    #[test]
    fn contour_errors() {
        let case = CaseSpec::preset(CaseName::OneSoliton);
        let r = Reference::for_case(&case, &[], 0, 0.0).unwrap();
        let n = crate::network::parameter_count(1, 2);
        let zero = Mlp::from_params(1, 2, Activation::Sine, 0, vec![0.0; n]).unwrap();
        let g = contour_grid(&zero, &r, &[0.0, 1.0], &[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(g.pred.len(), 6);
        assert_eq!(g.l2_relative_error().unwrap(), 1.0);
        assert_eq!(g.slice_error(1).unwrap(), 1.0);
    }
}
