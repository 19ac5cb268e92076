//! Strong-Wolfe line search with cubic interpolation (bracketing phase
//! followed by zoom).

use crate::error::{Error, Result};

/// Function value, gradient and the index of the evaluation that produced
/// them.
#[derive(Clone, Debug)]
pub(crate) struct Sample {
    pub t: f64,
    pub f: f64,
    pub g: Vec<f64>,
    pub gtd: f64,
    pub eval: usize,
}

pub(crate) struct LineSearch {
    pub c1: f64,
    pub c2: f64,
    pub max_evals: usize,
    pub tolerance: f64,
    pub max_shrink: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct Outcome {
    pub accepted: Sample,
    /// Both strong-Wolfe conditions hold at `accepted`.
    pub wolfe: bool,
    pub evals: usize,
}

/// Minimizer of the cubic through `(x1, f1, g1)` and `(x2, f2, g2)`, clamped
/// to `bounds` (default: the interval itself).
pub(crate) fn cubic_interpolate(
    (x1, f1, g1): (f64, f64, f64),
    (x2, f2, g2): (f64, f64, f64),
    bounds: Option<(f64, f64)>,
) -> f64 {
    let (lo, hi) = bounds.unwrap_or(if x1 <= x2 { (x1, x2) } else { (x2, x1) });
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_sq = d1 * d1 - g1 * g2;
    if d2_sq >= 0.0 {
        let d2 = d2_sq.sqrt();
        let pos = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        if pos.is_finite() {
            return pos.max(lo).min(hi);
        }
    }
    0.5 * (lo + hi)
}

impl LineSearch {
    /// Evaluates at step `t`, halving it while the result is non-finite.
    fn probe<F>(&self, eval: &mut F, t: f64, d: &[f64]) -> Result<Sample>
    where
        F: FnMut(f64) -> Result<(f64, Vec<f64>, usize)>,
    {
        let mut t = t;
        for _ in 0..=self.max_shrink {
            let (f, g, idx) = eval(t)?;
            if f.is_finite() && g.iter().all(|v| v.is_finite()) {
                let gtd = dot(&g, d);
                return Ok(Sample { t, f, g, gtd, eval: idx });
            }
            t *= 0.5;
        }
        Err(Error::Optimizer(format!(
            "objective non-finite after {} step halvings",
            self.max_shrink
        )))
    }

    /// Searches along `d` from `start` (step 0) with initial trial `t`.
    /// `eval(t)` returns the value and gradient at `x + t d` together with a
    /// running evaluation index.
    pub(crate) fn run<F>(&self, start: &Sample, d: &[f64], t: f64, mut eval: F) -> Result<Outcome>
    where
        F: FnMut(f64) -> Result<(f64, Vec<f64>, usize)>,
    {
        let d_norm = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let (f0, gtd0) = (start.f, start.gtd);
        let armijo = |s: &Sample| s.f <= f0 + self.c1 * s.t * gtd0;
        let curvature = |s: &Sample| s.gtd.abs() <= -self.c2 * gtd0;

        let mut new = self.probe(&mut eval, t, d)?;
        let mut evals = 1;
        let mut prev = start.clone();
        let mut done = false;
        let mut bracket: Vec<Sample>;
        let mut iters = 0;
        loop {
            if !armijo(&new) || (iters > 1 && new.f >= prev.f) {
                bracket = vec![prev, new];
                break;
            }
            if curvature(&new) {
                bracket = vec![new];
                done = true;
                break;
            }
            if new.gtd >= 0.0 {
                bracket = vec![prev, new];
                break;
            }
            if iters + 1 >= self.max_evals {
                bracket = vec![start.clone(), new];
                break;
            }
            let min_step = new.t + 0.01 * (new.t - prev.t);
            let max_step = new.t * 10.0;
            let next_t = cubic_interpolate(
                (prev.t, prev.f, prev.gtd),
                (new.t, new.f, new.gtd),
                Some((min_step, max_step)),
            );
            prev = new;
            new = self.probe(&mut eval, next_t, d)?;
            evals += 1;
            iters += 1;
        }

        if bracket.len() == 1 {
            let accepted = bracket.pop().expect("one sample");
            return Ok(self.finish(accepted, done, evals, f0, gtd0));
        }

        // zoom
        let mut insufficient = false;
        let mut low = if bracket[0].f <= bracket[1].f { 0 } else { 1 };
        while !done && iters < self.max_evals {
            let (a, b) = (&bracket[0], &bracket[1]);
            if (b.t - a.t).abs() * d_norm < self.tolerance {
                break;
            }
            let mut t = cubic_interpolate((a.t, a.f, a.gtd), (b.t, b.f, b.gtd), None);
            let (lo, hi) = (a.t.min(b.t), a.t.max(b.t));
            let eps = 0.1 * (hi - lo);
            if (hi - t).min(t - lo) < eps {
                if insufficient || t >= hi || t <= lo {
                    t = if (t - hi).abs() < (t - lo).abs() { hi - eps } else { lo + eps };
                    insufficient = false;
                } else {
                    insufficient = true;
                }
            } else {
                insufficient = false;
            }
            let s = self.probe(&mut eval, t, d)?;
            evals += 1;
            iters += 1;
            let high = 1 - low;
            if !armijo(&s) || s.f >= bracket[low].f {
                bracket[high] = s;
            } else {
                if curvature(&s) {
                    done = true;
                } else if s.gtd * (bracket[high].t - bracket[low].t) >= 0.0 {
                    bracket[high] = bracket[low].clone();
                }
                bracket[low] = s;
            }
            low = if bracket[0].f <= bracket[1].f { 0 } else { 1 };
        }
        let accepted = bracket.swap_remove(low);
        Ok(self.finish(accepted, done, evals, f0, gtd0))
    }

    fn finish(&self, accepted: Sample, wolfe: bool, evals: usize, f0: f64, gtd0: f64) -> Outcome {
        if wolfe {
            let slack = 1e-12 * f0.abs().max(1.0);
            debug_assert!(
                accepted.f <= f0 + self.c1 * accepted.t * gtd0 + slack,
                "sufficient decrease violated at t = {}",
                accepted.t
            );
            debug_assert!(
                accepted.gtd.abs() <= -self.c2 * gtd0 + slack,
                "curvature condition violated at t = {}",
                accepted.t
            );
        }
        Outcome { accepted, wolfe, evals }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_recovers_quadratic_minimum() {
        // f = (x − 0.3)², exact on any interval.
        let f = |x: f64| (x - 0.3) * (x - 0.3);
        let g = |x: f64| 2.0 * (x - 0.3);
        let t = cubic_interpolate((0.0, f(0.0), g(0.0)), (1.0, f(1.0), g(1.0)), None);
        assert!((t - 0.3).abs() < 1e-14);
        let t = cubic_interpolate((1.0, f(1.0), g(1.0)), (0.0, f(0.0), g(0.0)), None);
        assert!((t - 0.3).abs() < 1e-14);
        // clamped to bounds
        let t = cubic_interpolate((0.0, f(0.0), g(0.0)), (1.0, f(1.0), g(1.0)), Some((0.5, 2.0)));
        assert_eq!(t, 0.5);
    }

    fn search(phi: impl Fn(f64) -> (f64, f64), t0: f64) -> Outcome {
        let (f0, g0) = phi(0.0);
        let start = Sample { t: 0.0, f: f0, g: vec![g0], gtd: g0, eval: 0 };
        let ls = LineSearch { c1: 1e-4, c2: 0.9, max_evals: 25, tolerance: 1e-12, max_shrink: 20 };
        let mut n = 0;
        ls.run(&start, &[1.0], t0, |t| {
            n += 1;
            let (f, g) = phi(t);
            Ok((f, vec![g], n))
        })
        .unwrap()
    }

    #[test]
    fn accepts_wolfe_points() {
        for t0 in [1e-3, 0.1, 1.0, 10.0, 1e3] {
            let out = search(|t| ((t - 2.0).powi(2) - 4.0, 2.0 * (t - 2.0)), t0);
            assert!(out.wolfe, "t0 = {t0}");
            let s = &out.accepted;
            assert!(s.f <= 1e-4 * s.t * -4.0);
            assert!(s.gtd.abs() <= 0.9 * 4.0);
        }
    }

    #[test]
    fn shrinks_through_non_finite_region() {
        // Objective undefined beyond t = 1; a huge trial step must recover.
        let out = search(
            |t| if t > 1.0 { (f64::NAN, f64::NAN) } else { ((t - 0.5).powi(2), 2.0 * (t - 0.5)) },
            100.0,
        );
        assert!(out.accepted.t <= 1.0 && out.accepted.f < 0.25);
    }

    #[test]
    fn persistent_non_finite_is_an_error() {
        let start = Sample { t: 0.0, f: 1.0, g: vec![-1.0], gtd: -1.0, eval: 0 };
        let ls = LineSearch { c1: 1e-4, c2: 0.9, max_evals: 25, tolerance: 1e-12, max_shrink: 20 };
        let res = ls.run(&start, &[1.0], 1.0, |_| Ok((f64::INFINITY, vec![0.0], 1)));
        assert!(res.is_err());
    }
}
