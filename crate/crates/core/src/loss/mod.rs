//! Loss components and their parameter gradients.
//!
//! `total = ic + pde + bc + Γ·mass + Ω·energy`, each component a mean of
//! squares. Values and gradients come from the batched jet pass; the
//! tape-recorded route in [`LossProblem::evaluate_on_tape`] computes the
//! same quantities node by node and is used to cross-check it on small
//! networks.

mod weights;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::network::{JetColumns, Mlp, Order, Point, SLOT_T, SLOT_V, SLOT_X, SLOT_XX, SLOT_XXX};
use crate::physics::{residual, trapezoid_weights, BoundaryKind, CaseSpec};
use crate::sampling::TrainSet;

pub use weights::{update_weights, Mode, WeightState, WeightUpdate};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub ic: f64,
    pub pde: f64,
    pub bc: f64,
    pub mass: f64,
    pub energy: f64,
    pub gamma: f64,
    pub omega: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn assemble(ic: f64, pde: f64, bc: f64, mass: f64, energy: f64, gamma: f64, omega: f64) -> Self {
        LossBreakdown {
            ic,
            pde,
            bc,
            mass,
            energy,
            gamma,
            omega,
            total: ic + pde + bc + gamma * mass + omega * energy,
        }
    }
}

/// Parameter gradients of each component separately.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentGradients {
    pub ic: Vec<f64>,
    pub pde: Vec<f64>,
    pub bc: Vec<f64>,
    pub mass: Vec<f64>,
    pub energy: Vec<f64>,
}

/// A scalar loss term with (optionally) its gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub value: f64,
    pub grad: Vec<f64>,
}

fn finite(value: f64, what: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::non_finite(what))
    }
}

/// What the invariant terms compare `M(t_j)`, `E(t_j)` against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum InvariantAnchor {
    /// The network's own values at `t = 0`.
    #[serde(rename = "network")]
    Network,
    /// Quadrature of the initial data on the same grid.
    #[default]
    #[serde(rename = "initial")]
    Initial,
}

impl InvariantAnchor {
    pub fn as_str(self) -> &'static str {
        match self {
            InvariantAnchor::Network => "network",
            InvariantAnchor::Initial => "initial",
        }
    }
}

impl std::fmt::Display for InvariantAnchor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for InvariantAnchor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "network" => Ok(InvariantAnchor::Network),
            "initial" => Ok(InvariantAnchor::Initial),
            other => Err(Error::Config(format!("unknown invariant anchor `{other}` (expected network or initial)"))),
        }
    }
}

/// Everything needed to evaluate the loss of one case on a fixed point set.
#[derive(Clone, Debug)]
pub struct LossProblem {
    case: CaseSpec,
    ic_points: Vec<Point>,
    ic_targets: Vec<f64>,
    collocation: Vec<Point>,
    /// Left boundary points, then right boundary points, same time order.
    boundary_points: Vec<Point>,
    n_boundary: usize,
    invariant_points: Vec<Point>,
    n_times: usize,
    n_nodes: usize,
    quad_weights: Vec<f64>,
    anchor: InvariantAnchor,
    /// Mass and energy of the initial data on the invariant grid.
    initial_invariants: (f64, f64),
}

/// Gradient sink: destination and scale applied to this term's adjoints.
type Sink<'a> = Option<(&'a mut [f64], f64)>;

impl LossProblem {
    pub fn new(case: CaseSpec, trainset: &TrainSet) -> Self {
        let dom = case.domain;
        let ic_points: Vec<Point> = trainset.ic_points.iter().map(|&x| Point::new(0.0, x)).collect();
        let ic_targets = trainset.ic_points.iter().map(|&x| case.initial(x)).collect();
        let mut boundary_points: Vec<Point> = trainset
            .boundary_times
            .iter()
            .map(|&t| Point::new(t, dom.x_min))
            .collect();
        boundary_points.extend(trainset.boundary_times.iter().map(|&t| Point::new(t, dom.x_max)));
        let grid = &trainset.invariant_grid;
        let quad_weights = trapezoid_weights(&grid.x);
        let initial_invariants = grid.x.nodes().iter().zip(&quad_weights).fold((0.0, 0.0), |(m, e), (&x, w)| {
            let (u, ux) = (case.ic.eval(x), case.ic.eval_dx(x));
            (m + w * u, e + w * crate::physics::energy_density(u, ux, &case.params))
        });
        LossProblem {
            case,
            ic_points,
            ic_targets,
            collocation: trainset.collocation.clone(),
            boundary_points,
            n_boundary: trainset.boundary_times.len(),
            invariant_points: grid.points(),
            n_times: grid.times.len(),
            n_nodes: grid.x.n,
            quad_weights,
            anchor: InvariantAnchor::default(),
            initial_invariants,
        }
    }

    pub fn with_anchor(mut self, anchor: InvariantAnchor) -> Self {
        self.anchor = anchor;
        self
    }

    pub fn anchor(&self) -> InvariantAnchor {
        self.anchor
    }

    /// Mass and energy of the initial data on the invariant grid.
    pub fn initial_invariants(&self) -> (f64, f64) {
        self.initial_invariants
    }

    pub fn case(&self) -> &CaseSpec {
        &self.case
    }

    fn ic_impl(&self, net: &Mlp, sink: Sink<'_>) -> Result<f64> {
        let n = self.ic_points.len() as f64;
        let mut sum = 0.0;
        match sink {
            Some((grad, scale)) => net.forward_backward_local(&self.ic_points, Order::Value, grad, |off, jets, adj| {
                for (i, (&u, a)) in jets.values().iter().zip(adj.slot_mut(SLOT_V)).enumerate() {
                    let d = u - self.ic_targets[off + i];
                    sum += d * d;
                    *a = scale * 2.0 * d / n;
                }
            }),
            None => {
                for (u, target) in net.eval_values(&self.ic_points).iter().zip(&self.ic_targets) {
                    sum += (u - target).powi(2);
                }
            }
        }
        finite(sum / n, "initial-condition loss")
    }

    fn pde_impl(&self, net: &Mlp, sink: Sink<'_>) -> Result<f64> {
        let params = self.case.params;
        let n = self.collocation.len() as f64;
        let mu2 = params.mu * params.mu;
        let mut sum = 0.0;
        match sink {
            Some((grad, scale)) => net.forward_backward_local(&self.collocation, Order::Full, grad, |_, jets, adj| {
                for i in 0..jets.len() {
                    let jet = jets.jet(i);
                    let r = residual(&jet, &params);
                    sum += r * r;
                    let k = scale * 2.0 * r / n;
                    adj.slot_mut(SLOT_T)[i] = k;
                    adj.slot_mut(SLOT_V)[i] = k * params.eta * jet.vx;
                    adj.slot_mut(SLOT_X)[i] = k * params.eta * jet.v;
                    adj.slot_mut(SLOT_XXX)[i] = k * mu2;
                }
            }),
            None => {
                let jets = net.eval_batch(&self.collocation, Order::Full);
                for i in 0..jets.len() {
                    sum += residual(&jets.jet(i), &params).powi(2);
                }
            }
        }
        finite(sum / n, "PDE residual loss")
    }

    fn bc_impl(&self, net: &Mlp, sink: Sink<'_>) -> Result<f64> {
        let nb = self.n_boundary;
        let inv = 1.0 / nb as f64;
        match self.case.domain.bc {
            BoundaryKind::DirichletZero => {
                let mut sum = 0.0;
                match sink {
                    Some((grad, scale)) => {
                        net.forward_backward_local(&self.boundary_points, Order::Value, grad, |_, jets, adj| {
                            for (&u, a) in jets.values().iter().zip(adj.slot_mut(SLOT_V)) {
                                sum += u * u;
                                *a = scale * 2.0 * u * inv;
                            }
                        })
                    }
                    None => {
                        sum = net.eval_values(&self.boundary_points).iter().map(|u| u * u).sum();
                    }
                }
                finite(sum * inv, "boundary loss")
            }
            BoundaryKind::Periodic => {
                let jets = net.eval_batch(&self.boundary_points, Order::Second);
                let mut sum = 0.0;
                let mut adj = JetColumns::zeros(Order::Second, 2 * nb);
                for s in [SLOT_V, SLOT_X, SLOT_XX] {
                    let col = jets.slot(s).to_vec();
                    let a = adj.slot_mut(s);
                    for k in 0..nb {
                        let d = col[k] - col[nb + k];
                        sum += d * d;
                        a[k] = 2.0 * d * inv;
                        a[nb + k] = -2.0 * d * inv;
                    }
                }
                let value = finite(sum * inv, "boundary loss")?;
                if let Some((grad, scale)) = sink {
                    for s in [SLOT_V, SLOT_X, SLOT_XX] {
                        adj.slot_mut(s).iter_mut().for_each(|a| *a *= scale);
                    }
                    net.backprop_batch(&self.boundary_points, &adj, grad);
                }
                Ok(value)
            }
        }
    }

    /// Mass and energy drift terms. `sinks` receive the gradients of the
    /// mass term and of the energy term with their own scales; both may
    /// point at the same buffer through `combined`.
    fn invariant_impl(&self, net: &Mlp, grads: InvariantSinks<'_>) -> Result<(f64, f64)> {
        let params = self.case.params;
        let jets = net.eval_batch(&self.invariant_points, Order::First);
        let (nt, nq) = (self.n_times, self.n_nodes);
        let u = jets.slot(SLOT_V);
        let ux = jets.slot(SLOT_X);
        let mut masses = vec![0.0; nt];
        let mut energies = vec![0.0; nt];
        for j in 0..nt {
            let mut m = 0.0;
            let mut e = 0.0;
            for i in 0..nq {
                let p = j * nq + i;
                let w = self.quad_weights[i];
                m += w * u[p];
                e += w * crate::physics::energy_density(u[p], ux[p], &params);
            }
            masses[j] = m;
            energies[j] = e;
        }
        let inv_nt = 1.0 / nt as f64;
        let (m_ref, e_ref) = match self.anchor {
            InvariantAnchor::Network => (masses[0], energies[0]),
            InvariantAnchor::Initial => self.initial_invariants,
        };
        let mass_loss = masses.iter().map(|m| (m - m_ref).powi(2)).sum::<f64>() * inv_nt;
        let energy_loss = energies.iter().map(|e| (e - e_ref).powi(2)).sum::<f64>() * inv_nt;
        let mass_loss = finite(mass_loss, "mass loss")?;
        let energy_loss = finite(energy_loss, "energy loss")?;

        // d loss / d M_j. A network anchor makes M_0 collect the negated sum.
        let sens = |vals: &[f64], reference: f64| {
            let mut d: Vec<f64> = vals.iter().map(|v| 2.0 * (v - reference) * inv_nt).collect();
            if self.anchor == InvariantAnchor::Network {
                d[0] = -d[1..].iter().sum::<f64>();
            }
            d
        };
        let adjoint = |mass_scale: f64, energy_scale: f64| {
            let dm = sens(&masses, m_ref);
            let de = sens(&energies, e_ref);
            let mut adj = JetColumns::zeros(Order::First, nt * nq);
            for j in 0..nt {
                for i in 0..nq {
                    let p = j * nq + i;
                    let w = self.quad_weights[i];
                    let a_v = mass_scale * dm[j] * w
                        + energy_scale * de[j] * w * (-0.5 * params.eta * u[p] * u[p]);
                    let a_x = energy_scale * de[j] * w * params.mu * params.mu * ux[p];
                    adj.slot_mut(SLOT_V)[p] = a_v;
                    adj.slot_mut(SLOT_X)[p] = a_x;
                }
            }
            adj
        };
        match grads {
            InvariantSinks::None => {}
            InvariantSinks::Combined(grad, ms, es) => {
                if ms != 0.0 || es != 0.0 {
                    net.backprop_batch(&self.invariant_points, &adjoint(ms, es), grad);
                }
            }
            InvariantSinks::Separate(gm, ge) => {
                net.backprop_batch(&self.invariant_points, &adjoint(1.0, 0.0), gm);
                net.backprop_batch(&self.invariant_points, &adjoint(0.0, 1.0), ge);
            }
        }
        Ok((mass_loss, energy_loss))
    }

    pub fn ic_loss(&self, net: &Mlp) -> Result<Term> {
        let mut grad = vec![0.0; net.num_params()];
        let value = self.ic_impl(net, Some((&mut grad, 1.0)))?;
        Ok(Term { value, grad })
    }

    pub fn pde_loss(&self, net: &Mlp) -> Result<Term> {
        let mut grad = vec![0.0; net.num_params()];
        let value = self.pde_impl(net, Some((&mut grad, 1.0)))?;
        Ok(Term { value, grad })
    }

    pub fn bc_loss(&self, net: &Mlp) -> Result<Term> {
        let mut grad = vec![0.0; net.num_params()];
        let value = self.bc_impl(net, Some((&mut grad, 1.0)))?;
        Ok(Term { value, grad })
    }

    /// `(mass term, energy term)` with their gradients.
    pub fn invariant_losses(&self, net: &Mlp) -> Result<(Term, Term)> {
        let mut gm = vec![0.0; net.num_params()];
        let mut ge = vec![0.0; net.num_params()];
        let (m, e) = self.invariant_impl(net, InvariantSinks::Separate(&mut gm, &mut ge))?;
        Ok((Term { value: m, grad: gm }, Term { value: e, grad: ge }))
    }

    /// Breakdown and gradient of the weighted total. With zero weights the
    /// invariant terms are evaluated for reporting only.
    pub fn total_loss(&self, net: &Mlp, weights: &WeightState) -> Result<(LossBreakdown, Vec<f64>)> {
        let mut grad = vec![0.0; net.num_params()];
        let ic = self.ic_impl(net, Some((&mut grad, 1.0)))?;
        let pde = self.pde_impl(net, Some((&mut grad, 1.0)))?;
        let bc = self.bc_impl(net, Some((&mut grad, 1.0)))?;
        let (mass, energy) =
            self.invariant_impl(net, InvariantSinks::Combined(&mut grad, weights.gamma, weights.omega))?;
        let breakdown = LossBreakdown::assemble(ic, pde, bc, mass, energy, weights.gamma, weights.omega);
        finite(breakdown.total, "total loss")?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::non_finite("total loss gradient"));
        }
        Ok((breakdown, grad))
    }

    /// Breakdown only.
    pub fn loss_values(&self, net: &Mlp, weights: &WeightState) -> Result<LossBreakdown> {
        let ic = self.ic_impl(net, None)?;
        let pde = self.pde_impl(net, None)?;
        let bc = self.bc_impl(net, None)?;
        let (mass, energy) = self.invariant_impl(net, InvariantSinks::None)?;
        Ok(LossBreakdown::assemble(ic, pde, bc, mass, energy, weights.gamma, weights.omega))
    }

    pub fn component_gradients(&self, net: &Mlp) -> Result<ComponentGradients> {
        let (mass, energy) = self.invariant_losses(net)?;
        Ok(ComponentGradients {
            ic: self.ic_loss(net)?.grad,
            pde: self.pde_loss(net)?.grad,
            bc: self.bc_loss(net)?.grad,
            mass: mass.grad,
            energy: energy.grad,
        })
    }

    /// The same breakdown and gradient computed on a scalar tape. Cost grows
    /// with every recorded node, so this is meant for small networks and
    /// point sets.
    pub fn evaluate_on_tape(&self, net: &Mlp, weights: &WeightState) -> Result<(LossBreakdown, Vec<f64>)> {
        let tape = Tape::new();
        let p = net.register(&tape);
        let params = self.case.params;
        fn mean<'t>(tape: &'t Tape, terms: Vec<Var<'t>>) -> Var<'t> {
            let n = terms.len() as f64;
            Var::sum(tape, terms).scale(1.0 / n)
        }

        let ic = mean(
            &tape,
            self.ic_points
                .iter()
                .zip(&self.ic_targets)
                .map(|(pt, &target)| {
                    let u = net.forward_jet_with(&p, pt.t, pt.x).v;
                    (u - tape.constant(target)).square()
                })
                .collect(),
        );
        let pde = mean(
            &tape,
            self.collocation
                .iter()
                .map(|pt| residual(&net.forward_jet_with(&p, pt.t, pt.x), &params).square())
                .collect(),
        );
        let nb = self.n_boundary;
        let jets: Vec<_> = self
            .boundary_points
            .iter()
            .map(|pt| net.forward_jet_with(&p, pt.t, pt.x))
            .collect();
        let bc = mean(
            &tape,
            (0..nb)
                .map(|k| {
                    let (a, b) = (&jets[k], &jets[nb + k]);
                    match self.case.domain.bc {
                        BoundaryKind::DirichletZero => a.v.square() + b.v.square(),
                        BoundaryKind::Periodic => {
                            (a.v - b.v).square() + (a.vx - b.vx).square() + (a.vxx - b.vxx).square()
                        }
                    }
                })
                .collect(),
        );
        let (nt, nq) = (self.n_times, self.n_nodes);
        let mut masses = Vec::with_capacity(nt);
        let mut energies = Vec::with_capacity(nt);
        for j in 0..nt {
            let mut m = Vec::with_capacity(nq);
            let mut e = Vec::with_capacity(nq);
            for i in 0..nq {
                let pt = self.invariant_points[j * nq + i];
                let jet = net.forward_jet_with(&p, pt.t, pt.x);
                let w = self.quad_weights[i];
                m.push(jet.v.scale(w));
                let density = jet.vx.square().scale(0.5 * params.mu * params.mu)
                    - (jet.v * jet.v * jet.v).scale(params.eta / 6.0);
                e.push(density.scale(w));
            }
            masses.push(Var::sum(&tape, m));
            energies.push(Var::sum(&tape, e));
        }
        let (m_ref, e_ref) = match self.anchor {
            InvariantAnchor::Network => (masses[0], energies[0]),
            InvariantAnchor::Initial => (tape.constant(self.initial_invariants.0), tape.constant(self.initial_invariants.1)),
        };
        let mass = mean(&tape, masses.iter().map(|&m| (m - m_ref).square()).collect());
        let energy = mean(&tape, energies.iter().map(|&e| (e - e_ref).square()).collect());
        let total = ic + pde + bc + mass.scale(weights.gamma) + energy.scale(weights.omega);
        let breakdown = LossBreakdown::assemble(
            ic.value(),
            pde.value(),
            bc.value(),
            mass.value(),
            energy.value(),
            weights.gamma,
            weights.omega,
        );
        let grad = tape.backward(total)?;
        Ok((breakdown, grad))
    }
}

enum InvariantSinks<'a> {
    None,
    Combined(&'a mut [f64], f64, f64),
    Separate(&'a mut [f64], &'a mut [f64]),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Activation;
    use crate::physics::{CaseName, InitialCondition};
    use crate::sampling::{build_trainset, SamplingConfig};

    fn small_counts() -> SamplingConfig {
        SamplingConfig { n_ic: 6, n_f: 9, n_b: 4, n_t: 3, n_q: 7 }
    }

    fn problem(name: CaseName, counts: SamplingConfig) -> LossProblem {
        let case = CaseSpec::preset(name).with_horizon(1.0);
        let ts = build_trainset(&case.domain, 5, &counts).unwrap();
        LossProblem::new(case, &ts)
    }

    fn zero_net(depth: usize, width: usize) -> Mlp {
        let n = crate::network::parameter_count(depth, width);
        Mlp::from_params(depth, width, Activation::Sine, 0, vec![0.0; n]).unwrap()
    }

    /// u(t, x) = amplitude · sin(freq · x + phase), independent of t.
    fn sine_net(freq: f64, phase: f64, amplitude: f64) -> Mlp {
        Mlp::from_params(1, 1, Activation::Sine, 0, vec![0.0, freq, phase, amplitude, 0.0]).unwrap()
    }

    #[test]
    fn zero_network_terms() {
        let zero = zero_net(2, 4);
        let p = problem(CaseName::OneSoliton, small_counts()).with_anchor(InvariantAnchor::Network);
        assert_eq!(p.pde_loss(&zero).unwrap().value, 0.0);
        assert_eq!(p.bc_loss(&zero).unwrap().value, 0.0);
        let (m, e) = p.invariant_losses(&zero).unwrap();
        assert_eq!((m.value, e.value), (0.0, 0.0));
        // IC loss of the zero network is the mean squared initial profile.
        let expected: f64 = p.ic_targets.iter().map(|v| v * v).sum::<f64>() / 6.0;
        assert!((p.ic_loss(&zero).unwrap().value - expected).abs() < 1e-15);
    }

    #[test]
    fn ic_loss_of_exact_fit_is_zero() {
        // cos(πx) = sin(πx + π/2) is representable exactly.
        let net = sine_net(std::f64::consts::PI, std::f64::consts::FRAC_PI_2, 1.0);
        let p = problem(CaseName::Cosine, small_counts());
        assert!(p.ic_loss(&net).unwrap().value < 1e-30);
    }

    #[test]
    fn ic_loss_two_point_toy() {
        // Targets are (numerically) zero at x = ±1.
        let mut case = CaseSpec::preset(CaseName::Cosine);
        case.ic = InitialCondition::Soliton { c: 1e-300, x0: 0.0 };
        let counts = SamplingConfig { n_ic: 2, ..small_counts() };
        let ts = build_trainset(&case.domain, 1, &counts).unwrap();
        let p = LossProblem::new(case, &ts);
        let net = sine_net(-std::f64::consts::FRAC_PI_2, 0.0, 1.0);
        // u(-1) = sin(π/2) = 1, u(1) = sin(-π/2) = -1: mean of (1, 1) squares = 1.
        assert!((p.ic_loss(&net).unwrap().value - 1.0).abs() < 1e-15);
        let net = sine_net(-std::f64::consts::FRAC_PI_4, -std::f64::consts::FRAC_PI_4, 1.0);
        // u(-1) = sin(0) = 0, u(1) = sin(-π/2) = -1: mean of (0, 1) = 0.5.
        assert!((p.ic_loss(&net).unwrap().value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn boundary_terms() {
        let p = problem(CaseName::OneSoliton, small_counts());
        let one = Mlp::from_params(1, 1, Activation::Sine, 0, vec![0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((p.bc_loss(&one).unwrap().value - 2.0).abs() < 1e-15);
        let pc = problem(CaseName::Cosine, small_counts());
        let periodic = sine_net(std::f64::consts::PI, 0.0, 1.0);
        assert!(pc.bc_loss(&periodic).unwrap().value < 1e-28);
    }

    #[test]
    fn time_independent_field_conserves() {
        let net = sine_net(0.7, 0.3, 0.4);
        let p = problem(CaseName::OneSoliton, small_counts()).with_anchor(InvariantAnchor::Network);
        let (m, e) = p.invariant_losses(&net).unwrap();
        assert!(m.value < 1e-28 && e.value < 1e-28);
    }

    #[test]
    fn initial_anchor_measures_against_the_data() {
        let counts = SamplingConfig { n_q: 256, ..small_counts() };
        let case = CaseSpec::preset(CaseName::OneSoliton);
        let ts = build_trainset(&case.domain, 5, &counts).unwrap();
        let p = LossProblem::new(case, &ts);
        assert_eq!(p.anchor(), InvariantAnchor::Initial);
        let (m0, e0) = p.initial_invariants();
        assert!((m0 - 2.0).abs() < 5e-4 && (e0 + 0.2).abs() < 5e-4, "{m0} {e0}");
        // The zero network misses both invariants at every time.
        let (m, e) = p.invariant_losses(&zero_net(2, 4)).unwrap();
        assert!((m.value - m0 * m0).abs() < 1e-14 && (e.value - e0 * e0).abs() < 1e-14);
    }

    #[test]
    fn anchors_parse() {
        assert_eq!("network".parse::<InvariantAnchor>().unwrap(), InvariantAnchor::Network);
        assert_eq!("initial".parse::<InvariantAnchor>().unwrap().to_string(), "initial");
        assert!("data".parse::<InvariantAnchor>().is_err());
    }

    #[test]
    fn invariant_terms_match_hand_quadrature() {
        // Two times, three nodes on [-1, 1]: weights (0.5, 1, 0.5).
        let counts = SamplingConfig { n_ic: 2, n_f: 2, n_b: 2, n_t: 2, n_q: 3 };
        let p = problem(CaseName::Cosine, counts).with_anchor(InvariantAnchor::Network);
        let net = Mlp::init(17, 1, 3).unwrap();
        let (m, e) = p.invariant_losses(&net).unwrap();
        let w = [0.5, 1.0, 0.5];
        let xs = [-1.0, 0.0, 1.0];
        let params = p.case.params;
        let mut mt = [0.0; 2];
        let mut et = [0.0; 2];
        for (j, t) in [0.0, 1.0].iter().enumerate() {
            for i in 0..3 {
                let jet = net.forward_jet(*t, xs[i]);
                mt[j] += w[i] * jet.v;
                et[j] += w[i] * (0.5 * params.mu * params.mu * jet.vx * jet.vx - params.eta / 6.0 * jet.v.powi(3));
            }
        }
        assert!((m.value - 0.5 * (mt[1] - mt[0]).powi(2)).abs() < 1e-15);
        assert!((e.value - 0.5 * (et[1] - et[0]).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn total_is_weighted_sum() {
        let b = LossBreakdown::assemble(1.0, 2.0, 3.0, 4.0, 5.0, 0.5, 2.0);
        assert_eq!(b.total, 18.0);
        let p = problem(CaseName::OneSoliton, small_counts());
        let net = Mlp::init(3, 2, 5).unwrap();
        let (v, _) = p.total_loss(&net, &WeightState::new(Mode::Vanilla)).unwrap();
        assert_eq!(v.total, v.ic + v.pde + v.bc);
        assert!(v.mass > 0.0 && v.energy > 0.0);
    }

    #[test]
    fn batched_route_matches_tape_route() {
        for (name, anchor) in CaseName::ALL.into_iter().flat_map(|n| [(n, InvariantAnchor::Network), (n, InvariantAnchor::Initial)]) {
            let p = problem(name, small_counts()).with_anchor(anchor);
            let net = Mlp::init(21, 2, 5).unwrap();
            let mut w = WeightState::new(Mode::StructurePreserving);
            w.gamma = 0.7;
            w.omega = 3.1;
            let (fast, g_fast) = p.total_loss(&net, &w).unwrap();
            let (slow, g_slow) = p.evaluate_on_tape(&net, &w).unwrap();
            for (a, b) in [
                (fast.ic, slow.ic),
                (fast.pde, slow.pde),
                (fast.bc, slow.bc),
                (fast.mass, slow.mass),
                (fast.energy, slow.energy),
                (fast.total, slow.total),
            ] {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{name}: {a} vs {b}");
            }
            for (a, b) in g_fast.iter().zip(&g_slow) {
                assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{name}: {a} vs {b}");
            }
            assert_eq!(p.loss_values(&net, &w).unwrap(), fast);
        }
    }

    #[test]
    fn total_gradient_is_linear_in_components() {
        let p = problem(CaseName::Cosine, small_counts());
        let net = Mlp::init(4, 2, 6).unwrap();
        let mut w = WeightState::new(Mode::StructurePreserving);
        w.gamma = 2.5;
        w.omega = 0.3;
        let (_, total) = p.total_loss(&net, &w).unwrap();
        let c = p.component_gradients(&net).unwrap();
        let scale = total.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        for k in 0..total.len() {
            let sum = c.ic[k] + c.pde[k] + c.bc[k] + w.gamma * c.mass[k] + w.omega * c.energy[k];
            assert!((total[k] - sum).abs() <= 1e-10 * scale.max(1.0));
        }
    }

    #[test]
    fn deterministic() {
        let p = problem(CaseName::OneSoliton, SamplingConfig::default());
        let net = Mlp::init(7, 2, 10).unwrap();
        let w = WeightState::new(Mode::StructurePreserving);
        let a = p.total_loss(&net, &w).unwrap();
        let b = p.total_loss(&net, &w).unwrap();
        assert_eq!(a, b);
    }
}
