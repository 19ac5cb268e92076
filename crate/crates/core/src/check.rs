//! Self-checks: derivatives against finite differences, optimizer
//! benchmarks and oracle conservation. Each check reports the measured
//! quantity next to its threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::Jet;
use crate::error::Result;
use crate::loss::{LossProblem, Mode, WeightState};
use crate::network::{Activation, Mlp};
use crate::optimizer::{minimize_fn, LbfgsConfig};
use crate::physics::{soliton, CaseName, CaseSpec};
use crate::reference::{Etdrk4, SpectralConfig};
use crate::sampling::{build_trainset, SamplingConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckResult {
    fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        CheckResult { name: name.into(), value, threshold, passed: value < threshold }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: {:.3e} (threshold {:.1e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold
        )
    }
}

/// Random expression in one variable built from the jet primitives.
#[derive(Clone, Debug)]
pub enum Expr {
    X,
    Const(f64),
    Add(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Tanh(Box<Expr>),
    /// `a · e + b`
    Affine(f64, f64, Box<Expr>),
}

impl Expr {
    pub fn random(rng: &mut impl Rng, depth: usize) -> Expr {
        if depth == 0 {
            return if rng.random_bool(0.7) { Expr::X } else { Expr::Const(rng.random_range(-1.5..1.5)) };
        }
        let sub = |rng: &mut _| Box::new(Expr::random(rng, depth - 1));
        match rng.random_range(0..5) {
            0 => Expr::Add(sub(rng), sub(rng)),
            1 => Expr::Mul(sub(rng), sub(rng)),
            2 => Expr::Sin(sub(rng)),
            3 => Expr::Tanh(sub(rng)),
            _ => Expr::Affine(rng.random_range(-1.5..1.5), rng.random_range(-1.0..1.0), sub(rng)),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Expr::X => x,
            Expr::Const(c) => *c,
            Expr::Add(a, b) => a.value(x) + b.value(x),
            Expr::Mul(a, b) => a.value(x) * b.value(x),
            Expr::Sin(a) => a.value(x).sin(),
            Expr::Tanh(a) => a.value(x).tanh(),
            Expr::Affine(s, b, a) => s * a.value(x) + b,
        }
    }

    pub fn jet(&self, x: f64) -> Jet {
        match self {
            Expr::X => Jet::seed_x(x),
            Expr::Const(c) => Jet::constant(*c),
            Expr::Add(a, b) => a.jet(x) + b.jet(x),
            Expr::Mul(a, b) => a.jet(x) * b.jet(x),
            Expr::Sin(a) => a.jet(x).sin(),
            Expr::Tanh(a) => a.jet(x).tanh(),
            Expr::Affine(s, b, a) => a.jet(x).scale(*s).shift(b),
        }
    }
}

/// Central differences of `f` at `x`: first derivative with step `h1`,
/// second with `h2`, third with `h3`.
pub fn finite_differences(f: impl Fn(f64) -> f64, x: f64, h1: f64, h2: f64, h3: f64) -> [f64; 3] {
    let d1 = (f(x + h1) - f(x - h1)) / (2.0 * h1);
    let d2 = (f(x + h2) - 2.0 * f(x) + f(x - h2)) / (h2 * h2);
    let d3 = (f(x + 2.0 * h3) - 2.0 * f(x + h3) + 2.0 * f(x - h3) - f(x - 2.0 * h3)) / (2.0 * h3 * h3 * h3);
    [d1, d2, d3]
}

/// Largest relative deviation `|jet − fd| / max(1, |fd|)` of `u_x`,
/// `u_xx`, `u_xxx` over `count` random composites.
pub fn jet_fd_deviation(seed: u64, count: usize) -> [f64; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 3];
    for _ in 0..count {
        let e = Expr::random(&mut rng, 3);
        let x = rng.random_range(-2.0..2.0);
        let jet = e.jet(x);
        let fd = finite_differences(|x| e.value(x), x, 1e-5, 1e-4, 2e-3);
        for (k, (a, b)) in [jet.vx, jet.vxx, jet.vxxx].iter().zip(fd).enumerate() {
            worst[k] = worst[k].max((a - b).abs() / b.abs().max(1.0));
        }
    }
    worst
}

/// Normwise relative deviation `‖g − g_fd‖∞ / ‖g_fd‖∞` of the composite
/// loss gradient of a 2-8-1 sine network (central differences, step
/// `1e-5`).
pub fn loss_gradient_fd_deviation(case: CaseName, seed: u64) -> Result<f64> {
    let spec = CaseSpec::preset(case);
    let counts = SamplingConfig { n_ic: 12, n_f: 40, n_b: 6, n_t: 5, n_q: 24 };
    let ts = build_trainset(&spec.domain, seed, &counts)?;
    let problem = LossProblem::new(spec, &ts);
    let mut net = Mlp::init_with(seed, 1, 8, Activation::Sine)?;
    let mut w = WeightState::new(Mode::StructurePreserving);
    w.gamma = 1.7;
    w.omega = 0.6;
    let (_, grad) = problem.total_loss(&net, &w)?;
    let x0 = net.flatten().to_vec();
    let h = 1e-5;
    let mut fd = vec![0.0; x0.len()];
    for i in 0..x0.len() {
        let mut x = x0.clone();
        x[i] = x0[i] + h;
        net.unflatten(&x)?;
        let fp = problem.loss_values(&net, &w)?.total;
        x[i] = x0[i] - h;
        net.unflatten(&x)?;
        let fm = problem.loss_values(&net, &w)?.total;
        fd[i] = (fp - fm) / (2.0 * h);
    }
    let scale = fd.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let diff = grad.iter().zip(&fd).fold(0.0f64, |a, (g, f)| a.max((g - f).abs()));
    Ok(diff / scale)
}

/// `(‖x*‖, iterations)` on `Σ i x_i²` from ones in 10-D.
pub fn quadratic_benchmark() -> Result<(f64, usize)> {
    let cfg = LbfgsConfig { max_iter: 50, grad_tol: 0.0, ..LbfgsConfig::default() };
    let res = minimize_fn(
        |x| {
            let f = x.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v * v).sum();
            let g = x.iter().enumerate().map(|(i, v)| 2.0 * (i + 1) as f64 * v).collect();
            Ok((f, g))
        },
        &[1.0; 10],
        &cfg,
    )?;
    Ok((res.x.iter().map(|v| v * v).sum::<f64>().sqrt(), res.iterations))
}

/// `(distance to (1, 1), iterations)` on Rosenbrock from (−1.2, 1).
pub fn rosenbrock_benchmark() -> Result<(f64, usize)> {
    let cfg = LbfgsConfig { max_iter: 200, ..LbfgsConfig::default() };
    let res = minimize_fn(
        |x| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            Ok((f, vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)]))
        },
        &[-1.2, 1.0],
        &cfg,
    )?;
    Ok((((res.x[0] - 1.0).powi(2) + (res.x[1] - 1.0).powi(2)).sqrt(), res.iterations))
}

/// Max error of the spectral solve of the `c = 1` soliton at `t = 1`.
pub fn oracle_soliton_error() -> Result<f64> {
    let spec = CaseSpec::preset(CaseName::OneSoliton);
    let cfg = SpectralConfig::new(spec.domain.x_min, spec.domain.x_max);
    let snaps = Etdrk4::new(cfg, spec.params)?.solve(|x| soliton(0.0, x, 1.0, 0.0), &[1.0])?;
    Ok(cfg
        .nodes()
        .iter()
        .zip(&snaps[0].u)
        .map(|(&x, u)| (u - soliton(1.0, x, 1.0, 0.0)).abs())
        .fold(0.0, f64::max))
}

/// `(max mass drift, max energy drift)` of the default oracle run of a
/// case sampled at `samples + 1` equispaced times.
pub fn oracle_drifts(case: CaseName, samples: usize) -> Result<(f64, f64)> {
    let spec = CaseSpec::preset(case);
    let cfg = SpectralConfig::new(spec.domain.x_min, spec.domain.x_max);
    let times = crate::experiments::time_grid(spec.domain.t_max, samples + 1);
    let snaps = Etdrk4::new(cfg, spec.params)?.solve(|x| spec.initial(x), &times)?;
    let (m0, e0) = (snaps[0].mass(), snaps[0].energy(&spec.params));
    Ok(snaps.iter().fold((0.0f64, 0.0f64), |(m, e), s| {
        (m.max((s.mass() - m0).abs()), e.max((s.energy(&spec.params) - e0).abs()))
    }))
}

/// Max change of the cosine field at `t = 1` when the step is halved.
pub fn oracle_dt_halving() -> Result<f64> {
    let spec = CaseSpec::preset(CaseName::Cosine);
    let run = |dt: f64| {
        let cfg = SpectralConfig { dt, ..SpectralConfig::new(spec.domain.x_min, spec.domain.x_max) };
        Etdrk4::new(cfg, spec.params)?.solve(|x| spec.initial(x), &[1.0])
    };
    let (a, b) = (run(1e-4)?, run(5e-5)?);
    Ok(a[0].u.iter().zip(&b[0].u).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

/// Runs the full property suite.
pub fn run_checks() -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let jet = jet_fd_deviation(2024, 100);
    out.push(CheckResult::below("jet u_x vs finite differences", jet[0], 1e-6));
    out.push(CheckResult::below("jet u_xx vs finite differences", jet[1], 1e-5));
    out.push(CheckResult::below("jet u_xxx vs finite differences", jet[2], 1e-3));
    for case in CaseName::ALL {
        let d = loss_gradient_fd_deviation(case, 3)?;
        out.push(CheckResult::below(format!("loss gradient vs finite differences ({case})"), d, 1e-5));
    }
    let (q, qi) = quadratic_benchmark()?;
    out.push(CheckResult::below(format!("L-BFGS quadratic ({qi} iterations)"), q, 1e-10));
    let (r, ri) = rosenbrock_benchmark()?;
    out.push(CheckResult::below(format!("L-BFGS Rosenbrock ({ri} iterations)"), r, 1e-8));
    out.push(CheckResult::below("oracle soliton error at t = 1", oracle_soliton_error()?, 1e-6));
    for case in CaseName::ALL {
        let (m, e) = oracle_drifts(case, 20)?;
        out.push(CheckResult::below(format!("oracle mass drift ({case})"), m, 1e-10));
        out.push(CheckResult::below(format!("oracle energy drift ({case})"), e, 1e-8));
    }
    out.push(CheckResult::below("oracle cosine change under dt halving", oracle_dt_halving()?, 1e-8));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_stencils_on_polynomials() {
        // x⁴ at 1: derivatives 4, 12, 24 up to the stencils' truncation.
        let d = finite_differences(|x| x.powi(4), 1.0, 1e-4, 1e-3, 1e-2);
        assert!((d[0] - 4.0).abs() < 1e-7);
        assert!((d[1] - 12.0).abs() < 1e-5);
        assert!((d[2] - 24.0).abs() < 1e-3);
    }

    #[test]
    fn expressions_agree_on_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let e = Expr::random(&mut rng, 3);
            assert!((e.jet(0.3).v - e.value(0.3)).abs() < 1e-14);
        }
    }

    #[test]
    fn small_suite_values() {
        let jet = jet_fd_deviation(5, 20);
        assert!(jet[0] < 1e-6 && jet[1] < 1e-5 && jet[2] < 1e-3, "{jet:?}");
        assert!(loss_gradient_fd_deviation(CaseName::OneSoliton, 1).unwrap() < 1e-5);
    }
}
