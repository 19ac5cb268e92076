//! Limited-memory BFGS with a strong-Wolfe line search.
//!
//! The objective is frozen during each line search; between iterations a
//! hook may change it (e.g. reweight loss terms) and ask for a fresh
//! evaluation at the current point.

mod line_search;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use line_search::{dot, LineSearch, Sample};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LbfgsConfig {
    /// Outer iterations.
    pub max_iter: usize,
    pub memory: usize,
    /// First trial step of every line search (the "learning rate").
    pub initial_step: f64,
    pub c1: f64,
    pub c2: f64,
    /// Stop when `‖g‖∞` falls to this.
    pub grad_tol: f64,
    /// Stop when `‖t d‖∞` falls to this.
    pub step_tol: f64,
    /// Evaluations allowed per line search.
    pub max_line_evals: usize,
    /// Halvings allowed when a trial step gives a non-finite value.
    pub max_shrink: usize,
    /// A pair is skipped when `sᵀy ≤ curvature_eps ‖s‖ ‖y‖`.
    pub curvature_eps: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            max_iter: 3000,
            memory: 50,
            initial_step: 1.0,
            c1: 1e-4,
            c2: 0.9,
            grad_tol: 1e-9,
            step_tol: 1e-12,
            max_line_evals: 25,
            max_shrink: 20,
            curvature_eps: 1e-10,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Config(format!(
                "Wolfe constants need 0 < c1 < c2 < 1 (got c1 = {}, c2 = {})",
                self.c1, self.c2
            )));
        }
        if self.memory == 0 {
            return Err(Error::Config("L-BFGS memory must be at least 1".into()));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::Config(format!("initial step must be positive (got {})", self.initial_step)));
        }
        if self.max_line_evals == 0 {
            return Err(Error::Config("line search needs at least one evaluation".into()));
        }
        Ok(())
    }
}

/// What the optimizer does after a hook call.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    /// The objective changed; re-evaluate at the current point.
    Reevaluate,
    Stop,
}

pub trait Objective {
    /// Value and gradient at `x`. Non-finite results are allowed; the line
    /// search treats them as a failed trial.
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Called after every completed iteration.
    fn after_iteration(&mut self, _record: &IterRecord, _x: &[f64]) -> Result<Control> {
        Ok(Control::Continue)
    }
}

/// Adapter turning a closure into an [`Objective`] without a hook.
pub struct FnObjective<F>(pub F);

impl<F> Objective for FnObjective<F>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        (self.0)(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    /// 1-based.
    pub iteration: usize,
    pub loss: f64,
    pub grad_norm: f64,
    /// `‖x_{k+1} − x_k‖₂`.
    pub step: f64,
    /// Accepted step multiplier along the search direction.
    pub t: f64,
    pub line_evals: usize,
    /// Index (0-based, over all objective evaluations) of the evaluation
    /// whose value was accepted.
    pub accepted_eval: usize,
    pub wolfe: bool,
    /// Whether the curvature pair of this step entered the history.
    pub pair_stored: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradTol,
    StepTol,
    MaxIter,
    LineSearchFailed,
    Stopped,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::GradTol => "grad_tol",
            Termination::StepTol => "step_tol",
            Termination::MaxIter => "max_iter",
            Termination::LineSearchFailed => "line_search_failed",
            Termination::Stopped => "stopped",
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimResult {
    /// Best-seen point and its value.
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Detail when the run ended on a failure.
    pub message: Option<String>,
    pub history: Vec<IterRecord>,
}

/// Curvature-pair history with two-loop recursion.
#[derive(Clone, Debug)]
pub struct History {
    capacity: usize,
    eps: f64,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl History {
    pub fn new(capacity: usize, eps: f64) -> Self {
        History { capacity, eps, pairs: VecDeque::with_capacity(capacity) }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores `(s, y)` unless it fails the curvature guard. Returns whether
    /// it was stored.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        let guard = self.eps * dot(&s, &s).sqrt() * dot(&y, &y).sqrt();
        if !(sy > guard) || !sy.is_finite() {
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
        true
    }

    /// `−H g` with `H₀ = γ I`, `γ = sᵀy / yᵀy` of the newest pair.
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alpha = vec![0.0; self.pairs.len()];
        for (i, (s, y, rho)) in self.pairs.iter().enumerate().rev() {
            let a = rho * dot(s, &q);
            alpha[i] = a;
            axpy(-a, y, &mut q);
        }
        if let Some((_, y, rho)) = self.pairs.back() {
            let gamma = 1.0 / (rho * dot(y, y));
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for (i, (s, y, rho)) in self.pairs.iter().enumerate() {
            let b = rho * dot(y, &q);
            axpy(alpha[i] - b, s, &mut q);
        }
        q
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn norm2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

struct Evaluator<'a, O: Objective> {
    objective: &'a mut O,
    count: usize,
}

impl<O: Objective> Evaluator<'_, O> {
    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>, usize)> {
        let (f, g) = self.objective.evaluate(x)?;
        if g.len() != x.len() {
            return Err(Error::LengthMismatch { what: "gradient", expected: x.len(), got: g.len() });
        }
        let idx = self.count;
        self.count += 1;
        Ok((f, g, idx))
    }

    fn start(&mut self, x: &[f64], what: &str) -> Result<Sample> {
        let (f, g, eval) = self.eval(x)?;
        if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Optimizer(format!("non-finite loss or gradient {what}")));
        }
        Ok(Sample { t: 0.0, f, g, gtd: 0.0, eval })
    }
}

pub fn minimize<O: Objective>(objective: &mut O, x0: &[f64], config: &LbfgsConfig) -> Result<OptimResult> {
    config.validate()?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Optimizer("non-finite initial point".into()));
    }
    let mut ev = Evaluator { objective, count: 0 };
    let mut x = x0.to_vec();
    let mut cur = ev.start(&x, "at the initial point")?;
    let mut best = (cur.f, x.clone());
    let mut history = History::new(config.memory, config.curvature_eps);
    let mut records = Vec::new();
    let search = LineSearch {
        c1: config.c1,
        c2: config.c2,
        max_evals: config.max_line_evals,
        tolerance: config.step_tol,
        max_shrink: config.max_shrink,
    };
    let finish = |x: (f64, Vec<f64>), records: Vec<IterRecord>, evals, termination, message| OptimResult {
        f: x.0,
        x: x.1,
        iterations: records.len(),
        evaluations: evals,
        termination,
        message,
        history: records,
    };

    if norm_inf(&cur.g) <= config.grad_tol {
        return Ok(finish(best, records, ev.count, Termination::GradTol, None));
    }
    for iteration in 1..=config.max_iter {
        let mut d = history.direction(&cur.g);
        let mut gtd = dot(&cur.g, &d);
        if !(gtd < 0.0) {
            // Not a descent direction: restart from steepest descent.
            history.clear();
            d = cur.g.iter().map(|v| -v).collect();
            gtd = dot(&cur.g, &d);
        }
        let t0 = if history.is_empty() {
            config.initial_step * (1.0 / cur.g.iter().map(|v| v.abs()).sum::<f64>()).min(1.0)
        } else {
            config.initial_step
        };
        cur.gtd = gtd;
        cur.t = 0.0;
        let base = x.clone();
        let outcome = {
            let mut trial = vec![0.0; x.len()];
            search.run(&cur, &d, t0, |t| {
                for ((p, b), di) in trial.iter_mut().zip(&base).zip(&d) {
                    *p = b + t * di;
                }
                ev.eval(&trial)
            })
        };
        let outcome = match outcome {
            Ok(o) => o,
            Err(Error::Optimizer(msg)) => {
                return Ok(finish(best, records, ev.count, Termination::LineSearchFailed, Some(msg)));
            }
            Err(e) => return Err(e),
        };
        let new = outcome.accepted.clone();
        let cur_t = new.t;
        let s: Vec<f64> = d.iter().map(|v| new.t * v).collect();
        let y: Vec<f64> = new.g.iter().zip(&cur.g).map(|(a, b)| a - b).collect();
        let step_inf = norm_inf(&s);
        let step = norm2(&s);
        axpy(1.0, &s, &mut x);
        let pair_stored = new.t > 0.0 && history.push(s, y);
        cur = Sample { t: 0.0, gtd: 0.0, ..new };
        if cur.f < best.0 {
            best = (cur.f, x.clone());
        }
        let record = IterRecord {
            iteration,
            loss: cur.f,
            grad_norm: norm2(&cur.g),
            step,
            t: cur_t,
            line_evals: outcome.evals,
            accepted_eval: cur.eval,
            wolfe: outcome.wolfe,
            pair_stored,
        };
        records.push(record);
        match ev.objective.after_iteration(&record, &x)? {
            Control::Continue => {}
            Control::Stop => return Ok(finish(best, records, ev.count, Termination::Stopped, None)),
            Control::Reevaluate => {
                cur = ev.start(&x, "after an objective change")?;
                best = (cur.f, x.clone());
            }
        }
        if norm_inf(&cur.g) <= config.grad_tol {
            return Ok(finish(best, records, ev.count, Termination::GradTol, None));
        }
        if step_inf <= config.step_tol {
            let msg = (!outcome.wolfe).then(|| "line search made no progress".to_string());
            return Ok(finish(best, records, ev.count, Termination::StepTol, msg));
        }
    }
    Ok(finish(best, records, ev.count, Termination::MaxIter, None))
}

/// [`minimize`] for a plain closure.
pub fn minimize_fn<F>(f: F, x0: &[f64], config: &LbfgsConfig) -> Result<OptimResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    minimize(&mut FnObjective(f), x0, config)
}
