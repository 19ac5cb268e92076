//! Training loop: L-BFGS on the composite loss with periodic reweighting.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::loss::{update_weights, LossBreakdown, LossProblem, WeightState};
use crate::network::Mlp;
use crate::optimizer::{minimize, Control, IterRecord, Objective, Termination};
use crate::sampling::{build_trainset, TrainSet};

/// One row of `trace.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: LossBreakdown,
    pub grad_norm: f64,
    pub step: f64,
    pub wall_s: f64,
}

pub const TRACE_HEADER: &str = "iteration,total,ic,pde,bc,mass,energy,gamma,omega,grad_norm,step,wall_s";

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = format!("{TRACE_HEADER}\n");
    for r in rows {
        let l = &r.loss;
        let _ = writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:.3}",
            r.iteration, l.total, l.ic, l.pde, l.bc, l.mass, l.energy, l.gamma, l.omega, r.grad_norm, r.step, r.wall_s
        );
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub net: Mlp,
    pub trainset: TrainSet,
    /// Row 0 describes the initial network.
    pub trace: Vec<TraceRow>,
    pub weights: WeightState,
    pub termination: Termination,
    pub message: Option<String>,
    pub iterations: usize,
    pub evaluations: usize,
    pub wall_s: f64,
}

struct Trainer<'a, 'p> {
    problem: &'a LossProblem,
    net: Mlp,
    weights: WeightState,
    /// Breakdown of every evaluation, indexed like the optimizer counts them.
    evals: Vec<LossBreakdown>,
    trace: Vec<TraceRow>,
    start: Instant,
    progress: Option<&'p mut dyn FnMut(&TraceRow)>,
}

impl Objective for Trainer<'_, '_> {
    fn evaluate(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.net.unflatten(x)?;
        match self.problem.total_loss(&self.net, &self.weights) {
            Ok((b, g)) => {
                self.evals.push(b);
                Ok((b.total, g))
            }
            Err(Error::NonFinite { .. }) => {
                let nan = f64::NAN;
                self.evals.push(LossBreakdown::assemble(nan, nan, nan, nan, nan, self.weights.gamma, self.weights.omega));
                Ok((nan, vec![nan; x.len()]))
            }
            Err(e) => Err(e),
        }
    }

    fn after_iteration(&mut self, rec: &IterRecord, x: &[f64]) -> Result<Control> {
        let row = TraceRow {
            iteration: rec.iteration,
            loss: self.evals[rec.accepted_eval],
            grad_norm: rec.grad_norm,
            step: rec.step,
            wall_s: self.start.elapsed().as_secs_f64(),
        };
        self.trace.push(row);
        if let Some(p) = self.progress.as_mut() {
            p(&row);
        }
        if !self.weights.due(rec.iteration) {
            return Ok(Control::Continue);
        }
        self.net.unflatten(x)?;
        let comps = self.problem.component_gradients(&self.net)?;
        let update = update_weights(&self.weights, &comps.pde, &comps.mass, &comps.energy)?;
        if let Some(w) = &update.warning {
            log::warn!("iteration {}: {w}", rec.iteration);
        }
        if update.state == self.weights {
            return Ok(Control::Continue);
        }
        self.weights = update.state;
        Ok(Control::Reevaluate)
    }
}

/// Trains a fresh network for `config`. `progress` sees every trace row
/// as it is produced.
pub fn train(config: &RunConfig, progress: Option<&mut dyn FnMut(&TraceRow)>) -> Result<TrainOutcome> {
    config.validate()?;
    let case = config.case_spec();
    let trainset = build_trainset(&case.domain, config.seed, &config.sampling)?;
    let problem = LossProblem::new(case, &trainset).with_anchor(config.invariant_anchor);
    let net = Mlp::init_scheme(config.seed, config.depth, config.width, config.activation, config.init)?;
    let mut weights = WeightState::new(config.mode);
    weights.update_period = config.weight_period;
    let start = Instant::now();
    let (initial, g0) = problem.total_loss(&net, &weights)?;
    let g0_norm = g0.iter().map(|g| g * g).sum::<f64>().sqrt();
    let x0 = net.flatten().to_vec();
    let mut trainer = Trainer {
        problem: &problem,
        net,
        weights,
        evals: Vec::new(),
        trace: vec![TraceRow { iteration: 0, loss: initial, grad_norm: g0_norm, step: 0.0, wall_s: 0.0 }],
        start,
        progress,
    };
    let result = minimize(&mut trainer, &x0, &config.lbfgs)?;
    let mut net = trainer.net;
    net.unflatten(&result.x)?;
    Ok(TrainOutcome {
        net,
        trainset,
        trace: trainer.trace,
        weights: trainer.weights,
        termination: result.termination,
        message: result.message,
        iterations: result.iterations,
        evaluations: result.evaluations,
        wall_s: start.elapsed().as_secs_f64(),
    })
}
