//! Training runs, their evaluation artifacts and the SP/vanilla ablation.

mod ablation;
mod evaluate;
mod train;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{self, RunConfig};
use crate::error::{Error, Result};
use crate::network::{load_checkpoint, save_checkpoint, Mlp};
use crate::optimizer::Termination;
use crate::physics::{energy, mass, UniformGrid};

pub use ablation::{
    ablation_table, parse_ablation_csv, parse_ablation_text, run_ablation, table_times, AblationRow, AblationTable,
};
pub use evaluate::{
    contour_grid, invariant_series, l2_relative_error, time_grid, ContourGrid, Field, FnField, InvariantRow,
    Reference,
};
pub use train::{trace_csv, train, TraceRow, TrainOutcome, TRACE_HEADER};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CONFIG_FILE: &str = "config.txt";
pub const SUMMARY_FILE: &str = "summary.json";

/// Evaluation grid sizes.
pub const SERIES_TIMES: usize = 61;
pub const SERIES_NODES: usize = 401;
pub const CONTOUR_TIMES: usize = 200;
pub const CONTOUR_NODES: usize = 400;
pub const PROFILE_COUNT: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Relative L2 error over the whole contour grid.
    pub l2_relative_error: f64,
    /// Relative L2 error of the final time slice.
    pub final_l2_relative_error: f64,
    pub max_abs_error: f64,
    pub final_abs_error: f64,
    /// max_t |M(t) − M(0)| of the network.
    pub max_mass_drift: f64,
    pub max_energy_drift: f64,
    /// max_t |M(t) − M_ref(0)|, the reference computed on the same grid.
    pub max_mass_deviation: f64,
    pub max_energy_deviation: f64,
    pub reference_mass: f64,
    pub reference_energy: f64,
    pub final_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub termination: Termination,
    pub message: Option<String>,
    pub iterations: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub case: String,
    pub mode: String,
    pub seed: u64,
    pub reference: String,
    pub config: BTreeMap<String, String>,
    pub metrics: Metrics,
    pub optimizer: OptimizerReport,
    pub wall_seconds: f64,
}

impl Summary {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Artifact { path: path.into(), message: e.to_string() })
    }

    pub fn failed(&self) -> bool {
        self.optimizer.termination == Termination::LineSearchFailed
    }
}

/// Where a completed run put its files.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub checkpoint: PathBuf,
    pub trace: PathBuf,
    pub invariants: PathBuf,
    pub profiles: Vec<PathBuf>,
    pub contour: PathBuf,
    pub summary: Summary,
    /// Evaluated series, kept for callers that tabulate it.
    pub series: Vec<InvariantRow>,
}

/// Rendered evaluation files of one network, keyed by file name.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub files: Vec<(String, String)>,
    pub series: Vec<InvariantRow>,
    pub metrics: Metrics,
    pub reference: String,
}

pub fn profile_times(t_max: f64) -> Vec<f64> {
    time_grid(t_max, PROFILE_COUNT)
}

pub fn profile_file_name(t: f64) -> String {
    format!("profiles_{t:.3}.csv")
}

/// Renders `invariants.csv`, the profile files and `contour.csv` for `net`.
pub fn evaluate_run(net: &Mlp, config: &RunConfig, final_loss: f64) -> Result<Evaluation> {
    let case = config.case_spec();
    let dom = case.domain;
    let series_times = time_grid(dom.t_max, SERIES_TIMES);
    let contour_times = time_grid(dom.t_max, CONTOUR_TIMES);
    let profiles = profile_times(dom.t_max);
    let mut all: Vec<f64> = series_times.iter().chain(&contour_times).chain(&profiles).copied().collect();
    all.sort_by(f64::total_cmp);
    let reference = Reference::for_case(&case, &all, config.oracle_modes, config.oracle_dt)?;

    let grid = UniformGrid::new(dom.x_min, dom.x_max, SERIES_NODES)?;
    let series = invariant_series(net, &case, &reference, &series_times, &grid)?;
    let xs = grid.nodes();
    let (r0, r0x) = reference.slice(0.0, &xs)?;
    let reference_mass = mass(&r0, &grid)?;
    let reference_energy = energy(&r0, &r0x, &grid, &case.params)?;

    let mut files = Vec::new();
    let mut inv = String::from("t,mass,energy,error\n");
    for r in &series {
        let _ = writeln!(inv, "{},{:e},{:e},{:e}", r.t, r.mass, r.energy, r.error);
    }
    files.push(("invariants.csv".to_string(), inv));

    for &t in &profiles {
        let pts: Vec<_> = xs.iter().map(|&x| crate::network::Point::new(t, x)).collect();
        let pred = net.eval_values(&pts);
        let (r, _) = reference.slice(t, &xs)?;
        let mut s = String::from("x,u_pred,u_ref\n");
        for ((x, p), q) in xs.iter().zip(&pred).zip(&r) {
            let _ = writeln!(s, "{x},{p:e},{q:e}");
        }
        files.push((profile_file_name(t), s));
    }

    let cxs = UniformGrid::new(dom.x_min, dom.x_max, CONTOUR_NODES)?.nodes();
    let contour = contour_grid(net, &reference, &contour_times, &cxs)?;
    let mut s = String::from("t,x,u_pred,u_ref,abs_err\n");
    for (i, t) in contour.times.iter().enumerate() {
        for (j, x) in contour.xs.iter().enumerate() {
            let k = i * cxs.len() + j;
            let (p, q) = (contour.pred[k], contour.reference[k]);
            let _ = writeln!(s, "{t},{x},{p:e},{q:e},{:e}", (p - q).abs());
        }
    }
    files.push(("contour.csv".to_string(), s));

    let (m0, e0) = (series[0].mass, series[0].energy);
    let last = series.last().expect("series is non-empty");
    let max = |f: &dyn Fn(&InvariantRow) -> f64| series.iter().map(f).fold(0.0f64, f64::max);
    let metrics = Metrics {
        l2_relative_error: contour.l2_relative_error()?,
        final_l2_relative_error: contour.slice_error(contour_times.len() - 1)?,
        max_abs_error: max(&|r| r.error),
        final_abs_error: last.error,
        max_mass_drift: max(&|r| (r.mass - m0).abs()),
        max_energy_drift: max(&|r| (r.energy - e0).abs()),
        max_mass_deviation: max(&|r| (r.mass - reference_mass).abs()),
        max_energy_deviation: max(&|r| (r.energy - reference_energy).abs()),
        reference_mass,
        reference_energy,
        final_loss,
    };
    Ok(Evaluation { files, series, metrics, reference: reference.name().to_string() })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn summary_for(config: &RunConfig, eval: &Evaluation, optimizer: OptimizerReport, wall_seconds: f64) -> Summary {
    Summary {
        case: config.case.to_string(),
        mode: config.mode.to_string(),
        seed: config.seed,
        reference: eval.reference.clone(),
        config: config.to_map(),
        metrics: eval.metrics,
        optimizer,
        wall_seconds,
    }
}

/// Trains `config` and writes every artifact into `dir`.
pub fn run_case(config: &RunConfig, dir: impl AsRef<Path>, progress: Option<&mut dyn FnMut(&TraceRow)>) -> Result<RunArtifacts> {
    let dir = dir.as_ref();
    config.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(dir, CONFIG_FILE, &config.to_text())?;
    let outcome = train(config, progress)?;
    if config.dump_points {
        outcome.trainset.write_csv(&config.case_spec().domain, dir.join("points.csv"))?;
    }
    let checkpoint = dir.join(CHECKPOINT_FILE);
    save_checkpoint(&outcome.net, &checkpoint)?;
    let trace = write(dir, "trace.csv", &trace_csv(&outcome.trace))?;
    let final_loss = outcome.trace.last().map(|r| r.loss.total).unwrap_or(f64::NAN);
    let eval = evaluate_run(&outcome.net, config, final_loss)?;
    let mut paths = Vec::new();
    for (name, contents) in &eval.files {
        paths.push(write(dir, name, contents)?);
    }
    let optimizer = OptimizerReport {
        termination: outcome.termination,
        message: outcome.message.clone(),
        iterations: outcome.iterations,
        evaluations: outcome.evaluations,
    };
    let summary = summary_for(config, &eval, optimizer, outcome.wall_s);
    write(dir, SUMMARY_FILE, &summary.to_json()?)?;
    let profiles = paths[1..=PROFILE_COUNT].to_vec();
    Ok(RunArtifacts {
        dir: dir.to_path_buf(),
        checkpoint,
        trace,
        invariants: paths[0].clone(),
        profiles,
        contour: paths[PROFILE_COUNT + 1].clone(),
        summary,
        series: eval.series,
    })
}

/// Loads the configuration stored in a run directory.
pub fn load_run_config(dir: impl AsRef<Path>) -> Result<RunConfig> {
    config::resolve(&config::load_assignments(dir.as_ref().join(CONFIG_FILE))?)
}

/// Result of regenerating one file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FileCheck {
    pub name: String,
    pub identical: bool,
}

/// Regenerated contents of a run directory.
#[derive(Clone, Debug)]
pub struct Regenerated {
    pub files: Vec<(String, String)>,
    pub series: Vec<InvariantRow>,
    pub summary: Summary,
}

/// Re-derives the evaluation files and summary of a run from its
/// checkpoint, configuration and recorded optimizer facts.
pub fn regenerate_run(dir: impl AsRef<Path>) -> Result<Regenerated> {
    let dir = dir.as_ref();
    let config = load_run_config(dir)?;
    let net = load_checkpoint(dir.join(CHECKPOINT_FILE))?;
    let stored = Summary::load(dir.join(SUMMARY_FILE))?;
    let eval = evaluate_run(&net, &config, stored.metrics.final_loss)?;
    let summary = summary_for(&config, &eval, stored.optimizer.clone(), stored.wall_seconds);
    let mut files = eval.files.clone();
    files.push((SUMMARY_FILE.to_string(), summary.to_json()?));
    Ok(Regenerated { files, series: eval.series, summary })
}

/// Compares regenerated files with what is on disk; with `overwrite` the
/// regenerated versions replace them.
pub fn compare_files(dir: &Path, files: &[(String, String)], overwrite: bool) -> Result<Vec<FileCheck>> {
    let mut checks = Vec::new();
    for (name, contents) in files {
        let path = dir.join(name);
        let identical = std::fs::read(&path).map(|b| b == contents.as_bytes()).unwrap_or(false);
        if overwrite && !identical {
            write(dir, name, contents)?;
        }
        checks.push(FileCheck { name: name.clone(), identical });
    }
    Ok(checks)
}

/// Regenerates a run directory or an ablation directory.
pub fn report(dir: impl AsRef<Path>, overwrite: bool) -> Result<Vec<FileCheck>> {
    let dir = dir.as_ref();
    if dir.join(ablation::TABLE_CSV).exists() {
        return ablation::report_ablation(dir, overwrite);
    }
    let regen = regenerate_run(dir)?;
    compare_files(dir, &regen.files, overwrite)
}
