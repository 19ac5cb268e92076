use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kdv_spinn::check::run_checks;
use kdv_spinn::config::{load_assignments, resolve, Assignment};
use kdv_spinn::experiments::{report, run_ablation, run_case, time_grid, TraceRow};
use kdv_spinn::reference::{write_snapshots, Etdrk4, SpectralConfig};
use kdv_spinn::{Error, RunConfig};

/// Output root used when `--out` is not given and `KDV_SPINN_OUT` is unset.
const DEFAULT_ROOT: &str = "runs";
const PROGRESS_EVERY: usize = 100;

#[derive(Parser)]
#[command(name = "kdv-spinn", version, about = "Structure-preserving PINN solver for the KdV equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and write its run directory.
    Train(RunArgs),
    /// Train SP and vanilla variants for each learning rate and tabulate them.
    Ablation {
        #[command(flatten)]
        run: RunArgs,
        /// Learning rates to compare; each gets an `lr_<value>` subdirectory.
        #[arg(long = "lr", value_name = "LR", num_args = 1.., default_values_t = vec![0.1, 1.0])]
        lrs: Vec<f64>,
        /// Runs trained concurrently within one learning rate.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Solve the case with the spectral reference solver.
    Oracle {
        #[command(flatten)]
        run: RunArgs,
        /// Number of equispaced snapshot times including both ends.
        #[arg(long, default_value_t = 61)]
        samples: usize,
    },
    /// Regenerate the evaluation files of a run or ablation directory and
    /// compare them with what is on disk.
    Report {
        dir: PathBuf,
        /// Replace files that differ.
        #[arg(long)]
        write: bool,
    },
    /// Run the derivative, optimizer and oracle self-checks.
    Check,
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    case: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    depth: Option<String>,
    #[arg(long)]
    width: Option<String>,
    #[arg(long = "max-iter")]
    max_iter: Option<String>,
    #[arg(long = "n-f")]
    n_f: Option<String>,
    #[arg(long = "t-max")]
    t_max: Option<String>,
    /// Any other configuration key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory. Defaults to a directory under `$KDV_SPINN_OUT`
    /// (or `runs`) named after the run.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut assignments = match &self.config {
            Some(path) => load_assignments(path)?,
            None => Vec::new(),
        };
        let flags = [
            ("case", &self.case),
            ("mode", &self.mode),
            ("seed", &self.seed),
            ("depth", &self.depth),
            ("width", &self.width),
            ("max_iter", &self.max_iter),
            ("n_f", &self.n_f),
            ("t_max", &self.t_max),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                assignments.push(Assignment { line: 0, key: key.into(), value: v.clone() });
            }
        }
        for s in &self.set {
            let (key, value) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{s}`")))?;
            let key = key.trim();
            if !kdv_spinn::config::KEYS.contains(&key) {
                return Err(Error::Config(format!("unknown key `{key}`")));
            }
            assignments.push(Assignment { line: 0, key: key.into(), value: value.trim().into() });
        }
        resolve(&assignments)
    }

    fn out_dir(&self, default_name: String) -> PathBuf {
        self.out.clone().unwrap_or_else(|| output_root().join(default_name))
    }
}

fn output_root() -> PathBuf {
    std::env::var_os("KDV_SPINN_OUT").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_ROOT))
}

fn is_config_error(e: &Error) -> bool {
    matches!(e, Error::Config(_) | Error::ConfigLine { .. } | Error::InvalidDomain(_))
}

fn progress(row: &TraceRow) {
    if row.iteration % PROGRESS_EVERY == 0 {
        log::info!("iteration {:5}  loss {:.4e}  |g| {:.3e}", row.iteration, row.loss.total, row.grad_norm);
    }
}

fn train(args: &RunArgs) -> Result<bool, Error> {
    let config = args.resolve()?;
    let dir = args.out_dir(format!("{}_{}_seed{}", config.case, config.mode, config.seed));
    let mut p = progress;
    let run = run_case(&config, &dir, Some(&mut p))?;
    let m = &run.summary.metrics;
    println!("run written to {}", dir.display());
    println!(
        "termination {}  iterations {}  relative L2 {:.3e}  mass drift {:.3e}  energy drift {:.3e}",
        run.summary.optimizer.termination.as_str(),
        run.summary.optimizer.iterations,
        m.l2_relative_error,
        m.max_mass_drift,
        m.max_energy_drift
    );
    Ok(!run.summary.failed())
}

fn ablation(args: &RunArgs, lrs: &[f64], jobs: usize) -> Result<bool, Error> {
    let base = args.resolve()?;
    let root = args.out_dir(format!("ablation_{}_seed{}", base.case, base.seed));
    let mut ok = true;
    for &lr in lrs {
        let mut config = base.clone();
        config.lbfgs.initial_step = lr;
        config.validate()?;
        let dir = root.join(format!("lr_{lr}"));
        log::info!("ablation at lr {lr} into {}", dir.display());
        let outcome = run_ablation(&config, &dir, jobs)?;
        println!("{}", outcome.table.to_text());
        ok &= !outcome.sp.summary.failed() && !outcome.vanilla.summary.failed();
    }
    println!("ablation written to {}", root.display());
    Ok(ok)
}

fn oracle(args: &RunArgs, samples: usize) -> Result<bool, Error> {
    if samples < 2 {
        return Err(Error::Config("--samples must be at least 2".into()));
    }
    let config = args.resolve()?;
    let case = config.case_spec();
    let dir = args.out.clone().unwrap_or_else(|| output_root().join("oracle").join(config.case.as_str()));
    let spectral = SpectralConfig {
        n_modes: config.oracle_modes,
        dt: config.oracle_dt,
        ..SpectralConfig::new(case.domain.x_min, case.domain.x_max)
    };
    let times = time_grid(case.domain.t_max, samples);
    let snaps = Etdrk4::new(spectral, case.params)?.solve(|x| case.initial(x), &times)?;
    write_snapshots(&dir, &snaps, &case.params)?;
    let (m0, e0) = (snaps[0].mass(), snaps[0].energy(&case.params));
    let (dm, de) = snaps.iter().fold((0.0f64, 0.0f64), |(m, e), s| {
        (m.max((s.mass() - m0).abs()), e.max((s.energy(&case.params) - e0).abs()))
    });
    println!("oracle written to {}", dir.display());
    println!("mass {m0:.10}  energy {e0:.10}  max mass drift {dm:.3e}  max energy drift {de:.3e}");
    Ok(true)
}

fn report_cmd(dir: &Path, write: bool) -> Result<bool, Error> {
    let checks = report(dir, write)?;
    let mut same = true;
    for c in &checks {
        let status = match (c.identical, write) {
            (true, _) => "identical",
            (false, true) => "rewritten",
            (false, false) => "DIFFERS",
        };
        println!("{status:>9}  {}", c.name);
        same &= c.identical;
    }
    Ok(same || write)
}

fn check() -> Result<bool, Error> {
    let results = run_checks()?;
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} checks, {failed} failed", results.len());
    Ok(failed == 0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => train(args),
        Command::Ablation { run, lrs, jobs } => ablation(run, lrs, *jobs),
        Command::Oracle { run, samples } => oracle(run, *samples),
        Command::Report { dir, write } => report_cmd(dir, *write),
        Command::Check => check(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
