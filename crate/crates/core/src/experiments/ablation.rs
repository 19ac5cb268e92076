//! SP versus vanilla comparison tables.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{compare_files, regenerate_run, run_case, time_grid, FileCheck, InvariantRow, RunArtifacts, Summary};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::loss::Mode;
use crate::physics::CaseName;

pub(crate) const TABLE_CSV: &str = "ablation.csv";
pub(crate) const TABLE_TEXT: &str = "ablation.txt";
const CSV_HEADER: &str = "t,sp_mass,sp_energy,sp_error,vanilla_mass,vanilla_energy,vanilla_error";

/// Row times of the one-soliton comparison table.
const ONE_SOLITON_TIMES: [f64; 14] = [0.0, 0.05, 0.1, 0.6, 0.8, 1.0, 1.4, 1.8, 2.0, 2.2, 2.4, 2.6, 2.8, 3.0];

/// Table row times for a case on horizon `t_max`.
pub fn table_times(case: CaseName, t_max: f64) -> Vec<f64> {
    if case == CaseName::OneSoliton && t_max == 3.0 {
        ONE_SOLITON_TIMES.to_vec()
    } else {
        time_grid(t_max, 11)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub t: f64,
    pub sp: [f64; 3],
    pub vanilla: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub title: String,
    pub rows: Vec<AblationRow>,
}

fn pick(series: &[InvariantRow], t: f64, mode: &str) -> Result<[f64; 3]> {
    series
        .iter()
        .find(|r| (r.t - t).abs() < 1e-9)
        .map(|r| [r.mass, r.energy, r.error])
        .ok_or_else(|| Error::Config(format!("{mode} series has no row at t = {t}")))
}

/// Builds the table from an SP run and a vanilla run of the same case and
/// learning rate.
pub fn ablation_table(
    sp: (&Summary, &[InvariantRow]),
    vanilla: (&Summary, &[InvariantRow]),
    times: &[f64],
) -> Result<AblationTable> {
    let (sps, vas) = (sp.0, vanilla.0);
    if sps.mode != Mode::StructurePreserving.as_str() || vas.mode != Mode::Vanilla.as_str() {
        return Err(Error::Config(format!(
            "ablation needs an sp run and a vanilla run (got {} and {})",
            sps.mode, vas.mode
        )));
    }
    for key in ["case", "lr", "activation", "t_max"] {
        if sps.config.get(key) != vas.config.get(key) {
            return Err(Error::Config(format!("ablation runs differ in `{key}`")));
        }
    }
    let mut rows = Vec::with_capacity(times.len());
    for &t in times {
        rows.push(AblationRow { t, sp: pick(sp.1, t, "sp")?, vanilla: pick(vanilla.1, t, "vanilla")? });
    }
    let title = format!(
        "{}: learning rate = {}, {} activation",
        sps.case,
        sps.config.get("lr").map(String::as_str).unwrap_or("?"),
        sps.config.get("activation").map(String::as_str).unwrap_or("?"),
    );
    Ok(AblationTable { title, rows })
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e},{:e}",
                r.t, r.sp[0], r.sp[1], r.sp[2], r.vanilla[0], r.vanilla[1], r.vanilla[2]
            );
        }
        out
    }

    /// Aligned text: time, then mass, energy and error for each mode.
    pub fn to_text(&self) -> String {
        let mut out = format!("{}\n", self.title);
        let _ = writeln!(out, "{:>6}  {:^29}    {:^29}", "", "SP-PINN", "Vanilla PINN");
        let _ = writeln!(
            out,
            "{:>6}  {:>8} {:>9} {:>10}    {:>8} {:>9} {:>10}",
            "Time", "Mass", "Energy", "Error", "Mass", "Energy", "Error"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>6.2}  {:>8.4} {:>9.4} {:>10.2e}    {:>8.4} {:>9.4} {:>10.2e}",
                r.t, r.sp[0], r.sp[1], r.sp[2], r.vanilla[0], r.vanilla[1], r.vanilla[2]
            );
        }
        out
    }
}

fn parse_fields(line: &str, sep: Option<char>) -> Result<Vec<f64>> {
    let parts: Vec<&str> = match sep {
        Some(c) => line.split(c).collect(),
        None => line.split_whitespace().collect(),
    };
    let nums: Result<Vec<f64>, _> = parts.iter().map(|p| p.trim().parse::<f64>()).collect();
    match nums {
        Ok(v) if v.len() == 7 => Ok(v),
        _ => Err(Error::Config(format!("malformed table row `{line}`"))),
    }
}

fn row_of(v: &[f64]) -> AblationRow {
    AblationRow { t: v[0], sp: [v[1], v[2], v[3]], vanilla: [v[4], v[5], v[6]] }
}

pub fn parse_ablation_csv(text: &str) -> Result<Vec<AblationRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Config("ablation CSV header mismatch".into()));
    }
    lines.map(|l| parse_fields(l, Some(',')).map(|v| row_of(&v))).collect()
}

pub fn parse_ablation_text(text: &str) -> Result<Vec<AblationRow>> {
    text.lines().skip(3).map(|l| parse_fields(l, None).map(|v| row_of(&v))).collect()
}

/// Both runs and their table.
#[derive(Clone, Debug)]
pub struct AblationOutcome {
    pub table: AblationTable,
    pub sp: RunArtifacts,
    pub vanilla: RunArtifacts,
}

/// Trains the SP and vanilla variants of `base` into `dir/sp` and
/// `dir/vanilla` (concurrently when `jobs > 1`) and writes the table.
pub fn run_ablation(base: &RunConfig, dir: impl AsRef<Path>, jobs: usize) -> Result<AblationOutcome> {
    let dir = dir.as_ref();
    let mut sp_cfg = base.clone();
    sp_cfg.mode = Mode::StructurePreserving;
    let mut va_cfg = base.clone();
    va_cfg.mode = Mode::Vanilla;
    let (sp_dir, va_dir) = (dir.join("sp"), dir.join("vanilla"));
    let (sp, vanilla) = if jobs > 1 {
        std::thread::scope(|s| {
            let a = s.spawn(|| run_case(&sp_cfg, &sp_dir, None));
            let b = s.spawn(|| run_case(&va_cfg, &va_dir, None));
            (a.join().expect("sp run panicked"), b.join().expect("vanilla run panicked"))
        })
    } else {
        (run_case(&sp_cfg, &sp_dir, None), run_case(&va_cfg, &va_dir, None))
    };
    let (sp, vanilla) = (sp?, vanilla?);
    let times = table_times(base.case, base.t_max);
    let table = ablation_table((&sp.summary, &sp.series), (&vanilla.summary, &vanilla.series), &times)?;
    std::fs::write(dir.join(TABLE_CSV), table.to_csv()).map_err(|e| Error::io(dir.join(TABLE_CSV), e))?;
    std::fs::write(dir.join(TABLE_TEXT), table.to_text()).map_err(|e| Error::io(dir.join(TABLE_TEXT), e))?;
    Ok(AblationOutcome { table, sp, vanilla })
}

pub(crate) fn report_ablation(dir: &Path, overwrite: bool) -> Result<Vec<FileCheck>> {
    let sp = regenerate_run(dir.join("sp"))?;
    let va = regenerate_run(dir.join("vanilla"))?;
    let mut checks = Vec::new();
    for (sub, regen) in [("sp", &sp), ("vanilla", &va)] {
        for mut c in compare_files(&dir.join(sub), &regen.files, overwrite)? {
            c.name = format!("{sub}/{}", c.name);
            checks.push(c);
        }
    }
    let case: CaseName = sp.summary.case.parse()?;
    let t_max: f64 = sp.summary.config.get("t_max").and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
    let table = ablation_table((&sp.summary, &sp.series), (&va.summary, &va.series), &table_times(case, t_max))?;
    let files = vec![(TABLE_CSV.to_string(), table.to_csv()), (TABLE_TEXT.to_string(), table.to_text())];
    checks.extend(compare_files(dir, &files, overwrite)?);
    Ok(checks)
}
