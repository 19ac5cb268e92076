//! Run configuration as flat `key = value` text.
//!
//! Blank lines and `#` comments are ignored. Later assignments win, and
//! command-line overrides are applied after the file. The case is resolved
//! first so that its presets (depth, horizon) act as defaults for the other
//! keys.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{InvariantAnchor, Mode};
use crate::network::{Activation, InitScheme};
use crate::optimizer::LbfgsConfig;
use crate::physics::{CaseName, CaseSpec};
use crate::sampling::SamplingConfig;

pub const KEYS: &[&str] = &[
    "case",
    "mode",
    "depth",
    "width",
    "activation",
    "init",
    "seed",
    "max_iter",
    "memory",
    "lr",
    "grad_tol",
    "step_tol",
    "n_ic",
    "n_f",
    "n_b",
    "n_t",
    "n_q",
    "t_max",
    "weight_period",
    "invariant_anchor",
    "oracle_modes",
    "oracle_dt",
    "dump_points",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub case: CaseName,
    pub mode: Mode,
    pub depth: usize,
    pub width: usize,
    pub activation: Activation,
    pub init: InitScheme,
    pub seed: u64,
    pub lbfgs: LbfgsConfig,
    pub sampling: SamplingConfig,
    /// Training and evaluation horizon.
    pub t_max: f64,
    /// Iterations between weight updates.
    pub weight_period: usize,
    /// Reference the invariant terms are measured against.
    pub invariant_anchor: InvariantAnchor,
    pub oracle_modes: usize,
    pub oracle_dt: f64,
    /// Write the sampled training points to `points.csv`.
    pub dump_points: bool,
}

/// Hidden-layer count of each case preset.
pub fn preset_depth(case: CaseName) -> usize {
    match case {
        CaseName::OneSoliton | CaseName::Cosine => 4,
        CaseName::TwoSoliton => 7,
    }
}

impl RunConfig {
    pub fn preset(case: CaseName) -> Self {
        RunConfig {
            case,
            mode: Mode::StructurePreserving,
            depth: preset_depth(case),
            width: 40,
            activation: Activation::Sine,
            init: InitScheme::default(),
            seed: 7,
            lbfgs: LbfgsConfig::default(),
            sampling: SamplingConfig::default(),
            t_max: CaseSpec::preset(case).domain.t_max,
            weight_period: 10,
            invariant_anchor: InvariantAnchor::default(),
            oracle_modes: 512,
            oracle_dt: 1e-4,
            dump_points: false,
        }
    }

    pub fn case_spec(&self) -> CaseSpec {
        CaseSpec::preset(self.case).with_horizon(self.t_max)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value.parse().map_err(|_| format!("invalid value `{value}` for `{key}`"))
        }
        match key {
            "case" => self.case = value.parse().map_err(|e: Error| e.to_string())?,
            "mode" => self.mode = value.parse().map_err(|e: Error| e.to_string())?,
            "init" => self.init = value.parse().map_err(|e: Error| e.to_string())?,
            "activation" => self.activation = value.parse().map_err(|e: Error| e.to_string())?,
            "depth" => self.depth = num(key, value)?,
            "width" => self.width = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "max_iter" => self.lbfgs.max_iter = num(key, value)?,
            "memory" => self.lbfgs.memory = num(key, value)?,
            "lr" => self.lbfgs.initial_step = num(key, value)?,
            "grad_tol" => self.lbfgs.grad_tol = num(key, value)?,
            "step_tol" => self.lbfgs.step_tol = num(key, value)?,
            "n_ic" => self.sampling.n_ic = num(key, value)?,
            "n_f" => self.sampling.n_f = num(key, value)?,
            "n_b" => self.sampling.n_b = num(key, value)?,
            "n_t" => self.sampling.n_t = num(key, value)?,
            "n_q" => self.sampling.n_q = num(key, value)?,
            "t_max" => self.t_max = num(key, value)?,
            "weight_period" => self.weight_period = num(key, value)?,
            "invariant_anchor" => self.invariant_anchor = value.parse().map_err(|e: Error| e.to_string())?,
            "oracle_modes" => self.oracle_modes = num(key, value)?,
            "oracle_dt" => self.oracle_dt = num(key, value)?,
            "dump_points" => self.dump_points = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 {
            return Err(Error::Config("depth and width must be positive".into()));
        }
        self.lbfgs.validate()?;
        self.case_spec().validate()?;
        if self.weight_period == 0 {
            return Err(Error::Config("weight_period must be positive".into()));
        }
        let s = &self.sampling;
        if [s.n_ic, s.n_f, s.n_b, s.n_t, s.n_q].iter().any(|&n| n < 2) {
            return Err(Error::Config("every sampling count must be >= 2".into()));
        }
        Ok(())
    }

    /// Canonical `key → value` echo, one entry per key in [`KEYS`].
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let pairs: [(&str, String); 23] = [
            ("case", self.case.to_string()),
            ("mode", self.mode.to_string()),
            ("depth", self.depth.to_string()),
            ("width", self.width.to_string()),
            ("activation", self.activation.as_str().to_string()),
            ("init", self.init.to_string()),
            ("seed", self.seed.to_string()),
            ("max_iter", self.lbfgs.max_iter.to_string()),
            ("memory", self.lbfgs.memory.to_string()),
            ("lr", self.lbfgs.initial_step.to_string()),
            ("grad_tol", self.lbfgs.grad_tol.to_string()),
            ("step_tol", self.lbfgs.step_tol.to_string()),
            ("n_ic", self.sampling.n_ic.to_string()),
            ("n_f", self.sampling.n_f.to_string()),
            ("n_b", self.sampling.n_b.to_string()),
            ("n_t", self.sampling.n_t.to_string()),
            ("n_q", self.sampling.n_q.to_string()),
            ("t_max", self.t_max.to_string()),
            ("weight_period", self.weight_period.to_string()),
            ("invariant_anchor", self.invariant_anchor.to_string()),
            ("oracle_modes", self.oracle_modes.to_string()),
            ("oracle_dt", self.oracle_dt.to_string()),
            ("dump_points", self.dump_points.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// The echo as config-file text; parsing it reproduces `self`.
    pub fn to_text(&self) -> String {
        let map = self.to_map();
        KEYS.iter().map(|k| format!("{k} = {}\n", map[*k])).collect()
    }
}

/// One `key = value` assignment with its 1-based source line (0 for
/// overrides that did not come from a file).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Assignment {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse_assignments(text: &str) -> Result<Vec<Assignment>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::ConfigLine { line, message: format!("expected `key = value`, got `{content}`") });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(Error::ConfigLine { line, message: format!("empty key or value in `{content}`") });
        }
        if !KEYS.contains(&key) {
            return Err(Error::ConfigLine { line, message: format!("unknown key `{key}`") });
        }
        out.push(Assignment { line, key: key.to_string(), value: value.to_string() });
    }
    Ok(out)
}

/// Builds a configuration from file assignments followed by overrides.
pub fn resolve(assignments: &[Assignment]) -> Result<RunConfig> {
    let case_of = |a: &Assignment| {
        a.value.parse::<CaseName>().map_err(|e| anchor(a, e.to_string()))
    };
    let mut case = CaseName::OneSoliton;
    for a in assignments.iter().filter(|a| a.key == "case") {
        case = case_of(a)?;
    }
    let mut cfg = RunConfig::preset(case);
    for a in assignments {
        cfg.set(&a.key, &a.value).map_err(|m| anchor(a, m))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn anchor(a: &Assignment, message: String) -> Error {
    if a.line == 0 {
        Error::Config(message)
    } else {
        Error::ConfigLine { line: a.line, message }
    }
}

/// Reads and parses a config file.
pub fn load_assignments(path: impl AsRef<Path>) -> Result<Vec<Assignment>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_assignments(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn over(key: &str, value: &str) -> Assignment {
        Assignment { line: 0, key: key.into(), value: value.into() }
    }

    #[test]
    fn presets() {
        let c = resolve(&[]).unwrap();
        assert_eq!(c.case, CaseName::OneSoliton);
        assert_eq!((c.depth, c.width, c.lbfgs.max_iter), (4, 40, 3000));
        assert_eq!(c.sampling.n_f, 8192);
        let two = resolve(&[over("case", "two_soliton")]).unwrap();
        assert_eq!(two.depth, 7);
        assert!((two.t_max - 10.0 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn file_then_overrides() {
        let mut a = parse_assignments("# desk run\ncase = cosine\nn_f = 2048 # fewer\n\nlr=0.1\n").unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a[1].line, 3);
        a.push(over("lr", "1.0"));
        let c = resolve(&a).unwrap();
        assert_eq!(c.case, CaseName::Cosine);
        assert_eq!(c.sampling.n_f, 2048);
        assert_eq!(c.lbfgs.initial_step, 1.0);
    }

    #[test]
    fn case_sets_defaults_even_when_late() {
        let a = parse_assignments("depth = 3\ncase = two_soliton\n").unwrap();
        assert_eq!(resolve(&a).unwrap().depth, 3);
    }

    #[test]
    fn errors_are_line_anchored() {
        let err = parse_assignments("case = cosine\n\nbogus = 3\n").unwrap_err();
        assert!(matches!(err, Error::ConfigLine { line: 3, .. }), "{err}");
        let err = parse_assignments("depth 4\n").unwrap_err();
        assert!(matches!(err, Error::ConfigLine { line: 1, .. }));
        let a = parse_assignments("seed = 1\nwidth = wide\n").unwrap();
        let err = resolve(&a).unwrap_err();
        assert!(matches!(err, Error::ConfigLine { line: 2, .. }), "{err}");
        assert!(err.to_string().starts_with("config line 2:"));
        let err = resolve(&[over("case", "bogus")]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(resolve(&[over("depth", "0")]).is_err());
        assert!(resolve(&[over("n_f", "1")]).is_err());
        assert!(resolve(&[over("t_max", "-1")]).is_err());
        assert!(resolve(&[over("lr", "0")]).is_err());
    }

    #[test]
    fn text_roundtrip() {
        let mut c = RunConfig::preset(CaseName::Cosine);
        c.seed = 99;
        c.lbfgs.initial_step = 0.1;
        c.t_max = 0.7;
        c.dump_points = true;
        let back = resolve(&parse_assignments(&c.to_text()).unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.to_map().len(), KEYS.len());
    }
}
