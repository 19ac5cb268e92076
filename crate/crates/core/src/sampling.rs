//! Training point sets, generated once per run from a seed.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Point;
use crate::physics::{Domain, UniformGrid};

/// RNG stream reserved for point sampling; parameter init uses stream 0.
const SAMPLING_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub n_ic: usize,
    pub n_f: usize,
    pub n_b: usize,
    pub n_t: usize,
    pub n_q: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            n_ic: 128,
            n_f: 8192,
            n_b: 128,
            n_t: 24,
            n_q: 256,
        }
    }
}

/// Space-time grid on which mass and energy are monitored during training.
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantGrid {
    pub times: Vec<f64>,
    pub x: UniformGrid,
}

impl InvariantGrid {
    /// Points in time-major order: `times[j]` with every x node.
    pub fn points(&self) -> Vec<Point> {
        let xs = self.x.nodes();
        self.times
            .iter()
            .flat_map(|&t| xs.iter().map(move |&x| Point::new(t, x)))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSet {
    pub ic_points: Vec<f64>,
    pub collocation: Vec<Point>,
    pub boundary_times: Vec<f64>,
    pub invariant_grid: InvariantGrid,
}

fn equispaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    UniformGrid { a, b, n }.nodes()
}

pub fn build_trainset(domain: &Domain, seed: u64, counts: &SamplingConfig) -> Result<TrainSet> {
    domain.validate()?;
    let SamplingConfig {
        n_ic,
        n_f,
        n_b,
        n_t,
        n_q,
    } = *counts;
    if [n_ic, n_f, n_b, n_t, n_q].iter().any(|&n| n < 2) {
        return Err(Error::Config(format!(
            "every sampling count must be >= 2 (got {counts:?})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SAMPLING_STREAM);
    let mut interior = |lo: f64, hi: f64| loop {
        let v = lo + (hi - lo) * rng.random::<f64>();
        if v > lo && v < hi {
            break v;
        }
    };
    let collocation = (0..n_f)
        .map(|_| {
            let t = interior(0.0, domain.t_max);
            let x = interior(domain.x_min, domain.x_max);
            Point::new(t, x)
        })
        .collect();
    Ok(TrainSet {
        ic_points: equispaced(domain.x_min, domain.x_max, n_ic),
        collocation,
        boundary_times: equispaced(0.0, domain.t_max, n_b),
        invariant_grid: InvariantGrid {
            times: equispaced(0.0, domain.t_max, n_t),
            x: UniformGrid::new(domain.x_min, domain.x_max, n_q)?,
        },
    })
}

impl TrainSet {
    /// Audit dump with columns `kind,t,x`.
    pub fn to_csv(&self, domain: &Domain) -> String {
        let mut out = String::from("kind,t,x\n");
        for x in &self.ic_points {
            let _ = writeln!(out, "ic,0,{x}");
        }
        for p in &self.collocation {
            let _ = writeln!(out, "collocation,{},{}", p.t, p.x);
        }
        for t in &self.boundary_times {
            let _ = writeln!(out, "boundary,{t},{}", domain.x_min);
            let _ = writeln!(out, "boundary,{t},{}", domain.x_max);
        }
        for p in self.invariant_grid.points() {
            let _ = writeln!(out, "invariant,{},{}", p.t, p.x);
        }
        out
    }

    pub fn write_csv(&self, domain: &Domain, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv(domain)).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{CaseName, CaseSpec};

    #[test]
    fn equispaced_nodes_include_endpoints() {
        let dom = CaseSpec::preset(CaseName::Cosine).domain;
        let counts = SamplingConfig { n_ic: 3, ..SamplingConfig::default() };
        let ts = build_trainset(&dom, 1, &counts).unwrap();
        assert_eq!(ts.ic_points, vec![-1.0, 0.0, 1.0]);
        assert_eq!(ts.invariant_grid.times[0], 0.0);
        assert_eq!(*ts.invariant_grid.times.last().unwrap(), 1.0);
        assert_eq!(ts.invariant_grid.x.node(0), -1.0);
        assert_eq!(ts.invariant_grid.x.node(255), 1.0);
        assert_eq!(ts.boundary_times.len(), 128);
        assert_eq!(ts.invariant_grid.points().len(), 24 * 256);
    }

    #[test]
    fn deterministic_and_interior() {
        let dom = CaseSpec::preset(CaseName::OneSoliton).domain;
        let c = SamplingConfig::default();
        let a = build_trainset(&dom, 7, &c).unwrap();
        let b = build_trainset(&dom, 7, &c).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.collocation, build_trainset(&dom, 8, &c).unwrap().collocation);
        assert!(a.collocation.iter().all(|p| p.t > 0.0
            && p.t < dom.t_max
            && p.x > dom.x_min
            && p.x < dom.x_max));
    }

    #[test]
    fn rejects_bad_input() {
        let mut dom = CaseSpec::preset(CaseName::OneSoliton).domain;
        let c = SamplingConfig { n_b: 1, ..SamplingConfig::default() };
        assert!(build_trainset(&dom, 1, &c).is_err());
        dom.x_max = dom.x_min;
        assert!(build_trainset(&dom, 1, &SamplingConfig::default()).is_err());
    }

    #[test]
    fn collocation_is_uniform() {
        // χ² over a 10 × 10 histogram; 99 dof critical value at 0.1% is 148.23.
        for case in CaseName::ALL {
            let dom = CaseSpec::preset(case).domain;
            for seed in [7, 11, 2024] {
                let ts = build_trainset(&dom, seed, &SamplingConfig::default()).unwrap();
                let mut counts = [0usize; 100];
                for p in &ts.collocation {
                    let i = ((p.t / dom.t_max) * 10.0).floor().min(9.0) as usize;
                    let j = (((p.x - dom.x_min) / dom.length()) * 10.0).floor().min(9.0) as usize;
                    counts[i * 10 + j] += 1;
                }
                let expected = ts.collocation.len() as f64 / 100.0;
                let chi2: f64 = counts
                    .iter()
                    .map(|&c| (c as f64 - expected).powi(2) / expected)
                    .sum();
                assert!(chi2 < 148.23, "case {case} seed {seed}: chi2 = {chi2}");
            }
        }
    }

    #[test]
    fn csv_dump_has_every_point() {
        let dom = CaseSpec::preset(CaseName::Cosine).domain;
        let c = SamplingConfig { n_ic: 4, n_f: 10, n_b: 3, n_t: 2, n_q: 5 };
        let ts = build_trainset(&dom, 3, &c).unwrap();
        let csv = ts.to_csv(&dom);
        assert!(csv.starts_with("kind,t,x\n"));
        assert_eq!(csv.lines().count(), 1 + 4 + 10 + 6 + 10);
    }
}
