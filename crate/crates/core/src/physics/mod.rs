//! KdV equation `u_t + η u u_x + μ² u_xxx = 0`: benchmark cases, residual,
//! analytic solutions, and the mass/energy functionals.

mod invariants;
mod solutions;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Jet, JetScalar};
use crate::error::{Error, Result};

pub use invariants::{energy, energy_density, mass, trapezoid_weights, UniformGrid};
pub use solutions::{cosine_ic, hirota_two_soliton, soliton, soliton_jet, two_soliton_ic, TwoSoliton};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KdvParams {
    /// Nonlinearity coefficient η.
    pub eta: f64,
    /// Dispersion coefficient μ (the residual uses μ²).
    pub mu: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    DirichletZero,
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
    pub t_max: f64,
    pub bc: BoundaryKind,
}

impl Domain {
    pub fn validate(&self) -> Result<()> {
        let finite = self.x_min.is_finite() && self.x_max.is_finite() && self.t_max.is_finite();
        if !finite || self.x_min >= self.x_max || self.t_max <= 0.0 {
            return Err(Error::InvalidDomain(format!(
                "[{}, {}] x [0, {}]",
                self.x_min, self.x_max, self.t_max
            )));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseName {
    OneSoliton,
    TwoSoliton,
    Cosine,
}

impl CaseName {
    pub const ALL: [CaseName; 3] = [CaseName::OneSoliton, CaseName::TwoSoliton, CaseName::Cosine];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseName::OneSoliton => "one_soliton",
            CaseName::TwoSoliton => "two_soliton",
            CaseName::Cosine => "cosine",
        }
    }
}

impl std::fmt::Display for CaseName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CaseName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_soliton" => Ok(CaseName::OneSoliton),
            "two_soliton" => Ok(CaseName::TwoSoliton),
            "cosine" => Ok(CaseName::Cosine),
            other => Err(Error::Config(format!(
                "unknown case `{other}` (expected one_soliton, two_soliton or cosine)"
            ))),
        }
    }
}

/// Initial-condition family with its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Soliton { c: f64, x0: f64 },
    TwoSoliton { c1: f64, c2: f64, x1: f64, x2: f64 },
    Cosine,
}

impl InitialCondition {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            InitialCondition::Soliton { c, x0 } => soliton(0.0, x, c, x0),
            InitialCondition::TwoSoliton { c1, c2, x1, x2 } => two_soliton_ic(x, c1, c2, x1, x2),
            InitialCondition::Cosine => cosine_ic(x),
        }
    }

    /// Exact `x`-derivative of the profile.
    pub fn eval_dx(&self, x: f64) -> f64 {
        match *self {
            InitialCondition::Soliton { c, x0 } => soliton_jet(0.0, x, c, x0).vx,
            InitialCondition::TwoSoliton { c1, c2, x1, x2 } => {
                soliton_jet(0.0, x, c1, x1).vx + soliton_jet(0.0, x, c2, x2).vx
            }
            InitialCondition::Cosine => -std::f64::consts::PI * (std::f64::consts::PI * x).sin(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub name: CaseName,
    pub params: KdvParams,
    pub domain: Domain,
    pub ic: InitialCondition,
}

impl CaseSpec {
    pub fn preset(name: CaseName) -> CaseSpec {
        match name {
            CaseName::OneSoliton => CaseSpec {
                name,
                params: KdvParams { eta: 6.0, mu: 1.0 },
                domain: Domain {
                    x_min: -20.0,
                    x_max: 20.0,
                    t_max: 3.0,
                    bc: BoundaryKind::DirichletZero,
                },
                ic: InitialCondition::Soliton { c: 1.0, x0: 0.0 },
            },
            CaseName::TwoSoliton => CaseSpec {
                name,
                params: KdvParams { eta: 6.0, mu: 1.0 },
                domain: Domain {
                    x_min: -40.0,
                    x_max: 40.0,
                    t_max: 10.0 * std::f64::consts::PI,
                    bc: BoundaryKind::DirichletZero,
                },
                ic: InitialCondition::TwoSoliton {
                    c1: 1.0,
                    c2: 0.3,
                    x1: -5.0,
                    x2: 5.0,
                },
            },
            CaseName::Cosine => CaseSpec {
                name,
                params: KdvParams { eta: 1.0, mu: 0.05 },
                domain: Domain {
                    x_min: -1.0,
                    x_max: 1.0,
                    t_max: 1.0,
                    bc: BoundaryKind::Periodic,
                },
                ic: InitialCondition::Cosine,
            },
        }
    }

    /// Same case on a shorter time horizon.
    pub fn with_horizon(mut self, t_max: f64) -> CaseSpec {
        self.domain.t_max = t_max;
        self
    }

    pub fn initial(&self, x: f64) -> f64 {
        self.ic.eval(x)
    }

    pub fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if !(self.params.eta.is_finite() && self.params.mu.is_finite()) || self.params.mu == 0.0 {
            return Err(Error::Config(format!(
                "invalid KdV coefficients eta = {}, mu = {}",
                self.params.eta, self.params.mu
            )));
        }
        Ok(())
    }
}

/// KdV residual `u_t + η u u_x + μ² u_xxx` of a jet.
pub fn residual<T: JetScalar>(jet: &Jet<T>, params: &KdvParams) -> T {
    let nonlinear = (jet.v.clone() * jet.vx.clone()).scale(params.eta);
    jet.vt.clone() + nonlinear + jet.vxxx.scale(params.mu * params.mu)
}
