//! Gradient-normalization weights Γ and Ω for the invariant terms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Mass and energy terms weighted by Γ, Ω.
    #[default]
    #[serde(rename = "sp")]
    StructurePreserving,
    /// Invariant terms reported but weighted zero.
    #[serde(rename = "vanilla")]
    Vanilla,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::StructurePreserving => "sp",
            Mode::Vanilla => "vanilla",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sp" | "structure_preserving" => Ok(Mode::StructurePreserving),
            "vanilla" => Ok(Mode::Vanilla),
            other => Err(Error::Config(format!(
                "unknown mode `{other}` (expected sp or vanilla)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightState {
    pub gamma: f64,
    pub omega: f64,
    pub epsilon: f64,
    /// Optimizer iterations between updates.
    pub update_period: usize,
    pub clamp: (f64, f64),
    pub mode: Mode,
}

impl WeightState {
    pub fn new(mode: Mode) -> Self {
        let start = match mode {
            Mode::StructurePreserving => 1.0,
            Mode::Vanilla => 0.0,
        };
        WeightState {
            gamma: start,
            omega: start,
            epsilon: 1e-8,
            update_period: 10,
            clamp: (1e-2, 1e2),
            mode,
        }
    }

    /// Whether an update is due after optimizer iteration `iteration`
    /// (1-based).
    pub fn due(&self, iteration: usize) -> bool {
        self.mode == Mode::StructurePreserving
            && self.update_period > 0
            && iteration % self.update_period == 0
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Outcome of one weight update.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightUpdate {
    pub state: WeightState,
    /// Set when the update was rejected and the previous weights kept.
    pub warning: Option<String>,
}

/// `Γ = ‖∇L_pde‖ / (‖∇L_mass‖ + ε)`, `Ω = ‖∇L_pde‖ / (‖∇L_energy‖ + ε)`,
/// both clamped. Vanilla mode always yields zero weights.
pub fn update_weights(state: &WeightState, pde: &[f64], mass: &[f64], energy: &[f64]) -> Result<WeightUpdate> {
    if pde.len() != mass.len() || pde.len() != energy.len() {
        return Err(Error::LengthMismatch {
            what: "invariant gradient",
            expected: pde.len(),
            got: if mass.len() != pde.len() { mass.len() } else { energy.len() },
        });
    }
    let mut next = *state;
    if state.mode == Mode::Vanilla {
        next.gamma = 0.0;
        next.omega = 0.0;
        return Ok(WeightUpdate { state: next, warning: None });
    }
    let (np, nm, ne) = (norm(pde), norm(mass), norm(energy));
    if !(np.is_finite() && nm.is_finite() && ne.is_finite()) {
        return Ok(WeightUpdate {
            state: *state,
            warning: Some(format!(
                "non-finite gradient norm (pde {np}, mass {nm}, energy {ne}); weights unchanged"
            )),
        });
    }
    let (lo, hi) = state.clamp;
    next.gamma = (np / (nm + state.epsilon)).clamp(lo, hi);
    next.omega = (np / (ne + state.epsilon)).clamp(lo, hi);
    Ok(WeightUpdate { state: next, warning: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_norms_give_unit_weights() {
        let mut s = WeightState::new(Mode::StructurePreserving);
        s.epsilon = 0.0;
        let g = [0.6, 0.8];
        let u = update_weights(&s, &g, &[1.0, 0.0], &[0.0, -1.0]).unwrap();
        assert!((u.state.gamma - 1.0).abs() < 1e-15);
        assert!((u.state.omega - 1.0).abs() < 1e-15);
        assert!(u.warning.is_none());
    }

    #[test]
    fn zero_invariant_gradient_hits_clamp() {
        let s = WeightState::new(Mode::StructurePreserving);
        let u = update_weights(&s, &[1.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert_eq!(u.state.gamma, 1e2);
        assert_eq!(u.state.omega, 1e2);
        let u = update_weights(&s, &[0.0, 0.0], &[5.0, 0.0], &[0.0, 3.0]).unwrap();
        assert_eq!(u.state.gamma, 1e-2);
    }

    #[test]
    fn matches_direct_norm_ratio() {
        let s = WeightState::new(Mode::StructurePreserving);
        let pde: Vec<f64> = (0..10).map(|i| (i as f64 * 1.7).sin()).collect();
        let mass: Vec<f64> = (0..10).map(|i| 0.8 * (i as f64 * 0.3).cos()).collect();
        let energy: Vec<f64> = (0..10).map(|i| 1.3 * (i as f64 * 2.1 + 0.5).sin()).collect();
        let n = |v: &[f64]| v.iter().fold(0.0, |a, x| a + x * x).sqrt();
        let u = update_weights(&s, &pde, &mass, &energy).unwrap();
        assert!((u.state.gamma - n(&pde) / (n(&mass) + 1e-8)).abs() < 1e-14);
        assert!((u.state.omega - n(&pde) / (n(&energy) + 1e-8)).abs() < 1e-14);
    }

    #[test]
    fn non_finite_keeps_previous() {
        let mut s = WeightState::new(Mode::StructurePreserving);
        s.gamma = 3.0;
        let u = update_weights(&s, &[f64::NAN], &[1.0], &[1.0]).unwrap();
        assert_eq!(u.state, s);
        assert!(u.warning.is_some());
    }

    #[test]
    fn vanilla_is_zero() {
        let s = WeightState::new(Mode::Vanilla);
        assert_eq!((s.gamma, s.omega), (0.0, 0.0));
        let u = update_weights(&s, &[1.0], &[1.0], &[1.0]).unwrap();
        assert_eq!((u.state.gamma, u.state.omega), (0.0, 0.0));
        assert!(!s.due(10));
        assert!(WeightState::new(Mode::StructurePreserving).due(10));
        assert!(!WeightState::new(Mode::StructurePreserving).due(9));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("sp".parse::<Mode>().unwrap(), Mode::StructurePreserving);
        assert_eq!("vanilla".parse::<Mode>().unwrap(), Mode::Vanilla);
        assert!("adam".parse::<Mode>().is_err());
    }
}
