//! Mass `∫u dx` and Hamiltonian `∫(μ²/2 u_x² − η/6 u³) dx` by the
//! composite trapezoid rule on a uniform grid.

use serde::{Deserialize, Serialize};

use super::KdvParams;
use crate::error::{Error, Result};

/// `n` equispaced nodes on `[a, b]`, both endpoints included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl UniformGrid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 2 || !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidDomain(format!(
                "grid on [{a}, {b}] with {n} nodes"
            )));
        }
        Ok(UniformGrid { a, b, n })
    }

    pub fn spacing(&self) -> f64 {
        (self.b - self.a) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.n {
            self.b
        } else {
            self.a + i as f64 * self.spacing()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }
}

pub fn trapezoid_weights(grid: &UniformGrid) -> Vec<f64> {
    let h = grid.spacing();
    let mut w = vec![h; grid.n];
    w[0] = 0.5 * h;
    w[grid.n - 1] = 0.5 * h;
    w
}

fn check_len(what: &'static str, grid: &UniformGrid, got: usize) -> Result<()> {
    if got != grid.n {
        return Err(Error::LengthMismatch {
            what,
            expected: grid.n,
            got,
        });
    }
    Ok(())
}

pub fn mass(u: &[f64], grid: &UniformGrid) -> Result<f64> {
    check_len("mass nodes", grid, u.len())?;
    Ok(trapezoid_weights(grid)
        .iter()
        .zip(u)
        .map(|(w, u)| w * u)
        .sum())
}

/// Pointwise Hamiltonian density `μ²/2 u_x² − η/6 u³`.
pub fn energy_density(u: f64, ux: f64, params: &KdvParams) -> f64 {
    0.5 * params.mu * params.mu * ux * ux - params.eta / 6.0 * u * u * u
}

pub fn energy(u: &[f64], ux: &[f64], grid: &UniformGrid, params: &KdvParams) -> Result<f64> {
    check_len("energy nodes", grid, u.len())?;
    check_len("energy derivative nodes", grid, ux.len())?;
    Ok(trapezoid_weights(grid)
        .iter()
        .zip(u.iter().zip(ux))
        .map(|(w, (&u, &ux))| w * energy_density(u, ux, params))
        .sum())
}
