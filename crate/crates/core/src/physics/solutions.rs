//! Analytic KdV solutions for `η = 6, μ = 1` and the initial profiles.
//!
//! Jets are evaluated in closed form (no numeric differentiation) so they
//! can certify the residual to roundoff.

use crate::autodiff::Jet;

fn sech2(z: f64) -> f64 {
    // 4 / (e^z + e^-z)^2 written with one exponential of a non-positive
    // argument.
    let e = (-2.0 * z.abs()).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

/// One-soliton `(c/2) sech²(√c/2 · (x − c t − x0))`.
pub fn soliton(t: f64, x: f64, c: f64, x0: f64) -> f64 {
    0.5 * c * sech2(0.5 * c.sqrt() * (x - c * t - x0))
}

/// Closed-form jet of [`soliton`].
pub fn soliton_jet(t: f64, x: f64, c: f64, x0: f64) -> Jet {
    let k = 0.5 * c.sqrt();
    let xi = k * (x - c * t - x0);
    let s = sech2(xi);
    let th = xi.tanh();
    // derivatives with respect to ξ
    let u = 0.5 * c * s;
    let u1 = -c * s * th;
    let u2 = c * (2.0 * s - 3.0 * s * s);
    let u3 = c * (-4.0 * s * th + 12.0 * s * s * th);
    Jet::new(u, -c * k * u1, k * u1, k * k * u2, k * k * k * u3)
}

/// Sum of two sech² profiles.
pub fn two_soliton_ic(x: f64, c1: f64, c2: f64, x1: f64, x2: f64) -> f64 {
    soliton(0.0, x, c1, x1) + soliton(0.0, x, c2, x2)
}

pub fn cosine_ic(x: f64) -> f64 {
    (std::f64::consts::PI * x).cos()
}

/// Hirota two-soliton `u = 2 ∂²ₓ log f`,
/// `f = 1 + e^{θ1} + e^{θ2} + A e^{θ1+θ2}`, `θi = ki (x − xi) − ki³ t`,
/// `ki = √ci`, `A = ((k1 − k2)/(k1 + k2))²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoSoliton {
    pub c1: f64,
    pub c2: f64,
    pub x1: f64,
    pub x2: f64,
}

/// One exponential term `exp(phase + slope_x ξ + slope_t τ)` of `f`.
#[derive(Clone, Copy)]
struct ExpTerm {
    phase: f64,
    slope_x: f64,
    slope_t: f64,
}

const SERIES: usize = 6;

impl TwoSoliton {
    pub fn new(c1: f64, c2: f64, x1: f64, x2: f64) -> Self {
        TwoSoliton { c1, c2, x1, x2 }
    }

    fn terms(&self, t: f64, x: f64, second: bool) -> Vec<ExpTerm> {
        let (k1, k2) = (self.c1.sqrt(), self.c2.sqrt());
        let th1 = k1 * (x - self.x1) - k1.powi(3) * t;
        let mut terms = vec![
            ExpTerm { phase: 0.0, slope_x: 0.0, slope_t: 0.0 },
            ExpTerm { phase: th1, slope_x: k1, slope_t: -k1.powi(3) },
        ];
        if second {
            let th2 = k2 * (x - self.x2) - k2.powi(3) * t;
            let a = ((k1 - k2) / (k1 + k2)).powi(2);
            terms.push(ExpTerm { phase: th2, slope_x: k2, slope_t: -k2.powi(3) });
            terms.push(ExpTerm {
                phase: th1 + th2 + a.ln(),
                slope_x: k1 + k2,
                slope_t: -(k1.powi(3) + k2.powi(3)),
            });
        }
        terms
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        self.jet(t, x).v
    }

    pub fn jet(&self, t: f64, x: f64) -> Jet {
        jet_from_terms(&self.terms(t, x, true))
    }

    /// The same form with the second soliton's exponentials dropped; this
    /// is exactly the one-soliton with speed `c1` centred at `x1`.
    #[cfg(test)]
    pub(crate) fn first_channel_jet(&self, t: f64, x: f64) -> Jet {
        jet_from_terms(&self.terms(t, x, false))
    }
}

/// Power-series quotient `num / den` truncated to `SERIES` terms.
fn series_div(num: &[f64; SERIES], den: &[f64; SERIES]) -> [f64; SERIES] {
    let mut q = [0.0; SERIES];
    for n in 0..SERIES {
        let mut acc = num[n];
        for k in 1..=n {
            acc -= den[k] * q[n - k];
        }
        q[n] = acc / den[0];
    }
    q
}

fn jet_from_terms(terms: &[ExpTerm]) -> Jet {
    // Factor out the largest exponential: log f shifts by a constant, which
    // leaves every derivative of log f unchanged.
    let m = terms.iter().map(|e| e.phase).fold(f64::NEG_INFINITY, f64::max);
    // Taylor coefficients in ξ of f(x + ξ) and of f_t(x + ξ).
    let mut f = [0.0; SERIES];
    let mut ft = [0.0; SERIES];
    for e in terms {
        let w = (e.phase - m).exp();
        let mut pow = w;
        for n in 0..SERIES {
            f[n] += pow;
            ft[n] += e.slope_t * pow;
            pow *= e.slope_x / (n + 1) as f64;
        }
    }
    // q = f'/f, so ∂ₓ^m log f = (m − 1)! q_{m−1}.
    let mut fprime = [0.0; SERIES];
    for n in 0..SERIES - 1 {
        fprime[n] = (n + 1) as f64 * f[n + 1];
    }
    let q = series_div(&fprime, &f);
    let r = series_div(&ft, &f);
    Jet::new(
        2.0 * q[1],
        2.0 * 2.0 * r[2],
        2.0 * 2.0 * q[2],
        2.0 * 6.0 * q[3],
        2.0 * 24.0 * q[4],
    )
}

pub fn hirota_two_soliton(t: f64, x: f64, c1: f64, c2: f64, x1: f64, x2: f64) -> f64 {
    TwoSoliton::new(c1, c2, x1, x2).value(t, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{residual, KdvParams};

    const KDV6: KdvParams = KdvParams { eta: 6.0, mu: 1.0 };

    #[test]
    fn soliton_values() {
        assert_eq!(soliton(0.0, 0.0, 1.0, 0.0), 0.5);
        // 0.5 sech²(10), high-precision value 4.12230722788e-9.
        assert!((soliton(0.0, 20.0, 1.0, 0.0) - 4.122_307_227_883_7e-9).abs() < 1e-20);
        let (c, x0, dt) = (1.3, 0.4, 0.75);
        // Travelling wave: advancing t by Δ moves the profile by cΔ.
        for &x in &[-3.0, 0.0, 2.2] {
            let shifted = soliton(0.3 + dt, x + c * dt, c, x0);
            assert!((soliton(0.3, x, c, x0) - shifted).abs() < 1e-15);
        }
    }

    #[test]
    fn soliton_jet_solves_kdv() {
        for i in 0..200 {
            let t = 3.0 * (i as f64 * 0.37).sin().abs();
            let x = 20.0 * (i as f64 * 0.71).cos();
            let jet = soliton_jet(t, x, 1.0, 0.0);
            assert!((jet.v - soliton(t, x, 1.0, 0.0)).abs() < 1e-15);
            assert!(residual(&jet, &KDV6).abs() < 1e-12);
        }
    }

    #[test]
    fn two_soliton_ic_values() {
        // mpmath: 0.5 + 0.15 sech²(√0.3/2 · 10) = 0.502487702727264
        assert!((two_soliton_ic(-5.0, 1.0, 0.3, -5.0, 5.0) - 0.502_487_702_727_264).abs() < 1e-14);
        for &x in &[-7.0, 0.3, 12.0] {
            assert_eq!(
                two_soliton_ic(x, 1.0, 0.3, -5.0, 5.0),
                two_soliton_ic(x, 0.3, 1.0, 5.0, -5.0)
            );
        }
        assert!(two_soliton_ic(400.0, 1.0, 0.3, -5.0, 5.0) < 1e-80);
        assert!(two_soliton_ic(-400.0, 1.0, 0.3, -5.0, 5.0) < 1e-80);
    }

    #[test]
    fn hirota_single_channel_is_soliton() {
        let h = TwoSoliton::new(1.0, 0.3, -5.0, 5.0);
        for &(t, x) in &[(0.0, -5.0), (1.5, -2.0), (2.5, 10.0), (10.0, 300.0)] {
            let a = h.first_channel_jet(t, x).to_array();
            let b = soliton_jet(t, x, 1.0, -5.0).to_array();
            for (p, q) in a.iter().zip(b) {
                assert!((p - q).abs() < 1e-12, "{p} vs {q}");
            }
        }
    }

    #[test]
    fn hirota_solves_kdv_and_survives_large_phases() {
        let h = TwoSoliton::new(1.0, 0.3, -5.0, 5.0);
        for i in 0..300 {
            let t = 31.4 * (i as f64 * 0.377).sin().abs();
            let x = 40.0 * (i as f64 * 0.913).cos();
            let jet = h.jet(t, x);
            assert!(jet.v.is_finite());
            assert!(residual(&jet, &KDV6).abs() < 1e-10, "r = {}", residual(&jet, &KDV6));
        }
        assert!(h.value(0.0, 1e4).abs() < 1e-100);
        assert!(h.value(0.0, -1e4).abs() < 1e-100);
    }

    #[test]
    fn cosine_values() {
        assert_eq!(cosine_ic(0.0), 1.0);
        assert_eq!(cosine_ic(1.0), -1.0);
        assert_eq!(cosine_ic(-1.0), -1.0);
        assert!(cosine_ic(0.5).abs() < 1e-16);
    }
}
