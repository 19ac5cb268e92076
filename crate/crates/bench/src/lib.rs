//! Shared workloads for the criterion benches.

use kdv_spinn::network::{Mlp, Point};

/// Deterministic scatter of `n` points over `[0, t_max] × [x_min, x_max]`.
pub fn scatter(n: usize, t_max: f64, x_min: f64, x_max: f64) -> Vec<Point> {
    (0..n)
        .map(|i| {
            let a = (i as f64 * 0.618_033_988_75).fract();
            let b = (i as f64 * 0.754_877_666_25).fract();
            Point::new(a * t_max, x_min + b * (x_max - x_min))
        })
        .collect()
}

pub fn standard_net() -> Mlp {
    Mlp::init(7, 4, 40).expect("valid architecture")
}
