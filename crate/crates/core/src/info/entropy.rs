use std::f64::consts::{E, PI};

/// Variance floor for color intensities.
pub const RGB_VAR_FLOOR: f64 = 1e-4;
/// Variance floor for depth, in m².
pub const DEPTH_VAR_FLOOR: f64 = 1e-3;

/// Differential entropy of a Gaussian, with the variance floored at `floor`.
pub fn gaussian_entropy(variance: f64, floor: f64) -> f64 {
    0.5 * (2.0 * PI * E * variance.max(floor)).ln()
}

#[inline]
fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        p * p.ln()
    } else {
        0.0
    }
}

pub fn bernoulli_entropy(p: f64) -> f64 {
    let p = p.clamp(0.0, 1.0);
    -plogp(p) - plogp(1.0 - p)
}

pub fn categorical_entropy(dist: &[f64]) -> f64 {
    -dist.iter().map(|&p| plogp(p)).sum::<f64>()
}
