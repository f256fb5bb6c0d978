use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{render_views, Channels, Ensemble, InfoError, DEPTH_VAR_FLOOR, RGB_VAR_FLOOR};
use crate::field::{FieldGrid, ImageRender, RenderOptions};
use crate::scene::{CameraIntrinsics, ViewPoint};

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
}

fn log_normal(y: f64, mu: f64, var: f64) -> f64 {
    -0.5 * ((2.0 * PI * var).ln() + (y - mu) * (y - mu) / var)
}

/// Log of the mean of `exp(xs)`.
fn log_mean_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + (xs.iter().map(|x| (x - m).exp()).sum::<f64>() / xs.len() as f64).ln()
}

fn sample_index<R: Rng>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &q) in p.iter().enumerate() {
        acc += q;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&q| q > 0.0).unwrap_or(0)
}

/// Estimates the per-pixel entropy of sampled observations by drawing
/// `n_draws` images from each pixel's predictive distribution and averaging
/// `−ln p`. With several members per view the pixel distribution is the
/// uniform mixture of the members; pixels are treated as independent.
pub fn monte_carlo_entropy_renders<R: Rng>(
    views: &[Vec<ImageRender>],
    n_draws: usize,
    rng: &mut R,
) -> Result<Channels<McEstimate>, InfoError> {
    if n_draws < 2 {
        return Err(InfoError::TooFewDraws(n_draws));
    }
    if views.is_empty() {
        return Err(InfoError::NoViewpoints);
    }
    let pixels: usize = views.iter().map(|v| v[0].pixel_count()).sum();
    let mut sum = Channels::<f64>::default();
    let mut sum2 = Channels::<f64>::default();
    let mut lp = Vec::new();
    for _ in 0..n_draws {
        let mut draw = Channels::<f64>::default();
        for members in views {
            let m = members.len();
            lp.resize(m, 0.0);
            for i in 0..members[0].pixel_count() {
                // color: 3 independent channels per member
                let k = rng.random_range(0..m);
                let y: [f64; 3] = std::array::from_fn(|c| {
                    let z: f64 = StandardNormal.sample(rng);
                    members[k].rgb[i][c] + z * members[k].rgb_var[i][c].max(RGB_VAR_FLOOR).sqrt()
                });
                for (j, r) in members.iter().enumerate() {
                    lp[j] = (0..3)
                        .map(|c| log_normal(y[c], r.rgb[i][c], r.rgb_var[i][c].max(RGB_VAR_FLOOR)))
                        .sum();
                }
                draw.rgb -= log_mean_exp(&lp);

                let k = rng.random_range(0..m);
                let z: f64 = StandardNormal.sample(rng);
                let y = members[k].depth[i] + z * members[k].depth_var[i].max(DEPTH_VAR_FLOOR).sqrt();
                for (j, r) in members.iter().enumerate() {
                    lp[j] = log_normal(y, r.depth[i], r.depth_var[i].max(DEPTH_VAR_FLOOR));
                }
                draw.depth -= log_mean_exp(&lp);

                let k = rng.random_range(0..m);
                let y = sample_index(members[k].category_at(i), rng);
                let p = members.iter().map(|r| r.category_at(i)[y]).sum::<f64>() / m as f64;
                draw.semantic -= p.ln();

                let k = rng.random_range(0..m);
                let hit = rng.random::<f64>() >= members[k].p_term[i];
                let p = members
                    .iter()
                    .map(|r| if hit { 1.0 - r.p_term[i] } else { r.p_term[i] })
                    .sum::<f64>()
                    / m as f64;
                draw.occupancy -= p.ln();
            }
        }
        let draw = draw / pixels as f64;
        sum = sum + draw;
        sum2 = sum2 + draw.zip(draw, |a, b| a * b);
    }
    let n = n_draws as f64;
    Ok(sum.zip(sum2, |s, s2| {
        let mean = s / n;
        let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
        McEstimate {
            mean,
            stderr: (var / n).sqrt(),
        }
    }))
}

/// Monte-Carlo entropy of the observations from `viewpoints` under one field
/// (a single-element slice) or the mixture of several.
pub fn monte_carlo_entropy<R: Rng>(
    fields: &[FieldGrid],
    render: &RenderOptions,
    viewpoints: &[ViewPoint],
    intrinsics: &CameraIntrinsics,
    n_draws: usize,
    rng: &mut R,
) -> Result<Channels<McEstimate>, InfoError> {
    if fields.is_empty() {
        return Err(InfoError::TooFewMembers(0));
    }
    let ens = Ensemble {
        members: fields.to_vec(),
        seeds: vec![0; fields.len()],
        render: *render,
    };
    let views = render_views(&ens, viewpoints, intrinsics);
    monte_carlo_entropy_renders(&views, n_draws, rng)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::pixel;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{E, LN_2};

    #[test]
    fn bernoulli_half() {
        let r = pixel([0.5; 3], [0.0; 3], 1.0, 0.0, &[1.0], 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = monte_carlo_entropy_renders(&[vec![r]], 100_000, &mut rng).unwrap();
        assert!((e.occupancy.mean - LN_2).abs() < 0.01);
    }

    #[test]
    fn unit_gaussian() {
        let r = pixel([0.5; 3], [0.0; 3], 1.0, 1.0, &[1.0], 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = monte_carlo_entropy_renders(&[vec![r]], 100_000, &mut rng).unwrap();
        assert!((e.depth.mean - 0.5 * (2.0 * PI * E).ln()).abs() < 0.01);
    }

    #[test]
    fn deterministic_pixel_is_floor() {
        let r = pixel([0.3; 3], [0.0; 3], 2.0, 0.0, &[0.0, 1.0], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = monte_carlo_entropy_renders(&[vec![r]], 2000, &mut rng).unwrap();
        let floor = super::super::gaussian_entropy(0.0, DEPTH_VAR_FLOOR);
        assert!((e.depth.mean - floor).abs() < 0.1);
        assert_eq!(e.semantic.mean, 0.0);
        assert_eq!(e.occupancy.mean, 0.0);
    }

    #[test]
    fn too_few_draws() {
        let r = pixel([0.3; 3], [0.0; 3], 2.0, 0.0, &[1.0], 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(monte_carlo_entropy_renders(&[vec![r]], 1, &mut rng).is_err());
    }
}
