//! Predictive information of future observations under an ensemble of
//! fields: per-channel conditional and marginal entropies and their gap.

mod ensemble;
mod entropy;
mod monte_carlo;

pub use ensemble::{bootstrap_ensemble, Ensemble, EnsembleConfig, EnsembleTrainer};
pub use entropy::{
    bernoulli_entropy, categorical_entropy, gaussian_entropy, DEPTH_VAR_FLOOR, RGB_VAR_FLOOR,
};
pub use monte_carlo::{monte_carlo_entropy, monte_carlo_entropy_renders, McEstimate};

use std::ops::{Add, Div, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{render_image, FieldError, ImageRender};
use crate::par;
use crate::scene::{CameraIntrinsics, ViewPoint};

#[derive(Debug, Error)]
pub enum InfoError {
    #[error("an ensemble needs at least 2 members, got {0}")]
    TooFewMembers(usize),
    #[error("ensemble members disagree on {0}")]
    Mismatch(&'static str),
    #[error("need at least 2 Monte-Carlo draws, got {0}")]
    TooFewDraws(usize),
    #[error("no viewpoints given")]
    NoViewpoints,
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// One value per observation channel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Channels<T = f64> {
    pub rgb: T,
    pub depth: T,
    pub semantic: T,
    pub occupancy: T,
}

impl<T: Copy> Channels<T> {
    pub fn splat(v: T) -> Self {
        Self {
            rgb: v,
            depth: v,
            semantic: v,
            occupancy: v,
        }
    }

    pub fn map<U>(self, f: impl Fn(T) -> U) -> Channels<U> {
        Channels {
            rgb: f(self.rgb),
            depth: f(self.depth),
            semantic: f(self.semantic),
            occupancy: f(self.occupancy),
        }
    }

    pub fn zip<U: Copy, V>(self, o: Channels<U>, f: impl Fn(T, U) -> V) -> Channels<V> {
        Channels {
            rgb: f(self.rgb, o.rgb),
            depth: f(self.depth, o.depth),
            semantic: f(self.semantic, o.semantic),
            occupancy: f(self.occupancy, o.occupancy),
        }
    }

    pub fn to_array(self) -> [T; 4] {
        [self.rgb, self.depth, self.semantic, self.occupancy]
    }
}

impl Add for Channels {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.zip(o, |a, b| a + b)
    }
}

impl Sub for Channels {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.zip(o, |a, b| a - b)
    }
}

impl Mul<f64> for Channels {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        self.map(|a| a * s)
    }
}

impl Div<f64> for Channels {
    type Output = Self;
    fn div(self, s: f64) -> Self {
        self.map(|a| a / s)
    }
}

/// Channel weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfoWeights {
    pub rgb: f64,
    pub depth: f64,
    pub semantic: f64,
    pub occupancy: f64,
}

impl Default for InfoWeights {
    fn default() -> Self {
        Self {
            rgb: 1.0,
            depth: 1.0,
            semantic: 3.0,
            occupancy: 2.0,
        }
    }
}

impl InfoWeights {
    pub fn is_valid(&self) -> bool {
        [self.rgb, self.depth, self.semantic, self.occupancy]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
    }

    pub fn apply(&self, c: &Channels) -> f64 {
        self.rgb * c.rgb + self.depth * c.depth + self.semantic * c.semantic + self.occupancy * c.occupancy
    }
}

/// Conditional entropy of one pixel: the member average of each member's
/// own predictive entropy.
pub fn pixel_conditional(members: &[&ImageRender], i: usize) -> Channels {
    let per: Vec<Channels> = members
        .iter()
        .map(|r| Channels {
            rgb: r.rgb_var[i].iter().map(|&v| gaussian_entropy(v, RGB_VAR_FLOOR)).sum(),
            depth: gaussian_entropy(r.depth_var[i], DEPTH_VAR_FLOOR),
            semantic: categorical_entropy(r.category_at(i)),
            occupancy: bernoulli_entropy(r.p_term[i]),
        })
        .collect();
    Channels {
        rgb: mean(per.iter().map(|c| c.rgb)),
        depth: mean(per.iter().map(|c| c.depth)),
        semantic: mean(per.iter().map(|c| c.semantic)),
        occupancy: mean(per.iter().map(|c| c.occupancy)),
    }
}

/// Arithmetic mean that returns the common value exactly when all inputs
/// agree, so identical members yield bit-identical mixtures.
fn mean(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let mut it = xs.clone();
    let Some(first) = it.next() else {
        return 0.0;
    };
    if it.all(|x| x == first) {
        return first;
    }
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Marginal entropy of one pixel under the uniform member mixture. Color and
/// depth use the moment-matched Gaussian; semantics and occupancy are exact.
pub fn pixel_marginal(members: &[&ImageRender], i: usize) -> Channels {
    let moment = |mu_of: &dyn Fn(&ImageRender) -> f64, var_of: &dyn Fn(&ImageRender) -> f64| {
        let mu = mean(members.iter().map(|r| mu_of(r)));
        let within = mean(members.iter().map(|r| var_of(r)));
        let between = mean(members.iter().map(|r| (mu_of(r) - mu).powi(2)));
        within + between
    };
    let rgb = (0..3)
        .map(|c| {
            let v = moment(&|r| r.rgb[i][c], &|r| r.rgb_var[i][c]);
            gaussian_entropy(v, RGB_VAR_FLOOR)
        })
        .sum();
    let depth = gaussian_entropy(moment(&|r| r.depth[i], &|r| r.depth_var[i]), DEPTH_VAR_FLOOR);
    let classes = members[0].num_categories;
    let cat: Vec<f64> = (0..classes)
        .map(|c| mean(members.iter().map(|r| r.category_at(i)[c])))
        .collect();
    let p = mean(members.iter().map(|r| r.p_term[i]));
    Channels {
        rgb,
        depth,
        semantic: categorical_entropy(&cat),
        occupancy: bernoulli_entropy(p),
    }
}

/// Per-pixel entropy maps of one viewpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyMaps {
    pub conditional: Vec<Channels>,
    pub marginal: Vec<Channels>,
}

impl EntropyMaps {
    pub fn from_renders(members: &[ImageRender]) -> Self {
        let refs: Vec<&ImageRender> = members.iter().collect();
        let n = members[0].pixel_count();
        Self {
            conditional: (0..n).map(|i| pixel_conditional(&refs, i)).collect(),
            marginal: (0..n).map(|i| pixel_marginal(&refs, i)).collect(),
        }
    }

    /// Per-pixel information, clamped at zero.
    pub fn information(&self) -> Vec<Channels> {
        self.marginal
            .iter()
            .zip(&self.conditional)
            .map(|(m, c)| (*m - *c).map(|v| v.max(0.0)))
            .collect()
    }
}

/// Per-pixel averaged entropies and information, with the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InfoBreakdown {
    pub conditional: Channels,
    pub marginal: Channels,
    /// `max(marginal − conditional, 0)` per channel.
    pub information: Channels,
    pub total: f64,
}

impl InfoBreakdown {
    pub const CSV_HEADER: &'static str = "iteration,I_rgb,I_depth,I_sem,I_occ,total";

    pub fn csv_row(&self, iteration: usize) -> String {
        let i = &self.information;
        format!(
            "{iteration},{},{},{},{},{}",
            i.rgb, i.depth, i.semantic, i.occupancy, self.total
        )
    }
}

/// Moment-matched uniform mixture of member renders of the same view:
/// mean of means, mean of variances plus variance of means, averaged
/// category distributions and termination probabilities.
pub fn mixture_render(members: &[ImageRender]) -> ImageRender {
    let first = &members[0];
    let n = first.pixel_count();
    let refs: Vec<&ImageRender> = members.iter().collect();
    let moment = |i: usize, mu_of: &dyn Fn(&ImageRender, usize) -> f64, var_of: &dyn Fn(&ImageRender, usize) -> f64| {
        let mu = mean(refs.iter().map(|r| mu_of(r, i)));
        let within = mean(refs.iter().map(|r| var_of(r, i)));
        let between = mean(refs.iter().map(|r| (mu_of(r, i) - mu).powi(2)));
        (mu, within + between)
    };
    let mut out = first.clone();
    for i in 0..n {
        for c in 0..3 {
            let (m, v) = moment(i, &|r, i| r.rgb[i][c], &|r, i| r.rgb_var[i][c]);
            out.rgb[i][c] = m;
            out.rgb_var[i][c] = v;
        }
        let (m, v) = moment(i, &|r, i| r.depth[i], &|r, i| r.depth_var[i]);
        out.depth[i] = m;
        out.depth_var[i] = v;
        out.weight_sum[i] = mean(refs.iter().map(|r| r.weight_sum[i]));
        out.p_term[i] = mean(refs.iter().map(|r| r.p_term[i]));
        let k = first.num_categories;
        for c in 0..k {
            out.category[i * k + c] = mean(refs.iter().map(|r| r.category[i * k + c]));
        }
    }
    out
}

/// Renders every member from every viewpoint: `out[view][member]`.
pub fn render_views(
    ensemble: &Ensemble,
    viewpoints: &[ViewPoint],
    intrinsics: &CameraIntrinsics,
) -> Vec<Vec<ImageRender>> {
    let m = ensemble.members.len();
    let mut flat = par::map(viewpoints.len() * m, |j| {
        let (v, k) = (j / m, j % m);
        render_image(&ensemble.members[k], &viewpoints[v].pose(), intrinsics, &ensemble.render)
    })
    .into_iter();
    (0..viewpoints.len())
        .map(|_| flat.by_ref().take(m).collect())
        .collect()
}

/// Averages conditional and marginal entropies over all pixels of all views.
pub fn information_from_renders(views: &[Vec<ImageRender>], weights: &InfoWeights) -> InfoBreakdown {
    let mut cond = Channels::default();
    let mut marg = Channels::default();
    let mut pixels = 0usize;
    for members in views {
        let refs: Vec<&ImageRender> = members.iter().collect();
        let n = members[0].pixel_count();
        for i in 0..n {
            cond = cond + pixel_conditional(&refs, i);
            marg = marg + pixel_marginal(&refs, i);
        }
        pixels += n;
    }
    let n = pixels.max(1) as f64;
    let conditional = cond / n;
    let marginal = marg / n;
    let information = (marginal - conditional).map(|v| v.max(0.0));
    InfoBreakdown {
        conditional,
        marginal,
        information,
        total: weights.apply(&information),
    }
}

pub fn conditional_entropy(
    ensemble: &Ensemble,
    viewpoints: &[ViewPoint],
    intrinsics: &CameraIntrinsics,
) -> Result<Channels, InfoError> {
    Ok(predictive_information(ensemble, viewpoints, intrinsics, &InfoWeights::default())?.conditional)
}

pub fn marginal_entropy(
    ensemble: &Ensemble,
    viewpoints: &[ViewPoint],
    intrinsics: &CameraIntrinsics,
) -> Result<Channels, InfoError> {
    Ok(predictive_information(ensemble, viewpoints, intrinsics, &InfoWeights::default())?.marginal)
}

/// Weighted per-pixel predictive information of observing `viewpoints`.
pub fn predictive_information(
    ensemble: &Ensemble,
    viewpoints: &[ViewPoint],
    intrinsics: &CameraIntrinsics,
    weights: &InfoWeights,
) -> Result<InfoBreakdown, InfoError> {
    if viewpoints.is_empty() {
        return Err(InfoError::NoViewpoints);
    }
    let views = render_views(ensemble, viewpoints, intrinsics);
    Ok(information_from_renders(&views, weights))
}

#[cfg(test)]
pub(crate) mod testutil {
    use crate::field::ImageRender;
    use crate::scene::{CameraIntrinsics, Pose, Vec3};

    /// Single-pixel render with the given moments.
    pub fn pixel(rgb: [f64; 3], rgb_var: [f64; 3], depth: f64, depth_var: f64, cat: &[f64], p_term: f64) -> ImageRender {
        ImageRender {
            pose: Pose::from_yaw(Vec3::zeros(), 0.0),
            intrinsics: CameraIntrinsics::new(1, 1, 1.0).unwrap(),
            num_categories: cat.len(),
            rgb: vec![rgb],
            rgb_var: vec![rgb_var],
            depth: vec![depth],
            depth_var: vec![depth_var],
            category: cat.to_vec(),
            weight_sum: vec![1.0 - p_term],
            p_term: vec![p_term],
        }
    }
}
