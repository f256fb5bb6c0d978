use serde::{Deserialize, Serialize};

use super::grid::{sigmoid, softplus, Cell, FieldGrid, CATEGORY, COLOR, DENSITY, MAX_CATEGORIES, MAX_CHANNELS};
use super::FieldError;
use crate::par;
use crate::scene::{CameraIntrinsics, Observation, Pose, Vec3};

/// Sampling interval and quadrature settings for volume rendering.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub near: f64,
    pub far: f64,
    pub n_samples: usize,
    /// Stop marching once transmittance drops below this value. Zero
    /// disables early termination.
    pub min_transmittance: f64,
}

impl RenderOptions {
    pub fn new(near: f64, far: f64, n_samples: usize) -> Result<Self, FieldError> {
        let o = Self {
            near,
            far,
            n_samples,
            min_transmittance: 0.0,
        };
        o.validate()?;
        Ok(o)
    }

    pub fn with_min_transmittance(mut self, eps: f64) -> Self {
        self.min_transmittance = eps;
        self
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.near >= 0.0 && self.near < self.far && self.far.is_finite()) {
            return Err(FieldError::InvalidOptions(format!(
                "need 0 <= near < far, got [{}, {}]",
                self.near, self.far
            )));
        }
        if self.n_samples < 2 {
            return Err(FieldError::InvalidOptions("need at least 2 samples".into()));
        }
        Ok(())
    }

    /// Bin width.
    pub fn delta(&self) -> f64 {
        (self.far - self.near) / self.n_samples as f64
    }
}

/// Stratified sample positions along a ray that lie inside the field bounds.
/// Space outside the bounds has zero density and is skipped.
pub(crate) struct Marcher<'a> {
    field: &'a FieldGrid,
    origin: Vec3,
    dir: Vec3,
    opts: RenderOptions,
    jitter: Option<&'a [f64]>,
    i: usize,
    t_enter: f64,
    t_exit: f64,
}

pub(crate) struct MarchSample {
    pub cell: Cell,
    pub s: f64,
}

impl<'a> Marcher<'a> {
    pub fn new(
        field: &'a FieldGrid,
        origin: &Vec3,
        dir: &Vec3,
        opts: &RenderOptions,
        jitter: Option<&'a [f64]>,
    ) -> Self {
        let (t_enter, t_exit) = field
            .bounds()
            .slab(origin, dir)
            .unwrap_or((f64::INFINITY, f64::NEG_INFINITY));
        Self {
            field,
            origin: *origin,
            dir: *dir,
            opts: *opts,
            jitter,
            i: 0,
            t_enter,
            t_exit,
        }
    }
}

impl Iterator for Marcher<'_> {
    type Item = MarchSample;

    fn next(&mut self) -> Option<MarchSample> {
        let delta = self.opts.delta();
        while self.i < self.opts.n_samples {
            let i = self.i;
            self.i += 1;
            let u = self.jitter.map_or(0.5, |j| j[i]);
            let s = self.opts.near + (i as f64 + u) * delta;
            if s > self.t_exit {
                self.i = self.opts.n_samples;
                return None;
            }
            if s < self.t_enter {
                continue;
            }
            let p = self.origin + s * self.dir;
            return Some(MarchSample {
                cell: self.field.locate(&p),
                s,
            });
        }
        None
    }
}

/// Running weighted sums along one ray.
#[derive(Clone, Copy)]
pub(crate) struct Accum {
    pub transmittance: f64,
    pub w_sum: f64,
    rgb: [f64; 3],
    rgb2: [f64; 3],
    depth: f64,
    depth2: f64,
    pub cat: [f64; MAX_CATEGORIES],
}

impl Accum {
    pub fn new() -> Self {
        Self {
            transmittance: 1.0,
            w_sum: 0.0,
            rgb: [0.0; 3],
            rgb2: [0.0; 3],
            depth: 0.0,
            depth2: 0.0,
            cat: [0.0; MAX_CATEGORIES],
        }
    }

    #[inline]
    pub fn add(&mut self, w: f64, s: f64, color: &[f64; 3], cat: &[f64]) {
        self.w_sum += w;
        for c in 0..3 {
            self.rgb[c] += w * color[c];
            self.rgb2[c] += w * color[c] * color[c];
        }
        self.depth += w * s;
        self.depth2 += w * s * s;
        for (a, o) in self.cat.iter_mut().zip(cat) {
            *a += w * o;
        }
    }

    /// Weighted variance Σ w (v − m)² with m = Σ w v.
    #[inline]
    fn var(sum: f64, sum2: f64, w: f64) -> f64 {
        (sum2 - sum * sum * (2.0 - w)).max(0.0)
    }

    pub fn finish(&self, classes: usize) -> PixelRender {
        let mut category = [0.0; MAX_CATEGORIES];
        if self.w_sum < 1e-6 {
            category[..classes].fill(1.0 / classes as f64);
        } else {
            for c in 0..classes {
                category[c] = self.cat[c] / self.w_sum;
            }
        }
        PixelRender {
            rgb: self.rgb,
            rgb_var: [
                Self::var(self.rgb[0], self.rgb2[0], self.w_sum),
                Self::var(self.rgb[1], self.rgb2[1], self.w_sum),
                Self::var(self.rgb[2], self.rgb2[2], self.w_sum),
            ],
            depth: self.depth,
            depth_var: Self::var(self.depth, self.depth2, self.w_sum),
            category,
            category_mass: self.cat,
            weight_sum: self.w_sum,
            p_term: self.transmittance,
        }
    }
}

/// Allocation-free per-pixel render result.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PixelRender {
    pub rgb: [f64; 3],
    pub rgb_var: [f64; 3],
    pub depth: f64,
    pub depth_var: f64,
    pub category: [f64; MAX_CATEGORIES],
    pub category_mass: [f64; MAX_CATEGORIES],
    pub weight_sum: f64,
    pub p_term: f64,
}

/// Rendered moments of one ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RayRender {
    pub rgb: [f64; 3],
    pub rgb_var: [f64; 3],
    pub depth: f64,
    pub depth_var: f64,
    /// Category distribution, renormalized by the weight sum (uniform when
    /// the ray is essentially empty).
    pub category: Vec<f64>,
    /// Σ w_i o_i before renormalization.
    pub category_mass: Vec<f64>,
    /// Probability that the ray passes `far` unabsorbed.
    pub p_term: f64,
    pub weights: Vec<f64>,
    /// Sample distances matching `weights`.
    pub sample_depths: Vec<f64>,
}

impl RayRender {
    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    fn from_pixel(p: &PixelRender, classes: usize, weights: Vec<f64>, sample_depths: Vec<f64>) -> Self {
        Self {
            rgb: p.rgb,
            rgb_var: p.rgb_var,
            depth: p.depth,
            depth_var: p.depth_var,
            category: p.category[..classes].to_vec(),
            category_mass: p.category_mass[..classes].to_vec(),
            p_term: p.p_term,
            weights,
            sample_depths,
        }
    }
}

/// Composites explicit per-sample weights, depths, colors and category
/// distributions. `p_term` is the leftover transmittance.
pub fn composite(
    weights: &[f64],
    depths: &[f64],
    colors: &[[f64; 3]],
    categories: &[Vec<f64>],
    p_term: f64,
) -> RayRender {
    let classes = categories.first().map_or(1, Vec::len).clamp(1, MAX_CATEGORIES);
    let mut acc = Accum::new();
    for i in 0..weights.len() {
        acc.add(weights[i], depths[i], &colors[i], &categories[i]);
    }
    acc.transmittance = p_term;
    RayRender::from_pixel(&acc.finish(classes), classes, weights.to_vec(), depths.to_vec())
}

#[inline]
pub(crate) fn shade(field: &FieldGrid, cell: &Cell, logits: &mut [f64]) -> (f64, [f64; 3]) {
    let k = field.channels();
    field.interp(cell, &mut logits[..k]);
    let sigma = softplus(logits[DENSITY]);
    let color = [
        sigmoid(logits[COLOR]),
        sigmoid(logits[COLOR + 1]),
        sigmoid(logits[COLOR + 2]),
    ];
    super::grid::softmax(&mut logits[CATEGORY..k]);
    (sigma, color)
}

fn march(
    field: &FieldGrid,
    origin: &Vec3,
    dir: &Vec3,
    opts: &RenderOptions,
    jitter: Option<&[f64]>,
    mut record: Option<(&mut Vec<f64>, &mut Vec<f64>)>,
) -> PixelRender {
    let delta = opts.delta();
    let k = field.channels();
    let mut acc = Accum::new();
    let mut logits = [0.0; MAX_CHANNELS];
    for smp in Marcher::new(field, origin, dir, opts, jitter) {
        if acc.transmittance < opts.min_transmittance {
            break;
        }
        let (sigma, color) = shade(field, &smp.cell, &mut logits);
        let alpha = -(-sigma * delta).exp_m1();
        let w = acc.transmittance * alpha;
        acc.add(w, smp.s, &color, &logits[CATEGORY..k]);
        acc.transmittance *= 1.0 - alpha;
        if let Some((ws, ds)) = record.as_mut() {
            ws.push(w);
            ds.push(smp.s);
        }
    }
    acc.finish(field.num_categories())
}

/// Volume-renders one ray with deterministic bin-midpoint samples.
pub fn render_ray(field: &FieldGrid, origin: &Vec3, dir: &Vec3, opts: &RenderOptions) -> RayRender {
    render_ray_jittered(field, origin, dir, opts, None)
}

/// Like [`render_ray`], with per-bin offsets in `[0, 1)` (`n_samples` of
/// them) for stratified sampling.
pub fn render_ray_jittered(
    field: &FieldGrid,
    origin: &Vec3,
    dir: &Vec3,
    opts: &RenderOptions,
    jitter: Option<&[f64]>,
) -> RayRender {
    let mut ws = Vec::with_capacity(opts.n_samples);
    let mut ds = Vec::with_capacity(opts.n_samples);
    let p = march(field, origin, dir, opts, jitter, Some((&mut ws, &mut ds)));
    RayRender::from_pixel(&p, field.num_categories(), ws, ds)
}

pub(crate) fn render_pixel(field: &FieldGrid, origin: &Vec3, dir: &Vec3, opts: &RenderOptions) -> PixelRender {
    march(field, origin, dir, opts, None, None)
}

/// Predicted images with per-pixel variances and termination probability.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRender {
    pub pose: Pose,
    pub intrinsics: CameraIntrinsics,
    pub num_categories: usize,
    pub rgb: Vec<[f64; 3]>,
    pub rgb_var: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
    pub depth_var: Vec<f64>,
    /// Row-major, `num_categories` entries per pixel.
    pub category: Vec<f64>,
    pub weight_sum: Vec<f64>,
    pub p_term: Vec<f64>,
}

impl ImageRender {
    pub fn pixel_count(&self) -> usize {
        self.depth.len()
    }

    pub fn category_at(&self, i: usize) -> &[f64] {
        &self.category[i * self.num_categories..(i + 1) * self.num_categories]
    }

    /// Point estimate as an observation: mean color, mean depth and the most
    /// probable category.
    pub fn to_observation(&self) -> Observation {
        let category = (0..self.pixel_count())
            .map(|i| {
                let p = self.category_at(i);
                let mut best = 0;
                for c in 1..p.len() {
                    if p[c] > p[best] {
                        best = c;
                    }
                }
                best as u16
            })
            .collect();
        Observation {
            pose: self.pose,
            intrinsics: self.intrinsics,
            rgb: self.rgb.clone(),
            depth: self.depth.clone(),
            category,
        }
    }
}

/// Renders every pixel through the pinhole model.
pub fn render_image(
    field: &FieldGrid,
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    opts: &RenderOptions,
) -> ImageRender {
    let origin = pose.translation;
    let pixels = par::map(intrinsics.pixel_count(), |i| {
        render_pixel(field, &origin, &intrinsics.ray_world(pose, i), opts)
    });
    let c = field.num_categories();
    let n = pixels.len();
    let mut out = ImageRender {
        pose: *pose,
        intrinsics: *intrinsics,
        num_categories: c,
        rgb: Vec::with_capacity(n),
        rgb_var: Vec::with_capacity(n),
        depth: Vec::with_capacity(n),
        depth_var: Vec::with_capacity(n),
        category: Vec::with_capacity(n * c),
        weight_sum: Vec::with_capacity(n),
        p_term: Vec::with_capacity(n),
    };
    for p in &pixels {
        out.rgb.push(p.rgb);
        out.rgb_var.push(p.rgb_var);
        out.depth.push(p.depth);
        out.depth_var.push(p.depth_var);
        out.category.extend_from_slice(&p.category[..c]);
        out.weight_sum.push(p.weight_sum);
        out.p_term.push(p.p_term);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldInit;
    use crate::scene::Aabb;

    fn cube() -> Aabb {
        Aabb::new(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0))
    }

    fn constant_field(sigma: f64) -> FieldGrid {
        // softplus^-1
        let logit = if sigma > 30.0 { sigma } else { sigma.exp_m1().ln() };
        FieldGrid::new(cube(), [4, 4, 4], 3, &FieldInit::constant(logit), 0).unwrap()
    }

    #[test]
    fn empty_field_passes_everything() {
        let f = FieldGrid::new(cube(), [4, 4, 4], 3, &FieldInit::constant(-60.0), 0).unwrap();
        let opts = RenderOptions::new(0.0, 1.0, 32).unwrap();
        let r = render_ray(&f, &Vec3::zeros(), &Vec3::x(), &opts);
        assert!((r.p_term - 1.0).abs() < 1e-12);
        assert!(r.weights.iter().all(|&w| w < 1e-20));
        assert!(r.depth.abs() < 1e-12 && r.depth_var.abs() < 1e-12);
        assert!(r.rgb_var.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn constant_density_matches_exponential() {
        let sigma = 0.8;
        let f = constant_field(sigma);
        for n in [64, 256] {
            let opts = RenderOptions::new(0.1, 0.9, n).unwrap();
            let r = render_ray(&f, &Vec3::zeros(), &Vec3::y(), &opts);
            let expected = (-sigma * 0.8).exp();
            assert!((r.p_term - expected).abs() < 1.0 / n as f64, "n={n}");
            assert!((r.weight_sum() + r.p_term - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn samples_past_bounds_are_empty() {
        let f = constant_field(1.0);
        let opts = RenderOptions::new(0.0, 4.0, 64).unwrap();
        let r = render_ray(&f, &Vec3::zeros(), &Vec3::x(), &opts);
        assert!((r.p_term - (-1.0f64).exp()).abs() < 1e-12);
        assert!(r.sample_depths.iter().all(|&s| s <= 1.0));
    }

    #[test]
    fn two_point_weights() {
        let cats = vec![vec![1.0, 0.0]; 2];
        let r = composite(&[0.5, 0.5], &[4.0, 6.0], &[[0.0; 3]; 2], &cats, 0.0);
        assert!((r.depth - 5.0).abs() < 1e-12);
        assert!((r.depth_var - 1.0).abs() < 1e-12);
    }

    #[test]
    fn category_mass_sums_to_weight() {
        let f = FieldGrid::new(cube(), [5, 5, 5], 4, &FieldInit::default(), 4).unwrap();
        let opts = RenderOptions::new(0.0, 3.0, 48).unwrap();
        let d = Vec3::new(1.0, 0.3, -0.2).normalize();
        let r = render_ray(&f, &Vec3::new(-0.9, 0.0, 0.1), &d, &opts);
        let mass: f64 = r.category_mass.iter().sum();
        assert!((mass - r.weight_sum()).abs() < 1e-9);
        assert!((r.category.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn one_pixel_image_is_axis_ray() {
        let f = FieldGrid::new(cube(), [5, 5, 5], 4, &FieldInit::default(), 8).unwrap();
        let opts = RenderOptions::new(0.05, 3.0, 64).unwrap();
        let k = CameraIntrinsics::new(1, 1, 1.0).unwrap();
        let pose = Pose::from_yaw(Vec3::new(-0.5, 0.1, 0.0), 0.4);
        let img = render_image(&f, &pose, &k, &opts);
        let r = render_ray(&f, &pose.translation, &pose.forward(), &opts);
        assert!((img.depth[0] - r.depth).abs() < 1e-12);
        assert!((img.p_term[0] - r.p_term).abs() < 1e-12);
        assert_eq!(img.category_at(0), &r.category[..]);
    }

    #[test]
    fn empty_field_termination_map_is_one() {
        let f = FieldGrid::new(cube(), [3, 3, 3], 2, &FieldInit::constant(-60.0), 0).unwrap();
        let opts = RenderOptions::new(0.05, 3.0, 16).unwrap();
        let k = CameraIntrinsics::new(4, 3, 1.0).unwrap();
        let img = render_image(&f, &Pose::from_yaw(Vec3::zeros(), 0.0), &k, &opts);
        assert!(img.p_term.iter().all(|&p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn early_termination_changes_little() {
        let f = constant_field(40.0);
        let exact = RenderOptions::new(0.0, 2.0, 128).unwrap();
        let fast = exact.with_min_transmittance(1e-10);
        let a = render_ray(&f, &Vec3::new(-0.9, 0.0, 0.0), &Vec3::x(), &exact);
        let b = render_ray(&f, &Vec3::new(-0.9, 0.0, 0.0), &Vec3::x(), &fast);
        assert!((a.depth - b.depth).abs() < 1e-6);
        assert!((a.rgb[0] - b.rgb[0]).abs() < 1e-6);
        assert!(b.weights.len() < a.weights.len());
    }
}
