use serde::{Deserialize, Serialize};

use super::grid::{sigmoid, Cell, FieldGrid, CATEGORY, COLOR, DENSITY, MAX_CATEGORIES, MAX_CHANNELS};
use super::render::{shade, Marcher, RenderOptions};
use super::FieldError;
use crate::par;
use crate::scene::Vec3;

/// Weights of the color, depth and category terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub rgb: f64,
    pub depth: f64,
    pub category: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            rgb: 1.0,
            depth: 0.1,
            category: 0.05,
        }
    }
}

impl LossWeights {
    pub fn is_valid(&self) -> bool {
        [self.rgb, self.depth, self.category]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
    }

    /// Rescales the depth and category weights so each weighted term is
    /// within a factor of two of the weighted color term.
    pub fn balanced(&self, terms: &LossTerms) -> Self {
        let target = self.rgb * terms.rgb;
        let fit = |w: f64, t: f64| {
            let v = w * t;
            if target <= 0.0 || t <= 0.0 || (v >= 0.5 * target && v <= 2.0 * target) {
                w
            } else {
                target / t
            }
        };
        Self {
            rgb: self.rgb,
            depth: fit(self.depth, terms.depth),
            category: fit(self.category, terms.category),
        }
    }
}

/// One supervised pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayTarget {
    pub origin: Vec3,
    pub dir: Vec3,
    pub rgb: [f64; 3],
    /// `+inf` when the pixel saw nothing; such rays skip the depth term.
    pub depth: f64,
    pub category: u16,
}

/// Unweighted term means and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub rgb: f64,
    pub depth: f64,
    pub category: f64,
    pub total: f64,
}

const CE_FLOOR: f64 = 1e-12;
const EMPTY_RAY: f64 = 1e-6;

/// Dense gradient with a list of vertices that received any contribution.
#[derive(Debug, Clone)]
pub struct GradBuffer {
    grad: Vec<f64>,
    touched: Vec<usize>,
    mark: Vec<bool>,
    channels: usize,
}

impl GradBuffer {
    pub fn new(field: &FieldGrid) -> Self {
        Self {
            grad: vec![0.0; field.params().len()],
            touched: Vec::new(),
            mark: vec![false; field.vertex_count()],
            channels: field.channels(),
        }
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn touched(&self) -> &[usize] {
        &self.touched
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Zeroes the touched entries.
    pub fn clear(&mut self) {
        let k = self.channels;
        for &v in &self.touched {
            self.grad[v * k..(v + 1) * k].fill(0.0);
            self.mark[v] = false;
        }
        self.touched.clear();
    }

    /// Distributes a gradient on interpolated logits to the cell's corners.
    fn scatter(&mut self, offsets: &[usize; 8], cell: &Cell, dl: &[f64]) {
        let k = self.channels;
        let w = cell.corner_weights();
        for (c, &off) in offsets.iter().enumerate() {
            let v = cell.base + off;
            if !self.mark[v] {
                self.mark[v] = true;
                self.touched.push(v);
            }
            let dst = &mut self.grad[v * k..(v + 1) * k];
            for (d, g) in dst.iter_mut().zip(dl) {
                *d += w[c] * g;
            }
        }
    }
}

struct SampleRec {
    cell: Cell,
    x: f64,
    alpha: f64,
    t: f64,
    s: f64,
    c: [f64; 3],
    o: [f64; MAX_CATEGORIES],
}

struct RayGrad {
    rgb: f64,
    depth: Option<f64>,
    category: f64,
    cells: Vec<Cell>,
    /// `channels` entries per cell.
    dl: Vec<f64>,
}

struct Scale {
    rgb: f64,
    depth: f64,
    category: f64,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn ray_grad(
    field: &FieldGrid,
    ray: &RayTarget,
    opts: &RenderOptions,
    jitter: Option<&[f64]>,
    scale: &Scale,
) -> RayGrad {
    let k = field.channels();
    let classes = field.num_categories();
    let delta = opts.delta();
    let mut recs: Vec<SampleRec> = Vec::with_capacity(opts.n_samples);
    let mut logits = [0.0; MAX_CHANNELS];
    let mut transmittance = 1.0;
    let (mut rgb, mut depth, mut w_sum) = ([0.0; 3], 0.0, 0.0);
    let mut mass = [0.0; MAX_CATEGORIES];
    for smp in Marcher::new(field, &ray.origin, &ray.dir, opts, jitter) {
        if transmittance < opts.min_transmittance {
            break;
        }
        let (sigma, c) = shade(field, &smp.cell, &mut logits);
        let alpha = -(-sigma * delta).exp_m1();
        let w = transmittance * alpha;
        for i in 0..3 {
            rgb[i] += w * c[i];
        }
        depth += w * smp.s;
        w_sum += w;
        let mut o = [0.0; MAX_CATEGORIES];
        o[..classes].copy_from_slice(&logits[CATEGORY..k]);
        for j in 0..classes {
            mass[j] += w * o[j];
        }
        recs.push(SampleRec {
            cell: smp.cell,
            x: logits[DENSITY],
            alpha,
            t: transmittance,
            s: smp.s,
            c,
            o,
        });
        transmittance *= 1.0 - alpha;
    }

    let mut g_rgb = [0.0; 3];
    let mut l_rgb = 0.0;
    for i in 0..3 {
        let d = rgb[i] - ray.rgb[i];
        l_rgb += d.abs() / 3.0;
        g_rgb[i] = scale.rgb * sign(d) / 3.0;
    }
    let (l_depth, g_depth) = if ray.depth.is_finite() {
        let d = depth - ray.depth;
        (Some(d.abs()), scale.depth * sign(d))
    } else {
        (None, 0.0)
    };
    let target = ray.category as usize;
    let (l_cat, g_mass, g_w) = if w_sum < EMPTY_RAY {
        ((classes as f64).ln(), 0.0, 0.0)
    } else {
        let p = mass[target] / w_sum;
        if p < CE_FLOOR {
            (-CE_FLOOR.ln(), 0.0, 0.0)
        } else {
            (-p.ln(), -scale.category / mass[target], scale.category / w_sum)
        }
    };

    let mut cells = Vec::with_capacity(recs.len());
    let mut dl = vec![0.0; recs.len() * k];
    let mut r = 0.0;
    for (i, rec) in recs.iter().enumerate().rev() {
        let w = rec.t * rec.alpha;
        let g = g_rgb[0] * rec.c[0]
            + g_rgb[1] * rec.c[1]
            + g_rgb[2] * rec.c[2]
            + g_depth * rec.s
            + g_mass * rec.o[target]
            + g_w;
        let d_alpha = rec.t * (g - r);
        r = rec.alpha * g + (1.0 - rec.alpha) * r;
        let out = &mut dl[i * k..(i + 1) * k];
        out[DENSITY] = d_alpha * delta * (1.0 - rec.alpha) * sigmoid(rec.x);
        for c in 0..3 {
            out[COLOR + c] = w * g_rgb[c] * rec.c[c] * (1.0 - rec.c[c]);
        }
        if g_mass != 0.0 {
            let gk = w * g_mass;
            let dot = gk * rec.o[target];
            for j in 0..classes {
                let gj = if j == target { gk } else { 0.0 };
                out[CATEGORY + j] = rec.o[j] * (gj - dot);
            }
        }
        cells.push(rec.cell);
    }
    cells.reverse();
    RayGrad {
        rgb: l_rgb,
        depth: l_depth,
        category: l_cat,
        cells,
        dl,
    }
}

pub(crate) fn loss_into(
    field: &FieldGrid,
    batch: &[RayTarget],
    weights: &LossWeights,
    opts: &RenderOptions,
    jitter: Option<&[f64]>,
    grad: &mut GradBuffer,
) -> Result<LossTerms, FieldError> {
    if batch.is_empty() {
        return Err(FieldError::EmptyBatch);
    }
    let classes = field.num_categories();
    if let Some(r) = batch.iter().find(|r| r.category as usize >= classes) {
        return Err(FieldError::CategoryOutOfRange {
            category: r.category,
            classes,
        });
    }
    let n = batch.len() as f64;
    let n_depth = batch.iter().filter(|r| r.depth.is_finite()).count();
    let scale = Scale {
        rgb: weights.rgb / n,
        depth: if n_depth > 0 { weights.depth / n_depth as f64 } else { 0.0 },
        category: weights.category / n,
    };
    let ns = opts.n_samples;
    let rays = par::map(batch.len(), |i| {
        let j = jitter.map(|j| &j[i * ns..(i + 1) * ns]);
        ray_grad(field, &batch[i], opts, j, &scale)
    });
    let k = field.channels();
    let mut terms = LossTerms::default();
    for ray in &rays {
        terms.rgb += ray.rgb;
        terms.depth += ray.depth.unwrap_or(0.0);
        terms.category += ray.category;
        for (cell, dl) in ray.cells.iter().zip(ray.dl.chunks_exact(k)) {
            grad.scatter(field.corner_offsets(), cell, dl);
        }
    }
    terms.rgb /= n;
    terms.depth = if n_depth > 0 { terms.depth / n_depth as f64 } else { 0.0 };
    terms.category /= n;
    terms.total =
        weights.rgb * terms.rgb + weights.depth * terms.depth + weights.category * terms.category;
    Ok(terms)
}

/// Loss over a batch of rays (bin-midpoint samples) and its gradient with
/// respect to every field parameter, in [`FieldGrid::params`] layout.
pub fn loss(
    field: &FieldGrid,
    batch: &[RayTarget],
    weights: &LossWeights,
    opts: &RenderOptions,
) -> Result<(LossTerms, Vec<f64>), FieldError> {
    let mut g = GradBuffer::new(field);
    let terms = loss_into(field, batch, weights, opts, None, &mut g)?;
    Ok((terms, g.grad))
}
