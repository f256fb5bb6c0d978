use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::FieldError;
use crate::scene::{Aabb, Vec3};

/// Upper bound on the number of semantic categories a field can hold.
pub const MAX_CATEGORIES: usize = 16;
/// Density + 3 color + categories.
pub const MAX_CHANNELS: usize = 4 + MAX_CATEGORIES;

pub(crate) const DENSITY: usize = 0;
pub(crate) const COLOR: usize = 1;
pub(crate) const CATEGORY: usize = 4;

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// In-place softmax over `v`.
#[inline]
pub fn softmax(v: &mut [f64]) {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        z += *x;
    }
    for x in v.iter_mut() {
        *x /= z;
    }
}

/// Initial logits of a fresh field.
///
/// The mean density logit sets the initial opacity; the noise terms add a
/// smooth random perturbation (a coarse Gaussian lattice, trilinearly
/// upsampled) so that independently seeded ensemble members disagree about
/// regions they have never been trained on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldInit {
    pub density_logit: f64,
    pub density_noise: f64,
    pub color_noise: f64,
    pub category_noise: f64,
    /// Vertices per axis of the noise lattice.
    pub noise_lattice: usize,
}

impl Default for FieldInit {
    fn default() -> Self {
        Self {
            density_logit: -4.0,
            density_noise: 1.0,
            color_noise: 1.0,
            category_noise: 2.0,
            noise_lattice: 5,
        }
    }
}

impl FieldInit {
    pub fn constant(density_logit: f64) -> Self {
        Self {
            density_logit,
            density_noise: 0.0,
            color_noise: 0.0,
            category_noise: 0.0,
            noise_lattice: 2,
        }
    }
}

/// Trilinear cell lookup: index of the lower corner vertex and the
/// fractional offsets inside the cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub base: usize,
    pub frac: [f64; 3],
}

impl Cell {
    #[inline]
    pub fn corner_weights(&self) -> [f64; 8] {
        let [fx, fy, fz] = self.frac;
        let (gx, gy, gz) = (1.0 - fx, 1.0 - fy, 1.0 - fz);
        [
            gx * gy * gz,
            fx * gy * gz,
            gx * fy * gz,
            fx * fy * gz,
            gx * gy * fz,
            fx * gy * fz,
            gx * fy * fz,
            fx * fy * fz,
        ]
    }
}

/// Activated field value at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub color: [f64; 3],
    pub sigma: f64,
    pub category: Vec<f64>,
}

/// Explicit voxel radiance field: per-vertex density, color and category
/// logits, trilinearly interpolated and then activated (softplus, sigmoid,
/// softmax).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    bounds: Aabb,
    res: [usize; 3],
    num_categories: usize,
    params: Vec<f64>,
    corner_offsets: [usize; 8],
}

impl FieldGrid {
    /// `res` counts vertices per axis; each must be at least 2.
    pub fn new(
        bounds: Aabb,
        res: [usize; 3],
        num_categories: usize,
        init: &FieldInit,
        seed: u64,
    ) -> Result<Self, FieldError> {
        let mut field = Self::zeroed(bounds, res, num_categories)?;
        let k = field.channels();
        let lattice = init.noise_lattice.max(2);
        let noisy = init.density_noise != 0.0 || init.color_noise != 0.0 || init.category_noise != 0.0;
        if !noisy {
            for v in field.params.chunks_exact_mut(k) {
                v[DENSITY] = init.density_logit;
            }
            return Ok(field);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise_len = lattice * lattice * lattice * k;
        let noise: Vec<f64> = (0..noise_len)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let coarse = FieldGrid {
            bounds,
            res: [lattice; 3],
            num_categories,
            params: noise,
            corner_offsets: corner_offsets([lattice; 3]),
        };
        let mut scratch = [0.0; MAX_CHANNELS];
        let [nx, ny, nz] = res;
        for iz in 0..nz {
            for iy in 0..ny {
                for ix in 0..nx {
                    let p = field.vertex_position(ix, iy, iz);
                    coarse.interp(&coarse.locate(&p), &mut scratch[..k]);
                    let v = field.vertex_index(ix, iy, iz) * k;
                    let out = &mut field.params[v..v + k];
                    out[DENSITY] = init.density_logit + init.density_noise * scratch[DENSITY];
                    for c in 0..3 {
                        out[COLOR + c] = init.color_noise * scratch[COLOR + c];
                    }
                    for c in 0..num_categories {
                        out[CATEGORY + c] = init.category_noise * scratch[CATEGORY + c];
                    }
                }
            }
        }
        Ok(field)
    }

    /// All logits zero.
    pub fn zeroed(bounds: Aabb, res: [usize; 3], num_categories: usize) -> Result<Self, FieldError> {
        if res.iter().any(|&n| n < 2) {
            return Err(FieldError::InvalidResolution(res));
        }
        if !(1..=MAX_CATEGORIES).contains(&num_categories) {
            return Err(FieldError::TooManyCategories(num_categories));
        }
        if (0..3).any(|a| bounds.max[a] <= bounds.min[a]) {
            return Err(FieldError::EmptyBounds);
        }
        let k = 4 + num_categories;
        Ok(Self {
            bounds,
            res,
            num_categories,
            params: vec![0.0; res[0] * res[1] * res[2] * k],
            corner_offsets: corner_offsets(res),
        })
    }

    /// Builds a field from raw logits (vertex-major, `4 + C` per vertex).
    pub fn from_params(
        bounds: Aabb,
        res: [usize; 3],
        num_categories: usize,
        params: Vec<f64>,
    ) -> Result<Self, FieldError> {
        let mut f = Self::zeroed(bounds, res, num_categories)?;
        if params.len() != f.params.len() {
            return Err(FieldError::ParamLength {
                expected: f.params.len(),
                got: params.len(),
            });
        }
        f.params = params;
        Ok(f)
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.res
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    /// Logits per vertex.
    pub fn channels(&self) -> usize {
        4 + self.num_categories
    }

    pub fn vertex_count(&self) -> usize {
        self.res[0] * self.res[1] * self.res[2]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Vertex spacing per axis.
    pub fn spacing(&self) -> Vec3 {
        let e = self.bounds.extent();
        Vec3::new(
            e.x / (self.res[0] - 1) as f64,
            e.y / (self.res[1] - 1) as f64,
            e.z / (self.res[2] - 1) as f64,
        )
    }

    #[inline]
    pub fn vertex_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.res[1] + iy) * self.res[0] + ix
    }

    pub fn vertex_position(&self, ix: usize, iy: usize, iz: usize) -> Vec3 {
        let s = self.spacing();
        self.bounds.min + Vec3::new(ix as f64 * s.x, iy as f64 * s.y, iz as f64 * s.z)
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        let k = self.channels();
        &self.params[v * k..(v + 1) * k]
    }

    pub fn vertex_mut(&mut self, v: usize) -> &mut [f64] {
        let k = self.channels();
        &mut self.params[v * k..(v + 1) * k]
    }

    pub(crate) fn corner_offsets(&self) -> &[usize; 8] {
        &self.corner_offsets
    }

    /// Cell containing `p`, clamping points outside the bounds to the
    /// boundary.
    #[inline]
    pub fn locate(&self, p: &Vec3) -> Cell {
        let mut idx = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let n = self.res[a];
            let g = (p[a] - self.bounds.min[a]) / (self.bounds.max[a] - self.bounds.min[a])
                * (n - 1) as f64;
            let g = g.clamp(0.0, (n - 1) as f64);
            let i = (g.floor() as usize).min(n - 2);
            idx[a] = i;
            frac[a] = g - i as f64;
        }
        Cell {
            base: self.vertex_index(idx[0], idx[1], idx[2]),
            frac,
        }
    }

    /// Interpolated logits at `cell` into `out` (length [`Self::channels`]).
    #[inline]
    pub fn interp(&self, cell: &Cell, out: &mut [f64]) {
        let k = out.len();
        out.fill(0.0);
        let w = cell.corner_weights();
        for (c, &off) in self.corner_offsets.iter().enumerate() {
            let v = (cell.base + off) * k;
            let src = &self.params[v..v + k];
            let wc = w[c];
            for (o, s) in out.iter_mut().zip(src) {
                *o += wc * s;
            }
        }
    }

    #[inline]
    pub(crate) fn interp_density(&self, cell: &Cell) -> f64 {
        let k = self.channels();
        let w = cell.corner_weights();
        let mut x = 0.0;
        for (c, &off) in self.corner_offsets.iter().enumerate() {
            x += w[c] * self.params[(cell.base + off) * k + DENSITY];
        }
        x
    }

    /// Density at `p` after activation.
    pub fn sigma(&self, p: &Vec3) -> f64 {
        softplus(self.interp_density(&self.locate(p)))
    }

    /// Color, density and category distribution at `p`.
    pub fn query(&self, p: &Vec3) -> FieldSample {
        let k = self.channels();
        let mut l = [0.0; MAX_CHANNELS];
        self.interp(&self.locate(p), &mut l[..k]);
        let mut category = l[CATEGORY..k].to_vec();
        softmax(&mut category);
        FieldSample {
            color: [sigmoid(l[COLOR]), sigmoid(l[COLOR + 1]), sigmoid(l[COLOR + 2])],
            sigma: softplus(l[DENSITY]),
            category,
        }
    }
}

fn corner_offsets(res: [usize; 3]) -> [usize; 8] {
    let sx = 1;
    let sy = res[0];
    let sz = res[0] * res[1];
    [0, sx, sy, sx + sy, sz, sz + sx, sz + sy, sz + sx + sy]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_bounds() -> Aabb {
        Aabb::new(Vec3::zeros(), Vec3::new(1.0, 2.0, 3.0))
    }

    #[test]
    fn very_negative_density_is_transparent() {
        let f = FieldGrid::new(unit_bounds(), [4, 4, 4], 3, &FieldInit::constant(-20.0), 0).unwrap();
        for p in [Vec3::zeros(), Vec3::new(0.3, 1.1, 2.9), Vec3::new(1.0, 2.0, 3.0)] {
            assert!(f.query(&p).sigma < 1e-8);
        }
    }

    #[test]
    fn vertex_query_matches_vertex_logits() {
        let f = FieldGrid::new(unit_bounds(), [5, 4, 3], 4, &FieldInit::default(), 11).unwrap();
        let (ix, iy, iz) = (2, 1, 1);
        let p = f.vertex_position(ix, iy, iz);
        let s = f.query(&p);
        let v = f.vertex(f.vertex_index(ix, iy, iz));
        assert!((s.sigma - softplus(v[0])).abs() < 1e-12);
        for c in 0..3 {
            assert!((s.color[c] - sigmoid(v[1 + c])).abs() < 1e-12);
        }
        let mut cat = v[4..].to_vec();
        softmax(&mut cat);
        for (a, b) in s.category.iter().zip(&cat) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_cell_interpolates_to_constant() {
        let mut f = FieldGrid::zeroed(unit_bounds(), [3, 3, 3], 2).unwrap();
        for v in 0..f.vertex_count() {
            f.vertex_mut(v).copy_from_slice(&[1.5, 0.2, -0.3, 0.7, 2.0, -1.0]);
        }
        let a = f.query(&Vec3::new(0.25, 0.5, 0.75));
        let b = f.query(&f.vertex_position(0, 0, 0));
        assert!((a.sigma - b.sigma).abs() < 1e-12);
        assert!((a.category[0] - b.category[0]).abs() < 1e-12);
    }

    #[test]
    fn activations_are_in_range() {
        let f = FieldGrid::new(unit_bounds(), [6, 6, 6], 5, &FieldInit::default(), 3).unwrap();
        for i in 0..50 {
            let t = i as f64 / 49.0;
            let s = f.query(&Vec3::new(t, 2.0 * (1.0 - t), 3.0 * t * t));
            assert!(s.sigma >= 0.0);
            assert!(s.color.iter().all(|c| (0.0..=1.0).contains(c)));
            assert!((s.category.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn outside_points_are_clamped() {
        let f = FieldGrid::new(unit_bounds(), [4, 4, 4], 2, &FieldInit::default(), 9).unwrap();
        let inside = f.query(&Vec3::new(1.0, 2.0, 3.0));
        let outside = f.query(&Vec3::new(5.0, 9.0, 30.0));
        assert_eq!(inside, outside);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(FieldGrid::zeroed(unit_bounds(), [1, 4, 4], 2).is_err());
        assert!(FieldGrid::zeroed(unit_bounds(), [4, 4, 4], MAX_CATEGORIES + 1).is_err());
    }

    #[test]
    fn seeds_give_different_priors() {
        let a = FieldGrid::new(unit_bounds(), [4, 4, 4], 3, &FieldInit::default(), 1).unwrap();
        let b = FieldGrid::new(unit_bounds(), [4, 4, 4], 3, &FieldInit::default(), 2).unwrap();
        assert_ne!(a.params(), b.params());
        let c = FieldGrid::new(unit_bounds(), [4, 4, 4], 3, &FieldInit::default(), 1).unwrap();
        assert_eq!(a.params(), c.params());
    }
}
