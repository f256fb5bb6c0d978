use std::fmt::Write as _;

use super::grid::FieldGrid;
use super::FieldError;
use crate::par;
use crate::scene::{Aabb, Vec3};

/// Edge length of occupancy voxels, in meters.
pub const OCCUPANCY_VOXEL: f64 = 0.2;

/// Dense boolean voxel grid, x fastest, then y, then z.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub voxel: f64,
    pub dims: [usize; 3],
    pub cells: Vec<bool>,
}

impl VoxelGrid {
    /// All-false grid covering `bounds`.
    pub fn new(bounds: &Aabb, voxel: f64) -> Self {
        let e = bounds.extent();
        let dims = [0, 1, 2].map(|a| ((e[a] / voxel - 1e-9).ceil() as usize).max(1));
        Self {
            origin: bounds.min,
            voxel,
            dims,
            cells: vec![false; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.dims[1] + iy) * self.dims[0] + ix
    }

    pub fn coords(&self, i: usize) -> [usize; 3] {
        let ix = i % self.dims[0];
        let iy = (i / self.dims[0]) % self.dims[1];
        let iz = i / (self.dims[0] * self.dims[1]);
        [ix, iy, iz]
    }

    pub fn center(&self, ix: usize, iy: usize, iz: usize) -> Vec3 {
        self.origin
            + Vec3::new(ix as f64 + 0.5, iy as f64 + 0.5, iz as f64 + 0.5) * self.voxel
    }

    /// Voxel containing `p`, if inside the grid.
    pub fn cell_of(&self, p: &Vec3) -> Option<[usize; 3]> {
        let mut out = [0; 3];
        for a in 0..3 {
            let g = ((p[a] - self.origin[a]) / self.voxel).floor();
            if g < 0.0 || g >= self.dims[a] as f64 {
                return None;
            }
            out[a] = g as usize;
        }
        Some(out)
    }

    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> bool {
        self.cells[self.index(ix, iy, iz)]
    }

    pub fn set(&mut self, ix: usize, iy: usize, iz: usize, v: bool) {
        let i = self.index(ix, iy, iz);
        self.cells[i] = v;
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Run-length encoded text form (see `docs/formats.md`).
    pub fn to_rle(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ASOCC1");
        let _ = writeln!(s, "dims {} {} {}", self.dims[0], self.dims[1], self.dims[2]);
        let _ = writeln!(s, "origin {} {} {}", self.origin.x, self.origin.y, self.origin.z);
        let _ = writeln!(s, "voxel {}", self.voxel);
        let mut i = 0;
        while i < self.cells.len() {
            let v = self.cells[i];
            let mut j = i;
            while j < self.cells.len() && self.cells[j] == v {
                j += 1;
            }
            let _ = writeln!(s, "{} {}", v as u8, j - i);
            i = j;
        }
        s
    }

    pub fn from_rle(text: &str) -> Result<Self, FieldError> {
        let bad = |m: &str| FieldError::Checkpoint(format!("occupancy: {m}"));
        let mut lines = text.lines();
        if lines.next() != Some("ASOCC1") {
            return Err(bad("missing ASOCC1 header"));
        }
        let mut field = |name: &str, n: usize| -> Result<Vec<f64>, FieldError> {
            let line = lines.next().ok_or_else(|| bad("truncated header"))?;
            let mut it = line.split_whitespace();
            if it.next() != Some(name) {
                return Err(bad(&format!("expected `{name}`")));
            }
            let v: Vec<f64> = it
                .map(|t| t.parse::<f64>().map_err(|_| bad("bad number")))
                .collect::<Result<_, _>>()?;
            if v.len() != n {
                return Err(bad(&format!("`{name}` needs {n} values")));
            }
            Ok(v)
        };
        let d = field("dims", 3)?;
        let o = field("origin", 3)?;
        let voxel = field("voxel", 1)?[0];
        let dims = [d[0] as usize, d[1] as usize, d[2] as usize];
        let total = dims[0] * dims[1] * dims[2];
        let mut cells = Vec::with_capacity(total);
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (v, n) = line.split_once(' ').ok_or_else(|| bad("bad run"))?;
            let n: usize = n.trim().parse().map_err(|_| bad("bad run length"))?;
            let v = match v {
                "0" => false,
                "1" => true,
                _ => return Err(bad("run value must be 0 or 1")),
            };
            if cells.len() + n > total {
                return Err(bad("runs exceed grid size"));
            }
            cells.extend(std::iter::repeat_n(v, n));
        }
        if cells.len() != total {
            return Err(bad("runs do not cover the grid"));
        }
        Ok(Self {
            origin: Vec3::new(o[0], o[1], o[2]),
            voxel,
            dims,
            cells,
        })
    }
}

/// Voxels (0.2 m) whose center density exceeds `sigma_threshold`.
pub fn export_occupancy(field: &FieldGrid, sigma_threshold: f64) -> VoxelGrid {
    let mut grid = VoxelGrid::new(field.bounds(), OCCUPANCY_VOXEL);
    let cells = par::map(grid.len(), |i| {
        let [x, y, z] = grid.coords(i);
        field.sigma(&grid.center(x, y, z)) > sigma_threshold
    });
    grid.cells = cells;
    grid
}
