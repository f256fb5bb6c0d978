use serde::{Deserialize, Serialize};

use crate::field::{export_occupancy, VoxelGrid, OCCUPANCY_VOXEL};
use crate::info::Ensemble;
use crate::scene::{Aabb, Observation, Vec3};

/// Per-voxel count of ground-truth observations whose rays reached the
/// voxel (each voxel counted at most once per observation).
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityGrid {
    pub origin: Vec3,
    pub voxel: f64,
    pub dims: [usize; 3],
    pub counts: Vec<u32>,
    stamp: Vec<u32>,
    observations: u32,
}

impl VisibilityGrid {
    pub fn new(bounds: &Aabb) -> Self {
        let g = VoxelGrid::new(bounds, OCCUPANCY_VOXEL);
        Self {
            origin: g.origin,
            voxel: g.voxel,
            dims: g.dims,
            counts: vec![0; g.len()],
            stamp: vec![0; g.len()],
            observations: 0,
        }
    }

    #[inline]
    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (iz * self.dims[1] + iy) * self.dims[0] + ix
    }

    pub fn count_at(&self, ix: usize, iy: usize, iz: usize) -> u32 {
        self.counts[self.index(ix, iy, iz)]
    }

    pub fn observations(&self) -> u32 {
        self.observations
    }

    /// Marks every voxel traversed by the observation's rays, up to and
    /// including the voxel of the hit point.
    pub fn record(&mut self, obs: &Observation) {
        self.observations += 1;
        let stamp = self.observations;
        let origin = obs.pose.translation;
        for i in 0..obs.pixel_count() {
            let dir = obs.ray_dir(i);
            self.traverse(&origin, &dir, obs.depth[i], stamp);
        }
    }

    fn traverse(&mut self, origin: &Vec3, dir: &Vec3, depth: f64, stamp: u32) {
        let mut cell = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        let mut step = [0i64; 3];
        for a in 0..3 {
            let g = (origin[a] - self.origin[a]) / self.voxel;
            cell[a] = g.floor() as i64;
            if dir[a] > 0.0 {
                step[a] = 1;
                t_max[a] = ((cell[a] + 1) as f64 - g) * self.voxel / dir[a];
                t_delta[a] = self.voxel / dir[a];
            } else if dir[a] < 0.0 {
                step[a] = -1;
                t_max[a] = (g - cell[a] as f64) * self.voxel / -dir[a];
                t_delta[a] = self.voxel / -dir[a];
            }
        }
        loop {
            if (0..3).any(|a| cell[a] < 0 || cell[a] >= self.dims[a] as i64) {
                return;
            }
            let i = self.index(cell[0] as usize, cell[1] as usize, cell[2] as usize);
            if self.stamp[i] != stamp {
                self.stamp[i] = stamp;
                self.counts[i] += 1;
            }
            let a = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
                0
            } else if t_max[1] <= t_max[2] {
                1
            } else {
                2
            };
            if t_max[a] > depth {
                return;
            }
            cell[a] += step[a];
            t_max[a] += t_delta[a];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    Free,
    Occupied,
    Unknown,
}

/// Planar occupancy slice at the flight height.
#[derive(Debug, Clone, PartialEq)]
pub struct OccGrid2D {
    pub origin: [f64; 2],
    pub cell: f64,
    pub width: usize,
    pub height: usize,
    pub z: f64,
    pub states: Vec<CellState>,
    /// Observation counts per cell.
    pub counts: Vec<u32>,
}

impl OccGrid2D {
    pub fn new(origin: [f64; 2], cell: f64, width: usize, height: usize, z: f64, fill: CellState) -> Self {
        Self {
            origin,
            cell,
            width,
            height,
            z,
            states: vec![fill; width * height],
            counts: vec![0; width * height],
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    #[inline]
    pub fn index(&self, c: [usize; 2]) -> usize {
        c[1] * self.width + c[0]
    }

    #[inline]
    pub fn coords(&self, i: usize) -> [usize; 2] {
        [i % self.width, i / self.width]
    }

    pub fn state(&self, c: [usize; 2]) -> CellState {
        self.states[self.index(c)]
    }

    pub fn set(&mut self, c: [usize; 2], s: CellState) {
        let i = self.index(c);
        self.states[i] = s;
    }

    pub fn is_free(&self, c: [usize; 2]) -> bool {
        self.state(c) == CellState::Free
    }

    pub fn center(&self, c: [usize; 2]) -> Vec3 {
        Vec3::new(
            self.origin[0] + (c[0] as f64 + 0.5) * self.cell,
            self.origin[1] + (c[1] as f64 + 0.5) * self.cell,
            self.z,
        )
    }

    pub fn cell_of(&self, p: &Vec3) -> Option<[usize; 2]> {
        let gx = ((p.x - self.origin[0]) / self.cell).floor();
        let gy = ((p.y - self.origin[1]) / self.cell).floor();
        if gx < 0.0 || gy < 0.0 || gx >= self.width as f64 || gy >= self.height as f64 {
            return None;
        }
        Some([gx as usize, gy as usize])
    }

    /// In-grid 8-neighbors of `c`.
    pub fn neighbors8(&self, c: [usize; 2]) -> impl Iterator<Item = ([usize; 2], i64, i64)> + '_ {
        let (w, h) = (self.width as i64, self.height as i64);
        (-1i64..=1)
            .flat_map(|dy| (-1i64..=1).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| dx != 0 || dy != 0)
            .filter_map(move |(dx, dy)| {
                let x = c[0] as i64 + dx;
                let y = c[1] as i64 + dy;
                (x >= 0 && y >= 0 && x < w && y < h).then_some(([x as usize, y as usize], dx, dy))
            })
    }

    pub fn free_cells(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.states[i] == CellState::Free).collect()
    }
}

/// Fused free space: the undilated 3-D free set (for validating
/// trajectories) and the dilated planning slice.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeSpace {
    /// True where no member is occupied (before dilation).
    pub unoccupied: VoxelGrid,
    /// True where some member is occupied, grown by one voxel; voxels
    /// outside the grid count as occupied.
    pub dilated: VoxelGrid,
    /// Whether each slice cell has been observed.
    pub known: Vec<bool>,
    pub layer: usize,
    pub grid: OccGrid2D,
}

impl FreeSpace {
    /// Free before dilation: unoccupied in every member and observed.
    pub fn is_free_point(&self, p: &Vec3) -> bool {
        let Some([x, y, z]) = self.unoccupied.cell_of(p) else {
            return false;
        };
        let Some(c) = self.grid.cell_of(p) else {
            return false;
        };
        self.unoccupied.get(x, y, z) && self.known[self.grid.index(c)]
    }
}

/// Grows occupied voxels by one in the 26-neighborhood; outside counts as
/// occupied.
pub fn dilate(occupied: &VoxelGrid) -> VoxelGrid {
    let mut out = occupied.clone();
    let [nx, ny, nz] = occupied.dims;
    for iz in 0..nz {
        for iy in 0..ny {
            for ix in 0..nx {
                if iz == 0 || iy == 0 || ix == 0 || iz + 1 == nz || iy + 1 == ny || ix + 1 == nx {
                    out.set(ix, iy, iz, true);
                    continue;
                }
                let mut hit = false;
                'n: for z in iz - 1..=iz + 1 {
                    for y in iy - 1..=iy + 1 {
                        for x in ix - 1..=ix + 1 {
                            if occupied.get(x, y, z) {
                                hit = true;
                                break 'n;
                            }
                        }
                    }
                }
                out.set(ix, iy, iz, hit);
            }
        }
    }
    out
}

/// Layer index of height `z` in a grid starting at `min_z`.
pub fn slice_layer(min_z: f64, voxel: f64, z: f64, nz: usize) -> usize {
    (((z - min_z) / voxel).floor().max(0.0) as usize).min(nz - 1)
}

/// Intersects the members' free space, dilates obstacles and cuts the
/// planning slice at height `z_plan`. Slice cells never observed in the
/// layers `z_plan ± 1 voxel` are unknown.
pub fn fuse_free_space(occupancies: &[VoxelGrid], visibility: Option<&VisibilityGrid>, z_plan: f64) -> FreeSpace {
    let first = &occupancies[0];
    let mut occupied = first.clone();
    for o in &occupancies[1..] {
        assert_eq!(o.dims, first.dims, "occupancy grids must share a layout");
        for (a, b) in occupied.cells.iter_mut().zip(&o.cells) {
            *a |= *b;
        }
    }
    let dilated = dilate(&occupied);
    let mut unoccupied = occupied;
    for c in unoccupied.cells.iter_mut() {
        *c = !*c;
    }
    let [nx, ny, nz] = first.dims;
    let layer = slice_layer(first.origin.z, first.voxel, z_plan, nz);
    let mut grid = OccGrid2D::new([first.origin.x, first.origin.y], first.voxel, nx, ny, z_plan, CellState::Free);
    let mut known = vec![true; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let i = grid.index([ix, iy]);
            if let Some(vis) = visibility {
                let lo = layer.saturating_sub(1);
                let hi = (layer + 1).min(nz - 1);
                known[i] = (lo..=hi).any(|z| vis.count_at(ix, iy, z) > 0);
                grid.counts[i] = vis.count_at(ix, iy, layer);
            }
            grid.states[i] = if dilated.get(ix, iy, layer) {
                CellState::Occupied
            } else if !known[i] {
                CellState::Unknown
            } else {
                CellState::Free
            };
        }
    }
    FreeSpace {
        unoccupied,
        dilated,
        known,
        layer,
        grid,
    }
}

/// Exports every member's occupancy and fuses them.
pub fn fuse_ensemble(
    ensemble: &Ensemble,
    sigma_threshold: f64,
    visibility: Option<&VisibilityGrid>,
    z_plan: f64,
) -> FreeSpace {
    let occ: Vec<VoxelGrid> = ensemble
        .members
        .iter()
        .map(|m| export_occupancy(m, sigma_threshold))
        .collect();
    fuse_free_space(&occ, visibility, z_plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{CameraIntrinsics, Pose};

    fn bounds() -> Aabb {
        Aabb::new(Vec3::zeros(), Vec3::new(2.0, 2.0, 2.0))
    }

    #[test]
    fn intersection_of_free_space() {
        let a = VoxelGrid::new(&bounds(), 0.2);
        let mut b = a.clone();
        b.set(5, 5, 7, true);
        let fs = fuse_free_space(&[a.clone(), b.clone()], None, 1.5);
        assert!(!fs.unoccupied.get(5, 5, 7));
        for (i, &free) in fs.unoccupied.cells.iter().enumerate() {
            if free {
                assert!(!a.cells[i] && !b.cells[i]);
            }
        }
    }

    #[test]
    fn single_voxel_dilates_to_block() {
        let mut a = VoxelGrid::new(&bounds(), 0.2);
        a.set(4, 4, 4, true);
        let d = dilate(&a);
        let mut inner = 0;
        for z in 1..9 {
            for y in 1..9 {
                for x in 1..9 {
                    let block = (3..=5).contains(&x) && (3..=5).contains(&y) && (3..=5).contains(&z);
                    assert_eq!(d.get(x, y, z), block);
                    inner += block as usize;
                }
            }
        }
        assert_eq!(inner, 27);
    }

    #[test]
    fn all_free_dilates_only_at_bounds() {
        let a = VoxelGrid::new(&bounds(), 0.2);
        let fs = fuse_free_space(&[a.clone(), a], None, 1.5);
        let free = fs.grid.free_cells().len();
        assert_eq!(free, 8 * 8);
        assert!(fs.grid.states[0] == CellState::Occupied);
    }

    #[test]
    fn visibility_counts_once_per_observation() {
        let b = Aabb::new(Vec3::new(-1.0, -1.0, 0.0), Vec3::new(3.0, 1.0, 2.0));
        let mut vis = VisibilityGrid::new(&b);
        let k = CameraIntrinsics::new(4, 4, 0.3).unwrap();
        let pose = Pose::from_yaw(Vec3::new(0.0, 0.0, 1.0), 0.0);
        let obs = Observation {
            pose,
            intrinsics: k,
            rgb: vec![[0.0; 3]; 16],
            depth: vec![1.0; 16],
            category: vec![0; 16],
        };
        vis.record(&obs);
        vis.record(&obs);
        assert_eq!(*vis.counts.iter().max().unwrap(), 2);
        // Voxel just in front of the camera observed, far voxel not.
        assert_eq!(vis.count_at(5, 5, 5), 2);
        assert_eq!(vis.count_at(14, 5, 5), 0);
    }

    #[test]
    fn unknown_cells_from_visibility() {
        let a = VoxelGrid::new(&bounds(), 0.2);
        let vis = VisibilityGrid::new(&bounds());
        let fs = fuse_free_space(&[a.clone(), a], Some(&vis), 1.5);
        assert!(fs.grid.states.iter().all(|&s| s != CellState::Free));
        assert!(!fs.is_free_point(&Vec3::new(1.0, 1.0, 1.5)));
    }
}
