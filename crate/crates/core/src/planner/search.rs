use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;

use super::grid::OccGrid2D;
use crate::scene::Vec3;

const NONE: usize = usize::MAX;

#[derive(PartialEq)]
struct Entry {
    dist: f64,
    cell: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        o.dist.total_cmp(&self.dist).then(o.cell.cmp(&self.cell))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Single-source shortest distances (meters) over free cells,
/// 8-connected, without cutting corners.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    pub start: [usize; 2],
    pub dist: Vec<f64>,
    prev: Vec<usize>,
    width: usize,
}

impl DistanceMap {
    pub fn reachable(&self, c: [usize; 2]) -> bool {
        self.dist[c[1] * self.width + c[0]].is_finite()
    }

    pub fn distance(&self, c: [usize; 2]) -> f64 {
        self.dist[c[1] * self.width + c[0]]
    }

    /// Cells from start to `goal`, or `None` when unreachable.
    pub fn cells_to(&self, goal: [usize; 2]) -> Option<Vec<[usize; 2]>> {
        let mut i = goal[1] * self.width + goal[0];
        if !self.dist[i].is_finite() {
            return None;
        }
        let mut out = vec![goal];
        while self.prev[i] != NONE {
            i = self.prev[i];
            out.push([i % self.width, i / self.width]);
        }
        out.reverse();
        Some(out)
    }
}

/// Dijkstra from `start`. The start cell is always expanded; other cells must
/// be free.
pub fn distance_map(grid: &OccGrid2D, start: [usize; 2]) -> DistanceMap {
    let n = grid.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![NONE; n];
    let s = grid.index(start);
    dist[s] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry { dist: 0.0, cell: s });
    while let Some(Entry { dist: d, cell }) = heap.pop() {
        if d > dist[cell] {
            continue;
        }
        let c = grid.coords(cell);
        for (nb, dx, dy) in grid.neighbors8(c) {
            if !grid.is_free(nb) {
                continue;
            }
            let diagonal = dx != 0 && dy != 0;
            if diagonal {
                let a = [(c[0] as i64 + dx) as usize, c[1]];
                let b = [c[0], (c[1] as i64 + dy) as usize];
                if !grid.is_free(a) || !grid.is_free(b) {
                    continue;
                }
            }
            let step = if diagonal { SQRT_2 } else { 1.0 } * grid.cell;
            let j = grid.index(nb);
            let nd = d + step;
            if nd < dist[j] {
                dist[j] = nd;
                prev[j] = cell;
                heap.push(Entry { dist: nd, cell: j });
            }
        }
    }
    DistanceMap {
        start,
        dist,
        prev,
        width: grid.width,
    }
}

/// Drops cells where the path keeps its direction.
pub fn decimate(cells: &[[usize; 2]]) -> Vec<[usize; 2]> {
    if cells.len() <= 2 {
        return cells.to_vec();
    }
    let dir = |a: [usize; 2], b: [usize; 2]| (b[0] as i64 - a[0] as i64, b[1] as i64 - a[1] as i64);
    let mut out = vec![cells[0]];
    for i in 1..cells.len() - 1 {
        if dir(cells[i - 1], cells[i]) != dir(cells[i], cells[i + 1]) {
            out.push(cells[i]);
        }
    }
    out.push(*cells.last().unwrap());
    out
}

/// Shortest 8-connected route as decimated cell-center waypoints. Empty when
/// the goal is unreachable.
pub fn dijkstra(grid: &OccGrid2D, start: [usize; 2], goal: [usize; 2]) -> Vec<Vec3> {
    distance_map(grid, start)
        .cells_to(goal)
        .map(|cells| decimate(&cells).into_iter().map(|c| grid.center(c)).collect())
        .unwrap_or_default()
}

pub fn polyline_length(points: &[Vec3]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}
