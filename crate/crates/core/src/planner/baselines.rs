use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::grid::{CellState, OccGrid2D};
use super::search::DistanceMap;

/// Draws a free cell with probability ∝ exp(−β (c(i) − min c)), where c
/// counts past observations of the cell. With a distance map only
/// reachable cells are eligible.
pub fn frequency_waypoint<R: Rng>(
    grid: &OccGrid2D,
    reachable: Option<&DistanceMap>,
    beta: f64,
    rng: &mut R,
) -> Option<[usize; 2]> {
    let cells: Vec<usize> = grid
        .free_cells()
        .into_iter()
        .filter(|&i| reachable.is_none_or(|d| d.dist[i].is_finite()))
        .collect();
    let min = cells.iter().map(|&i| grid.counts[i]).min()?;
    let weights: Vec<f64> = cells
        .iter()
        .map(|&i| (-beta * (grid.counts[i] - min) as f64).exp())
        .collect();
    let dist = WeightedIndex::new(&weights).ok()?;
    Some(grid.coords(cells[dist.sample(rng)]))
}

/// Free cells with an unknown 4-neighbor.
pub fn frontier_cells(grid: &OccGrid2D) -> Vec<[usize; 2]> {
    let mut out = Vec::new();
    for i in grid.free_cells() {
        let [x, y] = grid.coords(i);
        let nbrs = [
            (x > 0).then(|| [x - 1, y]),
            (x + 1 < grid.width).then(|| [x + 1, y]),
            (y > 0).then(|| [x, y - 1]),
            (y + 1 < grid.height).then(|| [x, y + 1]),
        ];
        if nbrs.iter().flatten().any(|&n| grid.state(n) == CellState::Unknown) {
            out.push([x, y]);
        }
    }
    out
}

/// Nearest reachable frontier cell by path distance, skipping cells within
/// one cell of a previously chosen frontier. Ties go to the lower index.
pub fn frontier_waypoint(grid: &OccGrid2D, dm: &DistanceMap, visited: &[[usize; 2]]) -> Option<[usize; 2]> {
    let near_visited = |c: [usize; 2]| {
        visited
            .iter()
            .any(|v| c[0].abs_diff(v[0]) <= 1 && c[1].abs_diff(v[1]) <= 1)
    };
    frontier_cells(grid)
        .into_iter()
        .filter(|&c| dm.reachable(c) && !near_visited(c))
        .min_by(|a, b| dm.distance(*a).total_cmp(&dm.distance(*b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planner::distance_map;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn grid(w: usize, h: usize) -> OccGrid2D {
        OccGrid2D::new([0.0, 0.0], 0.2, w, h, 1.5, CellState::Free)
    }

    /// Pearson χ² statistic against a uniform distribution.
    fn chi2(hist: &[usize], n: usize) -> f64 {
        let e = n as f64 / hist.len() as f64;
        hist.iter().map(|&o| (o as f64 - e).powi(2) / e).sum()
    }

    #[test]
    fn equal_counts_are_uniform() {
        let mut g = grid(4, 4);
        g.counts.fill(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut hist = vec![0; 16];
        for _ in 0..10_000 {
            let c = frequency_waypoint(&g, None, 5.0, &mut rng).unwrap();
            hist[g.index(c)] += 1;
        }
        // 15 dof, 99.9% quantile ≈ 37.7.
        assert!(chi2(&hist, 10_000) < 37.7);
    }

    #[test]
    fn beta_zero_ignores_counts() {
        let mut g = grid(3, 3);
        for (i, c) in g.counts.iter_mut().enumerate() {
            *c = i as u32 * 10;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut hist = vec![0; 9];
        for _ in 0..10_000 {
            hist[g.index(frequency_waypoint(&g, None, 0.0, &mut rng).unwrap())] += 1;
        }
        // 8 dof, 99.9% quantile ≈ 26.1.
        assert!(chi2(&hist, 10_000) < 26.1);
    }

    #[test]
    fn large_beta_picks_least_seen() {
        let mut g = grid(5, 5);
        g.counts.fill(1);
        g.counts[7] = 0;
        // Direct evaluation of the distribution.
        let p = 1.0 / (1.0 + 24.0 * (-50.0f64).exp());
        assert!(p > 0.99);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let hits = (0..1000)
            .filter(|_| frequency_waypoint(&g, None, 50.0, &mut rng) == Some(g.coords(7)))
            .count();
        assert!(hits as f64 / 1000.0 > 0.99);
    }

    #[test]
    fn fully_known_grid_has_no_frontier() {
        let g = grid(5, 5);
        let dm = distance_map(&g, [0, 0]);
        assert_eq!(frontier_waypoint(&g, &dm, &[]), None);
    }

    #[test]
    fn single_border_cell() {
        let mut g = grid(6, 3);
        for y in 0..3 {
            g.set([4, y], CellState::Occupied);
            g.set([5, y], CellState::Unknown);
        }
        g.set([4, 1], CellState::Free);
        let dm = distance_map(&g, [0, 1]);
        assert_eq!(frontier_waypoint(&g, &dm, &[]), Some([4, 1]));
        assert_eq!(frontier_waypoint(&g, &dm, &[[4, 1]]), None);
    }

    #[test]
    fn nearer_frontier_wins() {
        let mut g = grid(12, 1);
        g.set([0, 0], CellState::Unknown);
        g.set([11, 0], CellState::Unknown);
        // Start at 4: frontier cell 1 is 3 away, cell 10 is 6 away.
        let dm = distance_map(&g, [4, 0]);
        assert_eq!(frontier_waypoint(&g, &dm, &[]), Some([1, 0]));
    }
}
