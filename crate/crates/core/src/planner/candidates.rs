use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::FreeSpace;
use super::search::{decimate, DistanceMap};
use super::{PlannerConfig, PlannerError};
use crate::flatness::{allocate_times, min_snap, path_length, FlatTrajectory, FlatnessError};
use crate::info::{information_from_renders, render_views, Ensemble, InfoBreakdown, InfoWeights};
use crate::scene::{CameraIntrinsics, Vec3, ViewPoint};

/// How a candidate's polynomial was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryFit {
    /// Single min-snap fit through all waypoints.
    Smooth,
    /// Refit with doubled segment times after repeated collisions.
    Relaxed,
    /// Rest at every waypoint; segments are straight lines.
    StopAndGo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub goal: [usize; 2],
    pub path: Vec<Vec3>,
    pub trajectory: FlatTrajectory,
    pub fit: TrajectoryFit,
    pub viewpoints: Vec<ViewPoint>,
    pub info: Option<InfoBreakdown>,
    pub score: f64,
}

impl Candidate {
    pub fn duration(&self) -> f64 {
        self.trajectory.total_duration()
    }
}

fn spin(at: Vec3, yaw: f64, duration: f64) -> Result<FlatTrajectory, FlatnessError> {
    min_snap(&[at, at], &[yaw, yaw + TAU], &[0.0, duration])
}

/// Traverses `path` while turning a full circle (yaw proportional to time),
/// then spins a full circle in place at the end. A single-point path gives
/// two spins in place. `time_scale` stretches the traverse.
pub fn ballerina(
    path: &[Vec3],
    start_yaw: f64,
    time_scale: f64,
    spin_duration: f64,
) -> Result<FlatTrajectory, FlatnessError> {
    let end = *path.last().ok_or(FlatnessError::TooFewWaypoints(0))?;
    if path.len() < 2 || path_length(path) <= 1e-9 {
        return Ok(spin(end, start_yaw, spin_duration)?.then(spin(end, start_yaw + TAU, spin_duration)?));
    }
    let times: Vec<f64> = allocate_times(path)?.into_iter().map(|t| t * time_scale).collect();
    let total = *times.last().unwrap();
    let yaws: Vec<f64> = times.iter().map(|t| start_yaw + TAU * t / total).collect();
    let traverse = min_snap(path, &yaws, &times)?;
    Ok(traverse.then(spin(end, start_yaw + TAU, spin_duration)?))
}

/// Like [`ballerina`] but coming to rest at every waypoint, so each piece is
/// a straight segment.
pub fn stop_and_go(path: &[Vec3], start_yaw: f64, spin_duration: f64) -> Result<FlatTrajectory, FlatnessError> {
    if path.len() < 2 || path_length(path) <= 1e-9 {
        return ballerina(path, start_yaw, 1.0, spin_duration);
    }
    let durations: Vec<f64> = path
        .windows(2)
        .map(|w| allocate_times(w).map(|t| t[1]))
        .collect::<Result<_, _>>()?;
    let total: f64 = durations.iter().sum();
    let mut elapsed = 0.0;
    let mut traj = FlatTrajectory { segments: Vec::new() };
    for (w, d) in path.windows(2).zip(&durations) {
        let y0 = start_yaw + TAU * elapsed / total;
        elapsed += d;
        let y1 = start_yaw + TAU * elapsed / total;
        traj = traj.then(min_snap(w, &[y0, y1], &[0.0, *d])?);
    }
    Ok(traj.then(spin(*path.last().unwrap(), start_yaw + TAU, spin_duration)?))
}

/// `n` viewpoints at times (k+1)·T/n.
pub fn sample_viewpoints(traj: &FlatTrajectory, n: usize) -> Vec<ViewPoint> {
    let total = traj.total_duration();
    (0..n)
        .map(|k| {
            let t = (k + 1) as f64 * total / n as f64;
            let s = traj.evaluate(t.min(total)).expect("time in range");
            ViewPoint {
                position: s.position,
                yaw: s.yaw,
            }
        })
        .collect()
}

/// Whether the dense samples of `traj` stay in the undilated free space.
/// Samples in the starting cell are exempt.
pub fn trajectory_is_free(space: &FreeSpace, traj: &FlatTrajectory, dt: f64) -> bool {
    let start = traj.evaluate(0.0).map(|s| s.position).ok();
    let start_cell = start.and_then(|p| space.grid.cell_of(&p));
    traj.sample(dt).iter().all(|(_, s)| {
        let c = space.grid.cell_of(&s.position);
        (c.is_some() && c == start_cell) || space.is_free_point(&s.position)
    })
}

/// Waypoints from the current position to the center of `goal`.
pub fn route(space: &FreeSpace, dm: &DistanceMap, start: &Vec3, goal: [usize; 2]) -> Result<Vec<Vec3>, PlannerError> {
    let cells = dm.cells_to(goal).ok_or(PlannerError::Unreachable(goal))?;
    let mut pts: Vec<Vec3> = decimate(&cells).into_iter().map(|c| space.grid.center(c)).collect();
    let start = Vec3::new(start.x, start.y, space.grid.z);
    if (pts[0] - start).norm() > 1e-6 {
        if pts.len() > 1 && (pts[1] - start).norm() < 1e-6 {
            pts.remove(0);
        } else {
            pts[0] = start;
            if pts.len() == 1 {
                pts.push(space.grid.center(goal));
            }
        }
    }
    if pts.len() == 2 && (pts[1] - pts[0]).norm() <= 1e-9 {
        pts.pop();
    }
    Ok(pts)
}

/// Builds a trajectory to `goal`, trying a smooth fit first. Returns `None`
/// in place of a colliding smooth fit when `allow_fallback` is false.
pub fn plan_to(
    space: &FreeSpace,
    dm: &DistanceMap,
    start: &ViewPoint,
    goal: [usize; 2],
    cfg: &PlannerConfig,
    allow_fallback: bool,
) -> Result<Option<Candidate>, PlannerError> {
    let path = route(space, dm, &start.position, goal)?;
    let make = |trajectory: FlatTrajectory, fit| Candidate {
        goal,
        path: path.clone(),
        viewpoints: sample_viewpoints(&trajectory, cfg.views_per_trajectory),
        trajectory,
        fit,
        info: None,
        score: 0.0,
    };
    let smooth = ballerina(&path, start.yaw, 1.0, cfg.spin_duration)?;
    if trajectory_is_free(space, &smooth, cfg.collision_dt) {
        return Ok(Some(make(smooth, TrajectoryFit::Smooth)));
    }
    if !allow_fallback {
        return Ok(None);
    }
    let relaxed = ballerina(&path, start.yaw, 2.0, cfg.spin_duration)?;
    if trajectory_is_free(space, &relaxed, cfg.collision_dt) {
        return Ok(Some(make(relaxed, TrajectoryFit::Relaxed)));
    }
    let safe = stop_and_go(&path, start.yaw, cfg.spin_duration)?;
    Ok(Some(make(safe, TrajectoryFit::StopAndGo)))
}

/// Free cells reachable from the distance map's start.
pub fn reachable_free_cells(space: &FreeSpace, dm: &DistanceMap) -> Vec<usize> {
    space
        .grid
        .free_cells()
        .into_iter()
        .filter(|&i| dm.dist[i].is_finite())
        .collect()
}

/// `n` ballerina candidates with endpoints drawn uniformly over reachable
/// free cells. A candidate whose smooth fit collides is redrawn up to
/// `max_retries` times, then refit gently or as stop-and-go.
pub fn sample_candidates<R: Rng>(
    space: &FreeSpace,
    dm: &DistanceMap,
    start: &ViewPoint,
    n: usize,
    cfg: &PlannerConfig,
    rng: &mut R,
) -> Result<Vec<Candidate>, PlannerError> {
    let cells = reachable_free_cells(space, dm);
    if cells.is_empty() {
        return Err(PlannerError::NoFreeCell);
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut chosen = None;
        for attempt in 0..=cfg.max_retries {
            let goal = space.grid.coords(cells[rng.random_range(0..cells.len())]);
            let last = attempt == cfg.max_retries;
            if let Some(c) = plan_to(space, dm, start, goal, cfg, last)? {
                chosen = Some(c);
                break;
            }
        }
        out.push(chosen.expect("final attempt always yields a candidate"));
    }
    Ok(out)
}

/// Index of the best candidate: highest score, then shorter duration, then
/// lower index.
pub fn best_index(candidates: &[Candidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        best = match best {
            None => Some(i),
            Some(b) => {
                let cb = &candidates[b];
                if c.score > cb.score || (c.score == cb.score && c.duration() < cb.duration()) {
                    Some(i)
                } else {
                    Some(b)
                }
            }
        };
    }
    best
}

/// Scores every candidate by the predictive information of its viewpoints
/// and returns the index of the best one.
pub fn select(
    ensemble: &Ensemble,
    candidates: &mut [Candidate],
    intrinsics: &CameraIntrinsics,
    weights: &InfoWeights,
) -> Result<usize, PlannerError> {
    if candidates.is_empty() {
        return Err(PlannerError::NoCandidates);
    }
    for c in candidates.iter_mut() {
        let views = render_views(ensemble, &c.viewpoints, intrinsics);
        let info = information_from_renders(&views, weights);
        c.score = info.total;
        c.info = Some(info);
    }
    Ok(best_index(candidates).expect("non-empty"))
}
