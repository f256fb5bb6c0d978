//! Free-space extraction, routing, ballerina candidates and their selection
//! by predictive information, plus the frequency and frontier baselines.

mod baselines;
mod candidates;
mod grid;
mod search;

pub use baselines::{frequency_waypoint, frontier_cells, frontier_waypoint};
pub use candidates::{
    ballerina, best_index, plan_to, reachable_free_cells, route, sample_candidates,
    sample_viewpoints, select, stop_and_go, trajectory_is_free, Candidate, TrajectoryFit,
};
pub use grid::{
    dilate, fuse_ensemble, fuse_free_space, slice_layer, CellState, FreeSpace, OccGrid2D,
    VisibilityGrid,
};
pub use search::{decimate, dijkstra, distance_map, polyline_length, DistanceMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::OCCUPANCY_VOXEL;
use crate::flatness::FlatnessError;
use crate::info::{Channels, InfoError};
use crate::scene::Vec3;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("no reachable free cell to plan to")]
    NoFreeCell,
    #[error("goal cell {0:?} is unreachable")]
    Unreachable([usize; 2]),
    #[error("no candidates to select from")]
    NoCandidates,
    #[error(transparent)]
    Flatness(#[from] FlatnessError),
    #[error(transparent)]
    Info(#[from] InfoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub n_candidates: usize,
    pub views_per_trajectory: usize,
    /// Duration of the final in-place full turn, seconds.
    pub spin_duration: f64,
    /// Endpoint redraws before falling back to gentler fits.
    pub max_retries: usize,
    /// Time step of the trajectory collision check, seconds.
    pub collision_dt: f64,
    /// Density above which a voxel counts as occupied.
    pub sigma_threshold: f64,
    /// Temperature of the frequency baseline.
    pub beta: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            n_candidates: 20,
            views_per_trajectory: 20,
            spin_duration: 4.0,
            max_retries: 5,
            collision_dt: 0.05,
            sigma_threshold: std::f64::consts::LN_2 / OCCUPANCY_VOXEL,
            beta: 5.0,
        }
    }
}

/// One candidate in the per-iteration planner dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub goal: [usize; 2],
    pub waypoints: Vec<[f64; 3]>,
    pub duration: f64,
    pub fit: TrajectoryFit,
    pub information: Option<Channels>,
    pub score: f64,
}

/// All candidates considered in one planning step and the chosen index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerDump {
    pub iteration: usize,
    pub method: String,
    pub chosen: usize,
    pub candidates: Vec<CandidateSummary>,
}

impl PlannerDump {
    pub fn new(iteration: usize, method: &str, chosen: usize, candidates: &[Candidate]) -> Self {
        Self {
            iteration,
            method: method.to_string(),
            chosen,
            candidates: candidates
                .iter()
                .map(|c| CandidateSummary {
                    goal: c.goal,
                    waypoints: c.path.iter().map(|p: &Vec3| [p.x, p.y, p.z]).collect(),
                    duration: c.duration(),
                    fit: c.fit,
                    information: c.info.map(|i| i.information),
                    score: c.score,
                })
                .collect(),
        }
    }
}
