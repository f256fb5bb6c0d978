//! Closed-loop exploration driver, termination rule, object localization and
//! reconstruction metrics.

mod localize;
mod metrics;
mod run;

pub use localize::{
    dbscan, localize_objects, score_localization, Match, ObjectEstimate, Localization,
    SemanticMap,
};
pub use metrics::{
    coverage_from_moments, coverage_metrics, reconstruction_from_renders,
    reconstruction_metrics, Coverage, MetricsLog, MetricsRow, Phase, Reconstruction,
    PSNR_CAP,
};
pub use run::{run_experiment, Executed, ExperimentResult, StopReason};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldError, FieldInit, LossWeights, RenderOptions};
use crate::info::{EnsembleConfig, InfoError, InfoWeights};
use crate::planner::{PlannerConfig, PlannerError};
use crate::scene::{CameraIntrinsics, SceneError, SceneSpec};

#[derive(Debug, Error)]
pub enum ExplorerError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("scene: {0}")]
    Scene(#[from] SceneError),
    #[error("field: {0}")]
    Field(#[from] FieldError),
    #[error("ensemble: {0}")]
    Info(#[from] InfoError),
    #[error("planning failed at iteration {iteration}: {source}")]
    Planner {
        iteration: usize,
        #[source]
        source: PlannerError,
    },
    #[error("could not find a free spawn position in the first room")]
    NoSpawn,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PredictiveInfo,
    Frequency,
    Frontier,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::PredictiveInfo => "predictive_info",
            Method::Frequency => "frequency",
            Method::Frontier => "frontier",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    Below,
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Termination {
    pub enabled: bool,
    pub threshold: f64,
    pub window: usize,
    pub comparator: Comparator,
}

impl Default for Termination {
    fn default() -> Self {
        Self {
            enabled: true,
            threshold: 0.15,
            window: 5,
            comparator: Comparator::Below,
        }
    }
}

/// True once the last `window` values all compare true against `threshold`.
pub fn check_termination(history: &[f64], threshold: f64, window: usize, comparator: Comparator) -> bool {
    if window == 0 || history.len() < window {
        return false;
    }
    history[history.len() - window..].iter().all(|&v| match comparator {
        Comparator::Below => v < threshold,
        Comparator::Above => v > threshold,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageConfig {
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
}

impl Default for ImageConfig {
    fn default() -> Self {
        Self {
            width: 32,
            height: 32,
            hfov_deg: 90.0,
        }
    }
}

impl ImageConfig {
    pub fn intrinsics(&self) -> Result<CameraIntrinsics, SceneError> {
        CameraIntrinsics::new(self.width, self.height, self.hfov_deg.to_radians())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    /// Views of the in-place spin at spawn.
    pub init_views: usize,
    pub init_steps: usize,
    pub iteration_steps: usize,
    pub final_steps: usize,
    pub max_iterations: usize,
    /// Stop once the travelled distance reaches this many meters.
    pub distance_budget: Option<f64>,
    /// Stop as soon as every object is localized.
    pub stop_when_all_localized: bool,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            init_views: 39,
            init_steps: 4000,
            iteration_steps: 2000,
            final_steps: 20000,
            max_iterations: 30,
            distance_budget: None,
            stop_when_all_localized: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub resolutions: Vec<[usize; 3]>,
    pub member_seeds: Vec<u64>,
    pub rays_per_step: usize,
    pub n_samples: usize,
    pub learning_rate: f64,
    pub init: FieldInit,
    pub loss: LossWeights,
    pub bootstrap: bool,
    pub min_transmittance: f64,
    pub near: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            resolutions: vec![[64; 3], [32; 3]],
            member_seeds: vec![1, 2],
            rays_per_step: 256,
            n_samples: 128,
            learning_rate: 0.1,
            init: FieldInit::default(),
            loss: LossWeights::default(),
            bootstrap: true,
            min_transmittance: 1e-4,
            near: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationConfig {
    pub voxel: f64,
    pub eps: f64,
    pub min_pts: usize,
    /// Maximum centroid error of a correct localization, meters.
    pub match_radius: f64,
}

impl Default for LocalizationConfig {
    fn default() -> Self {
        Self {
            voxel: 0.2,
            eps: 0.3,
            min_pts: 3,
            match_radius: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArtifactConfig {
    pub checkpoints: bool,
    pub renders: bool,
    pub candidates: bool,
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        Self {
            checkpoints: true,
            renders: true,
            candidates: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    /// Seeds the planner, spawn and ensemble members.
    pub seed: u64,
    /// Scene seed; the run seed when absent.
    pub scene_seed: Option<u64>,
    pub scene: SceneSpec,
    pub image: ImageConfig,
    pub schedule: Schedule,
    pub termination: Termination,
    pub training: TrainingConfig,
    pub planner: PlannerConfig,
    pub info_weights: InfoWeights,
    /// Samples per ray when rendering candidate viewpoints.
    pub plan_samples: usize,
    pub plan_min_transmittance: f64,
    pub localization: LocalizationConfig,
    /// Minimum distance of the spawn point from any primitive.
    pub spawn_clearance: f64,
    pub artifacts: ArtifactConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            method: Method::PredictiveInfo,
            seed: 0,
            scene_seed: None,
            scene: SceneSpec::default(),
            image: ImageConfig::default(),
            schedule: Schedule::default(),
            termination: Termination::default(),
            training: TrainingConfig::default(),
            planner: PlannerConfig::default(),
            info_weights: InfoWeights::default(),
            plan_samples: 128,
            plan_min_transmittance: 1e-3,
            localization: LocalizationConfig::default(),
            spawn_clearance: 0.5,
            artifacts: ArtifactConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn scene_seed(&self) -> u64 {
        self.scene_seed.unwrap_or(self.seed)
    }

    pub fn validate(&self) -> Result<(), ExplorerError> {
        let bad = |m: &str| Err(ExplorerError::Config(m.to_string()));
        let s = &self.schedule;
        if s.init_views == 0 || s.max_iterations == 0 {
            return bad("init_views and max_iterations must be positive");
        }
        if s.distance_budget.is_some_and(|d| !(d > 0.0)) {
            return bad("distance_budget must be positive");
        }
        let t = &self.termination;
        if !(t.threshold > 0.0) || t.window == 0 {
            return bad("termination threshold and window must be positive");
        }
        let p = &self.planner;
        if p.n_candidates == 0 || p.views_per_trajectory == 0 {
            return bad("n_candidates and views_per_trajectory must be positive");
        }
        if !(p.spin_duration > 0.0 && p.collision_dt > 0.0 && p.sigma_threshold > 0.0 && p.beta >= 0.0) {
            return bad("planner durations, sigma_threshold must be positive and beta nonnegative");
        }
        if !self.info_weights.is_valid() {
            return bad("info weights must be nonnegative");
        }
        if !self.training.loss.is_valid() {
            return bad("loss weights must be nonnegative");
        }
        if self.training.rays_per_step == 0 || self.training.n_samples == 0 || self.plan_samples == 0 {
            return bad("ray and sample counts must be positive");
        }
        if !(self.training.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        let l = &self.localization;
        if !(l.voxel > 0.0 && l.eps > 0.0 && l.match_radius > 0.0) || l.min_pts == 0 {
            return bad("localization parameters must be positive");
        }
        if !(self.spawn_clearance >= 0.0) {
            return bad("spawn_clearance must be nonnegative");
        }
        self.image
            .intrinsics()
            .map_err(|e| ExplorerError::Config(e.to_string()))?;
        self.ensemble_config(1.0).validate()?;
        Ok(())
    }

    /// Ensemble settings for a scene whose far plane is `far`; member seeds
    /// are mixed with the run seed.
    pub fn ensemble_config(&self, far: f64) -> EnsembleConfig {
        let t = &self.training;
        let mut cfg = EnsembleConfig::standard(far);
        cfg.resolutions = t.resolutions.clone();
        cfg.seeds = t
            .member_seeds
            .iter()
            .map(|&s| self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(s))
            .collect();
        cfg.init = t.init;
        cfg.loss = t.loss;
        cfg.learning_rate = t.learning_rate;
        cfg.rays_per_step = t.rays_per_step;
        cfg.train_render = RenderOptions {
            near: t.near,
            far,
            n_samples: t.n_samples,
            min_transmittance: t.min_transmittance,
        };
        cfg.bootstrap = t.bootstrap;
        cfg
    }

    pub fn plan_render(&self, far: f64) -> RenderOptions {
        RenderOptions {
            near: self.training.near,
            far,
            n_samples: self.plan_samples,
            min_transmittance: self.plan_min_transmittance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn termination_rule() {
        assert!(!check_termination(&[0.01; 4], 0.15, 5, Comparator::Below));
        assert!(check_termination(&[0.01; 5], 0.15, 5, Comparator::Below));
        let alt = [0.05, 0.3, 0.05, 0.3, 0.05, 0.3];
        assert!(!check_termination(&alt, 0.15, 5, Comparator::Below));
        assert!(!check_termination(&alt, 0.15, 5, Comparator::Above));
        assert!(check_termination(&[0.01, 0.3, 0.3, 0.3, 0.3, 0.3], 0.15, 5, Comparator::Above));
    }

    #[test]
    fn config_roundtrip_and_defaults() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let s = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        let partial: ExperimentConfig =
            serde_json::from_str(r#"{"method":"frontier","planner":{"n_candidates":5}}"#).unwrap();
        assert_eq!(partial.method, Method::Frontier);
        assert_eq!(partial.planner.n_candidates, 5);
        assert_eq!(partial.planner.views_per_trajectory, 20);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"metod":"frontier"}"#).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = ExperimentConfig::default();
        c.termination.threshold = 0.0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.training.resolutions = vec![[8; 3]];
        c.training.member_seeds = vec![1];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.image.hfov_deg = 180.0;
        assert!(c.validate().is_err());
    }
}
