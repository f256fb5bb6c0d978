use std::f64::consts::TAU;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::localize::{localize_objects, score_localization, Localization, ObjectEstimate, SemanticMap};
use super::metrics::{coverage_metrics, reconstruction_from_renders, MetricsLog, MetricsRow, Phase};
use super::{check_termination, ExperimentConfig, ExplorerError, Method};
use crate::field::io::save_checkpoint;
use crate::field::{RenderOptions, VoxelGrid};
use crate::info::{render_views, Channels, Ensemble, EnsembleTrainer};
use crate::planner::{
    distance_map, frequency_waypoint, frontier_waypoint, fuse_ensemble, plan_to, sample_candidates,
    select, Candidate, PlannerDump, PlannerError, TrajectoryFit, VisibilityGrid,
};
use crate::scene::io::{save_scene, write_ppm};
use crate::scene::{generate_scene, CameraIntrinsics, Observation, Scene, ViewPoint};

/// Time step of the arc-length integral of executed trajectories, seconds.
const ARC_DT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Termination,
    DistanceBudget,
    MaxIterations,
    AllLocalized,
    NoFrontier,
}

/// A trajectory that was flown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Executed {
    pub iteration: usize,
    pub start: ViewPoint,
    pub goal: [f64; 3],
    pub viewpoints: Vec<ViewPoint>,
    /// Viewpoints that fell inside solids and produced no observation.
    pub skipped_views: usize,
    pub length: f64,
    pub duration: f64,
    pub fit: TrajectoryFit,
    pub information: Channels,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub scene: Scene,
    pub log: MetricsLog,
    pub objects: Vec<ObjectEstimate>,
    pub localization: Localization,
    pub executed: Vec<Executed>,
    pub dumps: Vec<PlannerDump>,
    pub stop: StopReason,
    pub ensemble: Ensemble,
}

/// Writes run artifacts when an output directory is given.
struct Artifacts {
    dir: Option<PathBuf>,
    metrics: Option<BufWriter<File>>,
}

impl Artifacts {
    fn create(dir: Option<&Path>, cfg: &ExperimentConfig, scene: &Scene) -> Result<Self, ExplorerError> {
        let Some(dir) = dir else {
            return Ok(Self { dir: None, metrics: None });
        };
        for sub in ["candidates", "trajectories", "fields", "renders"] {
            fs::create_dir_all(dir.join(sub))?;
        }
        fs::write(dir.join("config.json"), to_json(cfg) + "\n")?;
        save_scene(scene, &dir.join("scene.json"))?;
        let mut w = BufWriter::new(File::create(dir.join("metrics.csv"))?);
        writeln!(w, "{}", MetricsRow::CSV_HEADER)?;
        w.flush()?;
        Ok(Self {
            dir: Some(dir.to_path_buf()),
            metrics: Some(w),
        })
    }

    fn row(&mut self, row: &MetricsRow) -> Result<(), ExplorerError> {
        if let Some(w) = &mut self.metrics {
            writeln!(w, "{}", row.csv())?;
            w.flush()?;
        }
        Ok(())
    }

    fn write(&self, rel: &str, contents: &[u8]) -> Result<(), ExplorerError> {
        if let Some(d) = &self.dir {
            fs::write(d.join(rel), contents)?;
        }
        Ok(())
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("plain data serializes")
}

/// Ground-truth observations at `views`; views inside solids or outside the
/// scene are skipped.
fn observe(scene: &Scene, views: &[ViewPoint], intr: &CameraIntrinsics) -> (Vec<Arc<Observation>>, usize) {
    let mut out = Vec::with_capacity(views.len());
    let mut skipped = 0;
    for v in views {
        match scene.render_ground_truth(&v.pose(), intr) {
            Ok(o) => out.push(Arc::new(o)),
            Err(_) => skipped += 1,
        }
    }
    (out, skipped)
}

struct State {
    trainer: EnsembleTrainer,
    visibility: VisibilityGrid,
    semantic: SemanticMap,
    observations: usize,
}

impl State {
    fn ingest(&mut self, batch: &[Arc<Observation>]) {
        self.trainer.add_observations(batch);
        for o in batch {
            self.visibility.record(o);
            self.semantic.add(o);
        }
        self.observations += batch.len();
    }
}

struct Evaluation {
    objects: Vec<ObjectEstimate>,
    localization: Localization,
    row: MetricsRow,
}

fn evaluate(
    cfg: &ExperimentConfig,
    scene: &Scene,
    state: &State,
    render: RenderOptions,
    intr: &CameraIntrinsics,
    held_views: &[ViewPoint],
    held_out: &[Arc<Observation>],
) -> Result<(Evaluation, Ensemble), ExplorerError> {
    let loc = &cfg.localization;
    let objects = localize_objects(&state.semantic, loc.eps, loc.min_pts);
    let localization = score_localization(&objects, scene, loc.match_radius);
    let ens = state.trainer.snapshot(render)?;
    let views = render_views(&ens, held_views, intr);
    let large = ens.largest_index();
    let preds: Vec<_> = views.iter().map(|v| v[large].clone()).collect();
    let truth: Vec<Observation> = held_out.iter().map(|o| (**o).clone()).collect();
    let rec = reconstruction_from_renders(&preds, &truth);
    let cov = coverage_metrics(&views, &truth);
    let row = MetricsRow {
        iteration: 0,
        phase: Phase::Init,
        distance: 0.0,
        observations: state.observations,
        objects_localized: localization.localized,
        objects_total: localization.total,
        info_rgb: 0.0,
        info_depth: 0.0,
        info_semantic: 0.0,
        info_occupancy: 0.0,
        info_total: 0.0,
        psnr: rec.psnr,
        depth_mse: rec.depth_mse,
        semantic_ce: rec.semantic_ce,
        coverage_rgb: cov.rgb,
        coverage_depth: cov.depth,
        semantic_wrong_uncertain: cov.semantic_wrong_uncertain,
    };
    Ok((
        Evaluation {
            objects,
            localization,
            row,
        },
        ens,
    ))
}

/// Runs one closed-loop exploration: spawn spin, initial training, then
/// plan / fly / observe / train iterations until a stop rule fires, and a
/// final training phase. Artifacts go to `out` when given.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentResult, ExplorerError> {
    cfg.validate()?;
    let scene = generate_scene(cfg.scene_seed(), &cfg.scene)?;
    let intr = cfg
        .image
        .intrinsics()
        .map_err(|e| ExplorerError::Config(e.to_string()))?;
    let far = scene.bounds.diagonal();
    let plan_render = cfg.plan_render(far);
    let mut art = Artifacts::create(out, cfg, &scene)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let held_views: Vec<ViewPoint> = scene
        .held_out
        .iter()
        .filter(|v| scene.render_ground_truth(&v.pose(), &intr).is_ok())
        .copied()
        .collect();
    let (held_out, _) = observe(&scene, &held_views, &intr);
    let spawn = scene
        .random_free_position(0, cfg.spawn_clearance, &mut rng)
        .ok_or(ExplorerError::NoSpawn)?;
    let yaw0 = rng.random_range(0.0..TAU);
    let mut pose = ViewPoint {
        position: spawn,
        yaw: yaw0,
    };

    let mut state = State {
        trainer: EnsembleTrainer::new(scene.bounds, scene.num_categories, &cfg.ensemble_config(far))?,
        visibility: VisibilityGrid::new(&scene.bounds),
        semantic: SemanticMap::new(&scene.bounds, cfg.localization.voxel, scene.num_categories),
        observations: 0,
    };
    let n0 = cfg.schedule.init_views;
    let spin: Vec<ViewPoint> = (0..n0)
        .map(|k| ViewPoint {
            position: spawn,
            yaw: yaw0 + TAU * k as f64 / n0 as f64,
        })
        .collect();
    let (batch, _) = observe(&scene, &spin, &intr);
    state.ingest(&batch);
    state.trainer.balance_weights()?;
    state.trainer.train(cfg.schedule.init_steps)?;

    let mut log = MetricsLog::default();
    let (mut eval, _) = evaluate(cfg, &scene, &state, plan_render, &intr, &held_views, &held_out)?;
    log.rows.push(eval.row);
    art.row(&eval.row)?;

    let mut distance = 0.0;
    let mut history = Vec::new();
    let mut visited_frontiers = Vec::new();
    let mut executed = Vec::new();
    let mut dumps = Vec::new();
    let budget = cfg.schedule.distance_budget.unwrap_or(f64::INFINITY);
    let mut iteration = 0;
    let stop = loop {
        if iteration >= cfg.schedule.max_iterations {
            break StopReason::MaxIterations;
        }
        iteration += 1;
        let planner_err = |source: PlannerError| ExplorerError::Planner { iteration, source };

        let ens = state.trainer.snapshot(plan_render)?;
        let space = fuse_ensemble(&ens, cfg.planner.sigma_threshold, Some(&state.visibility), scene.z_plan);
        let start_cell = space.grid.cell_of(&pose.position).ok_or_else(|| {
            planner_err(PlannerError::Unreachable([usize::MAX, usize::MAX]))
        })?;
        let dm = distance_map(&space.grid, start_cell);
        let single = |goal| -> Result<Vec<Candidate>, ExplorerError> {
            let c = plan_to(&space, &dm, &pose, goal, &cfg.planner, true)
                .map_err(planner_err)?
                .expect("fallback always yields a candidate");
            Ok(vec![c])
        };
        let mut candidates = match cfg.method {
            Method::PredictiveInfo => {
                match sample_candidates(&space, &dm, &pose, cfg.planner.n_candidates, &cfg.planner, &mut rng) {
                    Ok(c) => c,
                    Err(PlannerError::NoFreeCell) => single(start_cell)?,
                    Err(e) => return Err(planner_err(e)),
                }
            }
            Method::Frequency => {
                let goal = frequency_waypoint(&space.grid, Some(&dm), cfg.planner.beta, &mut rng)
                    .unwrap_or(start_cell);
                single(goal)?
            }
            Method::Frontier => match frontier_waypoint(&space.grid, &dm, &visited_frontiers) {
                Some(goal) => {
                    visited_frontiers.push(goal);
                    single(goal)?
                }
                None => break StopReason::NoFrontier,
            },
        };
        let chosen = select(&ens, &mut candidates, &intr, &cfg.info_weights).map_err(planner_err)?;
        let dump = PlannerDump::new(iteration, cfg.method.name(), chosen, &candidates);
        if cfg.artifacts.candidates {
            art.write(&format!("candidates/iter_{iteration:03}.json"), to_json(&dump).as_bytes())?;
            art.write(
                &format!("trajectories/iter_{iteration:03}.json"),
                candidates[chosen].trajectory.to_json().as_bytes(),
            )?;
        }
        dumps.push(dump);

        let c = &candidates[chosen];
        let info = c.info.expect("selected candidates are scored");
        let (batch, skipped) = observe(&scene, &c.viewpoints, &intr);
        let length = c.trajectory.arc_length(ARC_DT);
        let end = c
            .trajectory
            .evaluate(c.trajectory.total_duration())
            .expect("end time is in range");
        let goal = space.grid.center(c.goal);
        executed.push(Executed {
            iteration,
            start: pose,
            goal: [goal.x, goal.y, goal.z],
            viewpoints: c.viewpoints.clone(),
            skipped_views: skipped,
            length,
            duration: c.duration(),
            fit: c.fit,
            information: info.information,
            score: c.score,
        });
        distance += length;
        pose = ViewPoint {
            position: end.position,
            yaw: end.yaw.rem_euclid(TAU),
        };
        history.push(info.total);

        state.ingest(&batch);
        state.trainer.train(cfg.schedule.iteration_steps)?;
        let (e, _) = evaluate(cfg, &scene, &state, plan_render, &intr, &held_views, &held_out)?;
        eval = e;
        let i = info.information;
        eval.row.iteration = iteration;
        eval.row.phase = Phase::Explore;
        eval.row.distance = distance;
        eval.row.info_rgb = i.rgb;
        eval.row.info_depth = i.depth;
        eval.row.info_semantic = i.semantic;
        eval.row.info_occupancy = i.occupancy;
        eval.row.info_total = info.total;
        log.rows.push(eval.row);
        art.row(&eval.row)?;

        if cfg.schedule.stop_when_all_localized && eval.localization.localized == eval.localization.total {
            break StopReason::AllLocalized;
        }
        let t = &cfg.termination;
        if t.enabled && check_termination(&history, t.threshold, t.window, t.comparator) {
            break StopReason::Termination;
        }
        if distance >= budget {
            break StopReason::DistanceBudget;
        }
    };

    state.trainer.train(cfg.schedule.final_steps)?;
    let (mut last, ensemble) = evaluate(cfg, &scene, &state, plan_render, &intr, &held_views, &held_out)?;
    last.row.iteration = iteration + 1;
    last.row.phase = Phase::Final;
    last.row.distance = distance;
    log.rows.push(last.row);
    art.row(&last.row)?;

    write_final_artifacts(&art, cfg, &scene, &ensemble, &intr, &held_views, &held_out, &last, &executed, stop)?;

    Ok(ExperimentResult {
        scene,
        log,
        objects: last.objects,
        localization: last.localization,
        executed,
        dumps,
        stop,
        ensemble,
    })
}

#[derive(Serialize)]
struct ObjectsFile<'a> {
    estimates: &'a [ObjectEstimate],
    localization: &'a Localization,
}

#[derive(Serialize)]
struct Summary<'a> {
    stop: StopReason,
    executed: &'a [Executed],
}

#[allow(clippy::too_many_arguments)]
fn write_final_artifacts(
    art: &Artifacts,
    cfg: &ExperimentConfig,
    scene: &Scene,
    ensemble: &Ensemble,
    intr: &CameraIntrinsics,
    held_views: &[ViewPoint],
    held_out: &[Arc<Observation>],
    last: &Evaluation,
    executed: &[Executed],
    stop: StopReason,
) -> Result<(), ExplorerError> {
    let Some(dir) = &art.dir else {
        return Ok(());
    };
    art.write(
        "objects.json",
        to_json(&ObjectsFile {
            estimates: &last.objects,
            localization: &last.localization,
        })
        .as_bytes(),
    )?;
    art.write("summary.json", to_json(&Summary { stop, executed }).as_bytes())?;
    if cfg.artifacts.checkpoints {
        for (i, m) in ensemble.members.iter().enumerate() {
            save_checkpoint(m, &dir.join(format!("fields/member_{i}.ckpt")))?;
        }
    }
    let mut occupied = VoxelGrid::new(&scene.bounds, crate::field::OCCUPANCY_VOXEL);
    for m in &ensemble.members {
        let o = crate::field::export_occupancy(m, cfg.planner.sigma_threshold);
        for (c, v) in occupied.cells.iter_mut().zip(&o.cells) {
            *c |= *v;
        }
    }
    art.write("occupancy.rle", occupied.to_rle().as_bytes())?;
    if cfg.artifacts.renders {
        let large = ensemble.largest();
        for (k, (v, gt)) in held_views.iter().zip(held_out).enumerate() {
            let pred = crate::field::render_image(large, &v.pose(), intr, &ensemble.render);
            let mut buf = Vec::new();
            write_ppm(&mut buf, intr.width, intr.height, &gt.rgb)?;
            art.write(&format!("renders/heldout_{k:02}_truth.ppm"), &buf)?;
            buf.clear();
            write_ppm(&mut buf, intr.width, intr.height, &pred.rgb)?;
            art.write(&format!("renders/heldout_{k:02}_pred.ppm"), &buf)?;
        }
    }
    Ok(())
}
