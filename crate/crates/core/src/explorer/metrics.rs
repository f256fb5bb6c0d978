use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::field::{render_image, FieldGrid, ImageRender, RenderOptions};
use crate::info::categorical_entropy;
use crate::scene::{CameraIntrinsics, Observation, Scene, SceneError, ViewPoint};

/// PSNR reported for an exact reconstruction, dB.
pub const PSNR_CAP: f64 = 100.0;
const CE_FLOOR: f64 = 1e-12;
const UNCERTAIN_ENTROPY: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub psnr: f64,
    pub depth_mse: f64,
    /// Mean cross entropy of the true category, nats.
    pub semantic_ce: f64,
}

/// PSNR on [0,1] intensities, depth MSE over pixels with a finite true depth
/// and categorical cross entropy over all pixels.
pub fn reconstruction_from_renders(preds: &[ImageRender], truth: &[Observation]) -> Reconstruction {
    let (mut se, mut n_rgb) = (0.0, 0usize);
    let (mut de, mut n_depth) = (0.0, 0usize);
    let (mut ce, mut n_px) = (0.0, 0usize);
    for (p, t) in preds.iter().zip(truth) {
        for i in 0..t.pixel_count() {
            for c in 0..3 {
                se += (p.rgb[i][c] - t.rgb[i][c]).powi(2);
            }
            n_rgb += 3;
            if t.depth[i].is_finite() {
                de += (p.depth[i] - t.depth[i]).powi(2);
                n_depth += 1;
            }
            let q = p.category_at(i).get(t.category[i] as usize).copied().unwrap_or(0.0);
            ce -= q.max(CE_FLOOR).ln();
            n_px += 1;
        }
    }
    let mse = se / n_rgb.max(1) as f64;
    let psnr = if mse > 0.0 {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
    } else {
        PSNR_CAP
    };
    Reconstruction {
        psnr,
        depth_mse: if n_depth > 0 { de / n_depth as f64 } else { 0.0 },
        semantic_ce: ce / n_px.max(1) as f64,
    }
}

/// Renders `field` at the held-out views and compares with ground truth.
pub fn reconstruction_metrics(
    field: &FieldGrid,
    scene: &Scene,
    views: &[ViewPoint],
    intrinsics: &CameraIntrinsics,
    opts: &RenderOptions,
) -> Result<Reconstruction, SceneError> {
    let mut preds = Vec::with_capacity(views.len());
    let mut truth = Vec::with_capacity(views.len());
    for v in views {
        let pose = v.pose();
        truth.push(scene.render_ground_truth(&pose, intrinsics)?);
        preds.push(render_image(field, &pose, intrinsics, opts));
    }
    Ok(reconstruction_from_renders(&preds, &truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    /// Fraction of pixel channels whose truth lies within one predicted
    /// standard deviation.
    pub rgb: f64,
    pub depth: f64,
    /// Fraction of pixels whose predicted category is wrong while the
    /// prediction's entropy exceeds 0.1 nats.
    pub semantic_wrong_uncertain: f64,
}

/// Fraction of `truth[i]` inside `[mean[i] − σ_i, mean[i] + σ_i]`.
pub fn coverage_from_moments(mean: &[f64], var: &[f64], truth: &[f64]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hit = mean
        .iter()
        .zip(var)
        .zip(truth)
        .filter(|((m, v), t)| (*t - *m).abs() <= v.max(0.0).sqrt())
        .count();
    hit as f64 / truth.len() as f64
}

fn mixture(means: impl Iterator<Item = (f64, f64)>) -> (f64, f64) {
    let v: Vec<(f64, f64)> = means.collect();
    let m = v.len() as f64;
    let mean = v.iter().map(|x| x.0).sum::<f64>() / m;
    let var = v
        .iter()
        .map(|x| x.1 + (x.0 - mean).powi(2))
        .sum::<f64>()
        / m;
    (mean, var)
}

/// Calibration of the moment-matched ensemble prediction. `views` is indexed
/// [view][member].
pub fn coverage_metrics(views: &[Vec<ImageRender>], truth: &[Observation]) -> Coverage {
    let (mut rm, mut rv, mut rt) = (Vec::new(), Vec::new(), Vec::new());
    let (mut dm, mut dv, mut dt) = (Vec::new(), Vec::new(), Vec::new());
    let (mut wrong, mut n_px) = (0usize, 0usize);
    for (members, t) in views.iter().zip(truth) {
        let classes = members[0].num_categories;
        for i in 0..t.pixel_count() {
            for c in 0..3 {
                let (m, v) = mixture(members.iter().map(|r| (r.rgb[i][c], r.rgb_var[i][c])));
                rm.push(m);
                rv.push(v);
                rt.push(t.rgb[i][c]);
            }
            if t.depth[i].is_finite() {
                let (m, v) = mixture(members.iter().map(|r| (r.depth[i], r.depth_var[i])));
                dm.push(m);
                dv.push(v);
                dt.push(t.depth[i]);
            }
            let mut avg = vec![0.0; classes];
            for r in members {
                for (a, q) in avg.iter_mut().zip(r.category_at(i)) {
                    *a += q / members.len() as f64;
                }
            }
            let mut arg = 0;
            for k in 1..classes {
                if avg[k] > avg[arg] {
                    arg = k;
                }
            }
            if arg != t.category[i] as usize && categorical_entropy(&avg) > UNCERTAIN_ENTROPY {
                wrong += 1;
            }
            n_px += 1;
        }
    }
    Coverage {
        rgb: coverage_from_moments(&rm, &rv, &rt),
        depth: coverage_from_moments(&dm, &dv, &dt),
        semantic_wrong_uncertain: if n_px > 0 { wrong as f64 / n_px as f64 } else { 0.0 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Init,
    Explore,
    Final,
}

impl Phase {
    pub fn name(&self) -> &'static str {
        match self {
            Phase::Init => "init",
            Phase::Explore => "explore",
            Phase::Final => "final",
        }
    }
}

/// One line of the metrics log. Information values belong to the trajectory
/// executed in that iteration and are zero for the init and final rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub phase: Phase,
    pub distance: f64,
    pub observations: usize,
    pub objects_localized: usize,
    pub objects_total: usize,
    pub info_rgb: f64,
    pub info_depth: f64,
    pub info_semantic: f64,
    pub info_occupancy: f64,
    pub info_total: f64,
    pub psnr: f64,
    pub depth_mse: f64,
    pub semantic_ce: f64,
    pub coverage_rgb: f64,
    pub coverage_depth: f64,
    pub semantic_wrong_uncertain: f64,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "iteration,phase,distance_m,observations,objects_localized,objects_total,I_rgb,I_depth,I_sem,I_occ,I_total,psnr_db,depth_mse_m2,semantic_ce,coverage_rgb,coverage_depth,semantic_wrong_uncertain";

    pub fn csv(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.phase.name(),
            self.distance,
            self.observations,
            self.objects_localized,
            self.objects_total,
            self.info_rgb,
            self.info_depth,
            self.info_semantic,
            self.info_occupancy,
            self.info_total,
            self.psnr,
            self.depth_mse,
            self.semantic_ce,
            self.coverage_rgb,
            self.coverage_depth,
            self.semantic_wrong_uncertain
        );
        s
    }

    /// Inverse of [`MetricsRow::csv`].
    pub fn parse(line: &str) -> Result<Self, String> {
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 17 {
            return Err(format!("expected 17 fields, found {}", f.len()));
        }
        let int = |i: usize| f[i].parse::<usize>().map_err(|e| format!("field {i} ({:?}): {e}", f[i]));
        let real = |i: usize| f[i].parse::<f64>().map_err(|e| format!("field {i} ({:?}): {e}", f[i]));
        let phase = match f[1] {
            "init" => Phase::Init,
            "explore" => Phase::Explore,
            "final" => Phase::Final,
            other => return Err(format!("unknown phase {other:?}")),
        };
        Ok(Self {
            iteration: int(0)?,
            phase,
            distance: real(2)?,
            observations: int(3)?,
            objects_localized: int(4)?,
            objects_total: int(5)?,
            info_rgb: real(6)?,
            info_depth: real(7)?,
            info_semantic: real(8)?,
            info_occupancy: real(9)?,
            info_total: real(10)?,
            psnr: real(11)?,
            depth_mse: real(12)?,
            semantic_ce: real(13)?,
            coverage_rgb: real(14)?,
            coverage_depth: real(15)?,
            semantic_wrong_uncertain: real(16)?,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(MetricsRow::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.csv());
            s.push('\n');
        }
        s
    }

    /// Parses a metrics.csv file; the header must match exactly.
    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim_end() == MetricsRow::CSV_HEADER => {}
            Some(_) => return Err("unexpected header".into()),
            None => return Err("empty file".into()),
        }
        let rows = lines
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| MetricsRow::parse(l).map_err(|e| format!("line {}: {e}", i + 2)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { rows })
    }

    /// Objects localized by the last row at or below `distance`.
    pub fn localized_at(&self, distance: f64) -> usize {
        self.rows
            .iter()
            .filter(|r| r.distance <= distance)
            .map(|r| r.objects_localized)
            .next_back()
            .unwrap_or(0)
    }

    /// Distance of the first row reaching `count` localized objects.
    pub fn distance_to_reach(&self, count: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.objects_localized >= count)
            .map(|r| r.distance)
    }

    pub fn final_row(&self) -> Option<&MetricsRow> {
        self.rows.last()
    }
}
