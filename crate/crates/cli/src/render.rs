//! `render`: images of one or more field checkpoints from a pose.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use activescout::field::io::load_checkpoint;
use activescout::field::{render_image, RenderOptions};
use activescout::info::{categorical_entropy, mixture_render};
use activescout::scene::io::{load_scene, write_category, write_depth, write_ppm};
use activescout::scene::{CameraIntrinsics, Pose, Vec3};
use anyhow::{bail, Context, Result};

pub struct RenderArgs {
    pub checkpoints: Vec<PathBuf>,
    /// `x, y, z, yaw` and an optional pitch, radians.
    pub pose: Vec<f64>,
    pub scene: Option<PathBuf>,
    pub width: usize,
    pub height: usize,
    pub hfov_deg: f64,
    pub samples: usize,
    pub near: f64,
    pub out: PathBuf,
}

pub fn parse_pose(s: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("pose {s:?} is not a comma-separated list of numbers"))?;
    if !(v.len() == 4 || v.len() == 5) || v.iter().any(|x| !x.is_finite()) {
        bail!("pose needs x,y,z,yaw[,pitch], got {s:?}");
    }
    Ok(v)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Writes prediction and standard-deviation maps for rgb, depth and
/// semantics; with a scene also the ground truth and squared residual.
/// Returns the written file names.
pub fn run(args: &RenderArgs) -> Result<Vec<String>> {
    let intr = CameraIntrinsics::new(args.width, args.height, args.hfov_deg.to_radians())?;
    let p = &args.pose;
    let pose = Pose::from_yaw_pitch(Vec3::new(p[0], p[1], p[2]), p[3], p.get(4).copied().unwrap_or(0.0));
    let fields = args
        .checkpoints
        .iter()
        .map(|c| load_checkpoint(c).with_context(|| format!("loading {}", c.display())))
        .collect::<Result<Vec<_>>>()?;
    let Some(first) = fields.first() else {
        bail!("at least one checkpoint is required");
    };
    let opts = RenderOptions::new(args.near, first.bounds().diagonal(), args.samples)?;
    let renders: Vec<_> = fields.iter().map(|f| render_image(f, &pose, &intr, &opts)).collect();
    let pred = mixture_render(&renders);
    let truth = match &args.scene {
        Some(s) => {
            let scene = load_scene(s).with_context(|| format!("loading {}", s.display()))?;
            Some(scene.render_ground_truth(&pose, &intr)?)
        }
        None => None,
    };

    fs::create_dir_all(&args.out)?;
    let (w, h) = (intr.width, intr.height);
    let n = intr.pixel_count();
    let k = pred.num_categories;
    let mut written = Vec::new();
    let mut emit = |name: &str, f: &dyn Fn(BufWriter<File>) -> std::io::Result<()>| -> Result<()> {
        f(create(&args.out, name)?)?;
        written.push(name.to_string());
        Ok(())
    };

    let rgb_std: Vec<[f64; 3]> = pred.rgb_var.iter().map(|v| v.map(|x| x.max(0.0).sqrt())).collect();
    let depth_std: Vec<f64> = pred.depth_var.iter().map(|v| v.max(0.0).sqrt()).collect();
    let labels: Vec<u16> = (0..n)
        .map(|i| {
            let q = pred.category_at(i);
            (0..k).fold(0, |b, c| if q[c] > q[b] { c } else { b }) as u16
        })
        .collect();
    let entropy: Vec<f64> = (0..n).map(|i| categorical_entropy(pred.category_at(i))).collect();

    emit("rgb_pred.ppm", &|f| write_ppm(f, w, h, &pred.rgb))?;
    emit("rgb_std.ppm", &|f| write_ppm(f, w, h, &rgb_std))?;
    emit("depth_pred.depth", &|f| write_depth(f, w, h, &pred.depth))?;
    emit("depth_std.depth", &|f| write_depth(f, w, h, &depth_std))?;
    emit("sem_pred.cat", &|f| write_category(f, w, h, &labels))?;
    emit("sem_entropy.depth", &|f| write_depth(f, w, h, &entropy))?;

    if let Some(t) = &truth {
        let rgb_sq: Vec<[f64; 3]> = (0..n)
            .map(|i| [0, 1, 2].map(|c| (pred.rgb[i][c] - t.rgb[i][c]).powi(2)))
            .collect();
        let depth_sq: Vec<f64> = (0..n).map(|i| (pred.depth[i] - t.depth[i]).powi(2)).collect();
        let wrong: Vec<u16> = (0..n).map(|i| u16::from(labels[i] != t.category[i])).collect();
        emit("rgb_truth.ppm", &|f| write_ppm(f, w, h, &t.rgb))?;
        emit("rgb_sqerr.ppm", &|f| write_ppm(f, w, h, &rgb_sq))?;
        emit("depth_truth.depth", &|f| write_depth(f, w, h, &t.depth))?;
        emit("depth_sqerr.depth", &|f| write_depth(f, w, h, &depth_sq))?;
        emit("sem_truth.cat", &|f| write_category(f, w, h, &t.category))?;
        emit("sem_wrong.cat", &|f| write_category(f, w, h, &wrong))?;
    }
    written.sort();
    Ok(written)
}
