//! `eval`: metric tables derived from a run's `metrics.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use activescout::explorer::{MetricsLog, MetricsRow};
use anyhow::{anyhow, Context, Result};

pub const EVAL_DIR: &str = "eval";

type Column = (&'static str, fn(&MetricsRow) -> String);

fn table(log: &MetricsLog, cols: &[Column]) -> String {
    let mut s = cols.iter().map(|c| c.0).collect::<Vec<_>>().join(",");
    s.push('\n');
    for r in &log.rows {
        let line: Vec<String> = cols.iter().map(|c| (c.1)(r)).collect();
        let _ = writeln!(s, "{}", line.join(","));
    }
    s
}

pub fn tables(log: &MetricsLog) -> Vec<(&'static str, String)> {
    let base: [Column; 3] = [
        ("iteration", |r| r.iteration.to_string()),
        ("phase", |r| r.phase.name().to_string()),
        ("distance_m", |r| r.distance.to_string()),
    ];
    let with = |extra: &[Column]| -> Vec<Column> { base.iter().chain(extra).copied().collect() };
    vec![
        (
            "objects_vs_distance.csv",
            table(
                log,
                &with(&[
                    ("objects_localized", |r| r.objects_localized.to_string()),
                    ("objects_total", |r| r.objects_total.to_string()),
                    ("fraction", |r| {
                        (r.objects_localized as f64 / r.objects_total.max(1) as f64).to_string()
                    }),
                ]),
            ),
        ),
        (
            "reconstruction.csv",
            table(
                log,
                &with(&[
                    ("psnr_db", |r| r.psnr.to_string()),
                    ("depth_mse_m2", |r| r.depth_mse.to_string()),
                    ("semantic_ce", |r| r.semantic_ce.to_string()),
                ]),
            ),
        ),
        (
            "information.csv",
            table(
                log,
                &with(&[
                    ("I_rgb", |r| r.info_rgb.to_string()),
                    ("I_depth", |r| r.info_depth.to_string()),
                    ("I_sem", |r| r.info_semantic.to_string()),
                    ("I_occ", |r| r.info_occupancy.to_string()),
                    ("I_total", |r| r.info_total.to_string()),
                ]),
            ),
        ),
        (
            "coverage.csv",
            table(
                log,
                &with(&[
                    ("coverage_rgb", |r| r.coverage_rgb.to_string()),
                    ("coverage_depth", |r| r.coverage_depth.to_string()),
                    ("semantic_wrong_uncertain", |r| r.semantic_wrong_uncertain.to_string()),
                ]),
            ),
        ),
    ]
}

/// Reads `run/metrics.csv` and writes the tables under `run/eval/`,
/// replacing earlier output. Returns the written paths relative to `run`.
pub fn run(dir: &Path) -> Result<Vec<String>> {
    let path = dir.join("metrics.csv");
    let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let log = MetricsLog::from_csv(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    if log.rows.is_empty() {
        return Err(anyhow!("{} has no rows", path.display()));
    }
    let out = dir.join(EVAL_DIR);
    fs::create_dir_all(&out)?;
    let mut written = Vec::new();
    for (name, body) in tables(&log) {
        fs::write(out.join(name), body)?;
        written.push(format!("{EVAL_DIR}/{name}"));
    }
    Ok(written)
}
