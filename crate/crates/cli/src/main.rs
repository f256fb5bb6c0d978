mod config;
mod eval;
mod manifest;
mod render;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use activescout::explorer::{run_experiment, ExperimentConfig, ExplorerError};
use activescout::linear::{demo_csv, linear_demo};
use activescout::par;
use activescout::scene::SceneError;
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::{as_baseline, config_hash, parse_overrides, resolve};
use manifest::RunManifest;
use render::{parse_pose, RenderArgs};

pub const OUT_ENV: &str = "ACTIVESCOUT_OUT";

#[derive(Parser)]
#[command(name = "activescout", version, about = "Active exploration by predictive information")]
struct Cli {
    /// Worker threads for the data-parallel loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the closed-loop experiment.
    Explore(RunArgs),
    /// Run a baseline (frequency unless `--method frontier`).
    Baseline(RunArgs),
    /// Render checkpoints from a pose, with residuals against a scene.
    Render(RenderCmd),
    /// Derive metric tables from a finished run.
    Eval {
        run: PathBuf,
    },
    /// Greedy exploration of the linear-Gaussian system.
    LinearDemo {
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the CSV to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `$ACTIVESCOUT_OUT/{method}-s{seed}-{hash}`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Config overrides as `--dotted.key value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RenderCmd {
    /// Field checkpoint; repeat for an ensemble.
    #[arg(long = "checkpoint", required = true)]
    checkpoints: Vec<PathBuf>,
    /// Camera pose `x,y,z,yaw[,pitch]` in meters and radians.
    #[arg(long, allow_hyphen_values = true)]
    pose: String,
    /// Scene JSON for ground truth and residuals.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    width: usize,
    #[arg(long, default_value_t = 32)]
    height: usize,
    #[arg(long, default_value_t = 90.0)]
    hfov_deg: f64,
    #[arg(long, default_value_t = 128)]
    samples: usize,
    #[arg(long, default_value_t = 0.05)]
    near: f64,
    #[arg(long)]
    out: PathBuf,
}

/// Marks errors caused by the user's configuration.
#[derive(Debug)]
struct ConfigError;

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("configuration error")
    }
}

impl std::error::Error for ConfigError {}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.downcast_ref::<ConfigError>().is_some()
        || e.chain().any(|c| {
            matches!(c.downcast_ref::<ExplorerError>(), Some(ExplorerError::Config(_)))
                || matches!(c.downcast_ref::<SceneError>(), Some(SceneError::InvalidSpec(_)))
        })
}

/// Joins the error chain, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !parts.last().is_some_and(|p| p.contains(&msg)) {
            parts.push(msg);
        }
    }
    parts.join(": ")
}

fn config_err<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| e.context(ConfigError))
}

impl RunArgs {
    /// Moves `--config` and `--out` found among the trailing overrides into
    /// their own fields.
    fn normalized(&self) -> Result<RunArgs> {
        let mut out = RunArgs {
            config: self.config.clone(),
            out: self.out.clone(),
            overrides: Vec::new(),
        };
        let mut it = self.overrides.iter();
        while let Some(tok) = it.next() {
            let (key, inline) = match tok.split_once('=') {
                Some((k, v)) => (k, Some(v.to_string())),
                None => (tok.as_str(), None),
            };
            let slot = match key {
                "--config" => &mut out.config,
                "--out" => &mut out.out,
                _ => {
                    out.overrides.push(tok.clone());
                    continue;
                }
            };
            let value = match inline {
                Some(v) => v,
                None => it.next().cloned().with_context(|| format!("{key} needs a value"))?,
            };
            if slot.replace(PathBuf::from(value)).is_some() {
                anyhow::bail!("{key} given twice");
            }
        }
        Ok(out)
    }
}

fn resolve_args(args: &RunArgs, baseline: bool) -> Result<ExperimentConfig> {
    config_err((|| {
        let overrides = parse_overrides(&args.overrides)?;
        let resolved = resolve(args.config.as_deref(), &overrides)?;
        if baseline {
            as_baseline(resolved)
        } else {
            Ok(resolved.config)
        }
    })())
}

fn default_out(cfg: &ExperimentConfig, hash: &str) -> PathBuf {
    let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    root.join(format!("{}-s{}-{}", cfg.method.name(), cfg.seed, &hash[..8]))
}

fn run_command(name: &str, args: &RunArgs, baseline: bool, threads: Option<usize>) -> Result<()> {
    let args = &config_err(args.normalized())?;
    let cfg = resolve_args(args, baseline)?;
    let hash = config_hash(&cfg);
    let dir = args.out.clone().unwrap_or_else(|| default_out(&cfg, &hash));
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut manifest = RunManifest::start(name, hash, threads);
    manifest.write(&dir)?;
    let result = run_experiment(&cfg, Some(&dir));
    let error = result.as_ref().err().map(|e| e.to_string());
    manifest.finish(&dir, error)?;
    let result = result?;
    let last = result.log.final_row();
    println!(
        "{}: {} method={} stop={:?} distance_m={:.3} objects={}/{}",
        name,
        dir.display(),
        cfg.method.name(),
        result.stop,
        last.map_or(0.0, |r| r.distance),
        last.map_or(0, |r| r.objects_localized),
        last.map_or(0, |r| r.objects_total),
    );
    Ok(())
}

fn render_command(c: &RenderCmd) -> Result<()> {
    let pose = config_err(parse_pose(&c.pose))?;
    let files = render::run(&RenderArgs {
        checkpoints: c.checkpoints.clone(),
        pose,
        scene: c.scene.clone(),
        width: c.width,
        height: c.height,
        hfov_deg: c.hfov_deg,
        samples: c.samples,
        near: c.near,
        out: c.out.clone(),
    })?;
    for f in files {
        println!("{}", c.out.join(f).display());
    }
    Ok(())
}

fn eval_command(run: &Path) -> Result<()> {
    for f in eval::run(run)? {
        println!("{}", run.join(f).display());
    }
    Ok(())
}

fn linear_command(d: usize, horizon: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let rows = config_err(linear_demo(d, horizon, seed).map_err(anyhow::Error::from))?;
    let csv = demo_csv(&rows);
    if let Some(p) = out {
        fs::write(p, &csv).with_context(|| format!("cannot write {}", p.display()))?;
    }
    print!("{csv}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        par::set_threads(n);
    }
    let result = match &cli.command {
        Command::Explore(a) => run_command("explore", a, false, cli.threads),
        Command::Baseline(a) => run_command("baseline", a, true, cli.threads),
        Command::Render(c) => render_command(c),
        Command::Eval { run } => eval_command(run),
        Command::LinearDemo { d, horizon, seed, out } => linear_command(*d, *horizon, *seed, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(if is_config_error(&e) { 2 } else { 1 })
        }
    }
}
