use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use activescout::field::io::load_checkpoint;
use activescout::field::{render_image, RenderOptions};
use activescout::scene::io::read_depth;
use activescout::scene::{CameraIntrinsics, Pose, Vec3};
use serde_json::Value;

const SMALL: &str = r#"{
  "seed": 1,
  "schedule": {"init_views": 8, "init_steps": 30, "iteration_steps": 10, "final_steps": 10, "max_iterations": 2},
  "training": {"resolutions": [[16, 16, 16], [8, 8, 8]], "rays_per_step": 64, "n_samples": 32},
  "image": {"width": 8, "height": 8},
  "plan_samples": 32,
  "planner": {"n_candidates": 4}
}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_activescout"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, body).unwrap();
    p
}

fn explore(dir: &Path, extra: &[&str]) -> PathBuf {
    let cfg = write_config(dir, SMALL);
    let out = dir.join("run");
    let mut args = vec!["explore", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn explore_writes_manifest_and_honors_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let out = explore(tmp.path(), &["--seed", "1", "--method", "frontier"]);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["status"], "completed");
    assert_eq!(m["command"], "explore");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(outputs.contains(&"metrics.csv"));
    let cfg = json(&out.join("config.json"));
    assert_eq!(cfg["seed"], 1);
    assert_eq!(cfg["method"], "frontier");
}

#[test]
fn config_and_out_may_follow_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("late");
    let o = run(&["explore", "--seed", "2", &format!("--config={}", cfg.display()), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&out.join("config.json"))["seed"], 2);
    let o = run(&["explore", "--out", "a", "--seed", "2", "--out", "b"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--out given twice"));
}

#[test]
fn config_errors_exit_with_two() {
    let o = run(&["explore", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cannot read config"));
    let o = run(&["explore", "--schedule.bogus", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown config key"));
    let o = run(&["explore", "--schedule.max_iterations", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["baseline", "--method", "predictive_info"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn baseline_uses_frequency_and_default_out_root() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let root = tmp.path().join("root");
    let o = bin()
        .args(["baseline", "--config", cfg.to_str().unwrap()])
        .env("ACTIVESCOUT_OUT", &root)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let dirs: Vec<String> = fs::read_dir(&root)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(dirs.len(), 1);
    assert!(dirs[0].starts_with("frequency-s1-"), "{dirs:?}");
    let m = json(&root.join(&dirs[0]).join("manifest.json"));
    assert_eq!(m["command"], "baseline");
    assert!(m["config_hash"].as_str().unwrap().starts_with(&dirs[0]["frequency-s1-".len()..]));
}

#[test]
fn config_hash_ignores_key_order() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.json");
    let b = tmp.path().join("b.json");
    fs::write(&a, r#"{"seed": 4, "image": {"width": 8, "height": 8}}"#).unwrap();
    fs::write(&b, r#"{"image": {"height": 8, "width": 8}, "seed": 4}"#).unwrap();
    let hash = |cfg: &Path, name: &str| {
        let out = tmp.path().join(name);
        let o = run(&[
            "explore", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(),
            "--schedule.init_views", "4", "--schedule.init_steps", "2", "--schedule.iteration_steps", "1",
            "--schedule.final_steps", "0", "--schedule.max_iterations", "1",
            "--training.resolutions", "[[8,8,8],[8,8,8]]", "--planner.n_candidates", "2",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        json(&out.join("manifest.json"))["config_hash"].clone()
    };
    assert_eq!(hash(&a, "ra"), hash(&b, "rb"));
}

#[test]
fn replay_is_byte_identical() {
    let t1 = tempfile::tempdir().unwrap();
    let t2 = tempfile::tempdir().unwrap();
    let a = explore(t1.path(), &[]);
    let b = explore(t2.path(), &["--threads", "1"]);
    assert_eq!(fs::read(a.join("metrics.csv")).unwrap(), fs::read(b.join("metrics.csv")).unwrap());
}

#[test]
fn render_writes_four_maps_per_channel() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = explore(tmp.path(), &[]);
    let out = tmp.path().join("render");
    let o = run(&[
        "render",
        "--checkpoint", run_dir.join("fields/member_0.ckpt").to_str().unwrap(),
        "--checkpoint", run_dir.join("fields/member_1.ckpt").to_str().unwrap(),
        "--scene", run_dir.join("scene.json").to_str().unwrap(),
        "--pose", "1.0,1.0,1.2,0.3",
        "--width", "6", "--height", "4",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for ch in [("rgb", "ppm"), ("depth", "depth"), ("sem", "cat")] {
        let n = fs::read_dir(&out)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with(ch.0))
            .count();
        assert_eq!(n, 4, "{}", ch.0);
    }
    let (w, h, d) = read_depth(fs::File::open(out.join("depth_std.depth")).unwrap()).unwrap();
    assert_eq!((w, h, d.len()), (6, 4, 24));
    assert!(d.iter().all(|v| *v >= 0.0));
}

#[test]
fn render_without_scene_skips_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = explore(tmp.path(), &[]);
    let out = tmp.path().join("render");
    let o = run(&[
        "render",
        "--checkpoint", run_dir.join("fields/member_0.ckpt").to_str().unwrap(),
        "--pose", "1,1,1.2,0",
        "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("rgb_pred.ppm").exists());
    assert!(!out.join("rgb_truth.ppm").exists());
}

#[test]
fn one_pixel_render_matches_library() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = explore(tmp.path(), &[]);
    let ckpt = run_dir.join("fields/member_0.ckpt");
    let out = tmp.path().join("px");
    let o = run(&[
        "render", "--checkpoint", ckpt.to_str().unwrap(), "--pose", "1.5,1.2,1.1,-0.4,0.1",
        "--width", "1", "--height", "1", "--samples", "64", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let field = load_checkpoint(&ckpt).unwrap();
    let pose = Pose::from_yaw_pitch(Vec3::new(1.5, 1.2, 1.1), -0.4, 0.1);
    let intr = CameraIntrinsics::new(1, 1, 90f64.to_radians()).unwrap();
    let opts = RenderOptions::new(0.05, field.bounds().diagonal(), 64).unwrap();
    let lib = render_image(&field, &pose, &intr, &opts);
    let (_, _, depth) = read_depth(fs::File::open(out.join("depth_pred.depth")).unwrap()).unwrap();
    assert_eq!(depth[0] as f32, lib.depth[0] as f32);
    let (_, _, var) = read_depth(fs::File::open(out.join("depth_std.depth")).unwrap()).unwrap();
    assert_eq!(var[0] as f32, lib.depth_var[0].sqrt() as f32);
}

#[test]
fn corrupt_checkpoint_reports_checksum() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = explore(tmp.path(), &[]);
    let ckpt = tmp.path().join("bad.ckpt");
    let mut bytes = fs::read(run_dir.join("fields/member_0.ckpt")).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    fs::write(&ckpt, bytes).unwrap();
    let o = run(&["render", "--checkpoint", ckpt.to_str().unwrap(), "--pose", "1,1,1,0", "--out", tmp.path().join("r").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));
}

#[test]
fn malformed_pose_is_a_config_error() {
    let o = run(&["render", "--checkpoint", "x.ckpt", "--pose", "1,2", "--out", "/tmp/unused"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn eval_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = explore(tmp.path(), &[]);
    let names = ["objects_vs_distance.csv", "reconstruction.csv", "information.csv", "coverage.csv"];
    let read_all = || -> Vec<Vec<u8>> { names.iter().map(|n| fs::read(run_dir.join("eval").join(n)).unwrap()).collect() };
    let o = run(&["eval", run_dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = read_all();
    let rows = fs::read_to_string(run_dir.join("metrics.csv")).unwrap().lines().count();
    for body in &first {
        assert_eq!(String::from_utf8_lossy(body).lines().count(), rows);
    }
    let o = run(&["eval", run_dir.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(first, read_all());
}

#[test]
fn eval_of_empty_dir_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["eval", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("metrics.csv"));
}

#[test]
fn linear_demo_csv() {
    let o = run(&["linear-demo", "--d", "2", "--horizon", "15", "--seed", "3"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,objective,angle_deg");
    assert_eq!(lines.len(), 16);
    let last_angle: f64 = lines[15].split(',').nth(2).unwrap().parse().unwrap();
    assert!(last_angle < 5.0, "{last_angle}");

    let again = run(&["linear-demo", "--d", "2", "--horizon", "15", "--seed", "3"]);
    assert_eq!(text.as_bytes(), again.stdout.as_slice());

    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("demo.csv");
    let o = run(&["linear-demo", "--horizon", "15", "--seed", "3", "--out", file.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(file).unwrap(), text);
}

#[test]
fn linear_demo_rejects_zero_dimension() {
    let o = run(&["linear-demo", "--d", "0"]);
    assert_eq!(o.status.code(), Some(2));
}
