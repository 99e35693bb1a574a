use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use neurowalk_cli::commands::Manifest;
use neurowalk_cli::RunConfig;

fn neurowalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_neurowalk")).args(args).env_remove("NEUROWALK_OUT").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn rollout_writes_a_complete_bundle_and_analyze_reproduces_it() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let o = neurowalk(&["--out", path(&run), "rollout", "--t-max", "20"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("R² ="), "{stdout}");

    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.command, "rollout");
    for f in [
        "config.toml",
        "trace.csv",
        "muscles.csv",
        "events.csv",
        "trace.json",
        "analysis.json",
        "ip_lines.csv",
        "ip_lines.svg",
        "stance.csv",
        "stance.svg",
    ] {
        assert!(manifest.files.iter().any(|m| m == f), "{f} missing from manifest");
        assert!(run.join(f).is_file(), "{f} not written");
    }
    let trace = fs::read_to_string(run.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 20_001 + 1);
    let copied = RunConfig::load(&run.join("config.toml")).unwrap();
    assert_eq!(copied.hash(), manifest.config_hash);

    let again = dir.path().join("again");
    let o = neurowalk(&["--out", path(&again), "analyze", "--run", path(&run)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(run.join("analysis.json")).unwrap(), fs::read(again.join("analysis.json")).unwrap());
    assert_eq!(fs::read(run.join("ip_lines.csv")).unwrap(), fs::read(again.join("ip_lines.csv")).unwrap());
}

#[test]
fn animate_renders_twenty_five_frames_per_second() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert_eq!(code(&neurowalk(&["--out", path(&run), "rollout", "--t-max", "2"])), 0);
    let anim = dir.path().join("anim");
    let o = neurowalk(&["--out", path(&anim), "animate", "--run", path(&run)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let pngs = fs::read_dir(anim.join("frames")).unwrap().count();
    assert_eq!(pngs, 50);
    let list = fs::read_to_string(anim.join("frames.csv")).unwrap();
    assert_eq!(list.lines().count(), 51);
    let img = image::open(anim.join("frames").join("frame_00000.png")).unwrap();
    assert_eq!((img.width(), img.height()), (640, 480));
}

#[test]
fn a_fall_exits_with_one_and_still_writes_the_trace() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let o = neurowalk(&["--out", path(&run), "rollout", "--terrain", "step:-0.5@2.0", "--t-max", "8"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("fell"));
    assert!(run.join("trace.csv").is_file());
    let analysis: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.join("analysis.json")).unwrap()).unwrap();
    assert_eq!(analysis["termination"], "fell");
}

#[test]
fn an_incomplete_config_exits_with_two_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let full = RunConfig::default().to_toml();
    let broken: String = full.lines().filter(|l| !l.starts_with("t_max")).map(|l| format!("{l}\n")).collect();
    assert_ne!(broken, full);
    let cfg = dir.path().join("broken.toml");
    fs::write(&cfg, broken).unwrap();
    let out = dir.path().join("out");
    let o = neurowalk(&["--config", path(&cfg), "--out", path(&out), "rollout"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("t_max"));
    assert!(!out.exists());

    fs::write(&cfg, "this is = = not toml").unwrap();
    assert_eq!(code(&neurowalk(&["--config", path(&cfg), "--out", path(&out), "rollout"])), 2);
    assert!(!out.exists());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&neurowalk(&["--out", path(&out), "rollout", "--terrain", "hills"])), 2);
    assert_eq!(code(&neurowalk(&["--out", path(&out), "rollout", "--t-max", "-1"])), 2);
    assert_eq!(code(&neurowalk(&["frobnicate"])), 2);
    assert_eq!(code(&neurowalk(&["--out", path(&out), "optimize", "--resume"])), 2);
}

#[test]
fn default_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = neurowalk(&["default-config"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let cfg = RunConfig::from_toml(&text).unwrap();
    assert_eq!(cfg, RunConfig::default());
    let p = dir.path().join("c.toml");
    fs::write(&p, &text).unwrap();
    assert_eq!(code(&neurowalk(&["--config", path(&p), "default-config"])), 0);
}

#[test]
fn robustness_of_an_empty_archive_is_an_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let archive = dir.path().join("archive.jsonl");
    fs::write(&archive, "").unwrap();
    let out = dir.path().join("rob");
    let o = neurowalk(&["--out", path(&out), "robustness", "--archive", path(&archive)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("robustness.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1, "{csv}");
    assert!(out.join("robustness.svg").is_file());
}

#[test]
fn optimize_refuses_to_overwrite_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.simulation.t_max = 1.0;
    cfg.optimizer.budget = 6;
    cfg.optimizer.lambda = Some(3);
    let p = dir.path().join("c.toml");
    fs::write(&p, cfg.to_toml()).unwrap();
    let out = dir.path().join("opt");
    let args = ["--config", path(&p), "--out", path(&out), "optimize", "--mode", "max-r2"];
    let o = neurowalk(&args);
    // one-second rollouts cannot be steady
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout).matches("generation").count(), 2);
    assert!(out.join("checkpoint.json").is_file() && out.join("archive.jsonl").is_file());
    assert_eq!(code(&neurowalk(&args)), 2);

    let more = dir.path().join("more.toml");
    cfg.optimizer.budget = 9;
    fs::write(&more, cfg.to_toml()).unwrap();
    let o = neurowalk(&["--config", path(&more), "--out", path(&out), "optimize", "--mode", "max-r2", "--resume"]);
    assert_eq!(code(&o), 1);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("generation    2"), "{stdout}");
    assert_eq!(stdout.matches("generation").count(), 1);
}
