#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn vdaudit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vdaudit")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

/// Toy data plus a config with a fast attack network.
fn toy(dir: &Path) -> PathBuf {
    common::write_toy(dir, 400, 3);
    let cfg = dir.join("toy.toml");
    std::fs::write(
        &cfg,
        r#"
dataset = "toy.csv"
schema = "toy.schema.json"
protected = "sex"
depth = 4
epsilon = [1.0]
fairpick_t = [0.6]
min_per_cluster = 3
max_k = 4
trials = 2
seed = 17
out = "out"

[mlp]
hidden = 8
epochs = 5
learning_rate = 0.01
batch_size = 16
"#,
    )
    .unwrap();
    cfg
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn exit_codes() {
    assert_eq!(code(&vdaudit(&["--help"])), 0);
    assert_eq!(code(&vdaudit(&[])), 1);
    assert_eq!(code(&vdaudit(&["experiment", "--epsilon", "abc"])), 1);
    assert_eq!(code(&vdaudit(&["experiment", "--config", "/nonexistent/cfg.toml"])), 1);
    assert_eq!(code(&vdaudit(&["experiment", "--dataset", "x.csv"])), 1);

    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path());
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&vdaudit(&["experiment", "--config", cfg, "--epsilon", "-1"])), 1);
    assert_eq!(code(&vdaudit(&["experiment", "--config", cfg, "--fairpick-t", "1.5"])), 1);
    assert_eq!(code(&vdaudit(&["experiment", "--config", cfg, "--protected", "nope"])), 1);
    assert_eq!(code(&vdaudit(&["train", "--config", cfg, "--epsilon", "1,2"])), 1);
    let missing = dir.path().join("missing.csv");
    assert_eq!(code(&vdaudit(&["experiment", "--config", cfg, "--dataset", missing.to_str().unwrap()])), 2);
    // An attack model without a tree is a runtime failure.
    let out = dir.path().join("empty");
    assert_eq!(code(&vdaudit(&["attack", "--config", cfg, "--out", out.to_str().unwrap()])), 2);
}

#[test]
fn staged_commands_reproduce_trial_zero_of_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path());
    let cfg = cfg.to_str().unwrap();
    let stage = dir.path().join("stage");
    let stage_s = stage.to_str().unwrap();
    let flags = ["--config", cfg, "--epsilon", "1", "--fairpick-t", "none", "--out", stage_s];
    for cmd in ["train", "attack", "audit"] {
        let out = vdaudit(&[&[cmd][..], &flags[..]].concat());
        assert_eq!(code(&out), 0, "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(json(&stage.join("tree.json"))["kind"], "target_tree");
    assert_eq!(json(&stage.join("attack.json"))["kind"], "attack_model");
    let audit = json(&stage.join("audit.json"));
    assert!(stage.join("bins.csv").exists());

    let grid = dir.path().join("grid");
    let out = vdaudit(&["experiment", "--config", cfg, "--fairpick-t", "none", "--trials", "1", "--out", grid.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&grid.join("report.json"));
    let run = &report["cells"]["t-none_eps-1"]["runs"][0]["metrics"];
    assert_eq!(audit["cell"], "t-none_eps-1");
    for field in ["train_accuracy", "test_accuracy", "precision", "recall"] {
        assert_eq!(audit[field], run[field], "{field}");
    }
    assert_eq!(audit["vd"], run["vd_dp"]);
}

#[test]
fn mitigate_writes_reduced_csv_and_plans() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path());
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("mit");
    let res = vdaudit(&["mitigate", "--config", cfg, "--fairpick-t", "0.4", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let rows = std::fs::read_to_string(out.join("mitigated.csv")).unwrap().lines().count() - 1;
    assert!(rows < 400 && rows > 0, "{rows}");
    let plans = json(&out.join("plan.json"));
    assert_eq!(plans.as_array().unwrap().len(), 2, "one plan per class");

    let same = dir.path().join("same");
    let res = vdaudit(&["mitigate", "--config", cfg, "--fairpick-t", "1", "--out", same.to_str().unwrap()]);
    assert_eq!(code(&res), 0);
    let original = std::fs::read_to_string(dir.path().join("toy.csv")).unwrap();
    let kept = std::fs::read_to_string(same.join("mitigated.csv")).unwrap();
    assert_eq!(kept.lines().count(), original.lines().count());

    assert_eq!(code(&vdaudit(&["mitigate", "--config", cfg, "--fairpick-t", "none"])), 1);
}

#[test]
fn experiment_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = toy(dir.path());
    let res = vdaudit(&["experiment", "--config", cfg.to_str().unwrap(), "--trials", "1"]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
    let out = dir.path().join("out");
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
    for key in ["t-none_eps-none", "t-none_eps-1", "t-0.6_eps-none", "t-0.6_eps-1"] {
        assert!(out.join(format!("bins_{key}.csv")).exists(), "{key}");
    }
    assert!(out.join("plans_t-0.6_eps-1.json").exists());
}
