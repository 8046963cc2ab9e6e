//! End-to-end checks through the real binary: file formats, exit codes,
//! and byte-identical reruns.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hyprel"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn hyprel");
    assert!(
        out.status.success(),
        "hyprel {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn gen_small_tree(dir: &Path) {
    run_ok(&[
        "gen-tree",
        "--variant",
        "H",
        "--branching",
        "3",
        "--budget",
        "40",
        "--feature-dim",
        "8",
        "--out",
        dir.to_str().unwrap(),
    ]);
}

#[test]
fn gen_tree_writes_all_files_and_preset_matches() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tree_h");
    let result = run_ok(&["gen-tree", "--variant", "H", "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("1093 nodes"), "stdout: {stdout}");
    assert!(stdout.contains("homophily 0.998"), "stdout: {stdout}");
    for name in ["graph.edges", "features.csv", "labels.txt", "depth.txt"] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    let edges = fs::read_to_string(out.join("graph.edges")).unwrap();
    assert_eq!(edges.lines().count(), 1092);
}

#[test]
fn unknown_verb_and_missing_files_fail_nonzero() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage") || err.contains("unrecognized"), "stderr: {err}");

    let out = bin()
        .args(["train", "--data", "/nonexistent", "--out", "/tmp/hyprel-nowhere"])
        .output()
        .unwrap();
    assert!(!out.status.success());

    let out = bin()
        .args(["train", "--data", "/nonexistent", "--out", "/tmp/x", "--set", "bogus=1"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn train_writes_artifacts_and_eval_probe_consume_them() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tree");
    gen_small_tree(&data);
    let run = dir.path().join("run");
    run_ok(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--set",
        "max_epochs=20",
        "--set",
        "patience=20",
        "--set",
        "dim=4",
        "--seed",
        "3",
    ]);
    for name in ["config.cfg", "embedding.txt", "weights.txt", "metrics.json", "history.csv"] {
        assert!(run.join(name).exists(), "{name} missing");
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("metrics.json")).unwrap()).unwrap();
    for key in ["min", "max", "mean", "root"] {
        assert!(metrics["hdo_stats"][key].is_number(), "hdo_stats.{key} missing");
    }
    assert!(metrics["metrics"]["accuracy"].is_number());

    // eval recomputes the same metrics from the stored weights.
    let eval_out = dir.path().join("eval.json");
    run_ok(&[
        "eval",
        "--run",
        run.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        eval_out.to_str().unwrap(),
    ]);
    let eval_metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&eval_out).unwrap()).unwrap();
    assert_eq!(metrics["metrics"], eval_metrics["metrics"]);
    assert_eq!(metrics["hdo_stats"], eval_metrics["hdo_stats"]);

    // probe reports the stats block for the stored embedding.
    let hist = dir.path().join("hist.csv");
    let out = run_ok(&[
        "probe",
        "--embedding",
        run.join("embedding.txt").to_str().unwrap(),
        "--depth",
        data.join("depth.txt").to_str().unwrap(),
        "--pairs",
        "200",
        "--hist-out",
        hist.to_str().unwrap(),
    ]);
    let doc: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    for key in ["min", "max", "mean", "root"] {
        assert!(doc["hdo_stats"][key].is_number());
    }
    assert!(doc["hierarchy_accuracy"].is_number());
    let hist_body = fs::read_to_string(&hist).unwrap();
    assert!(hist_body.starts_with("bin_left,bin_right,count\n"));
}

#[test]
fn train_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tree");
    gen_small_tree(&data);
    let mut outputs = Vec::new();
    for name in ["run_a", "run_b"] {
        let run = dir.path().join(name);
        run_ok(&[
            "train",
            "--data",
            data.to_str().unwrap(),
            "--out",
            run.to_str().unwrap(),
            "--set",
            "max_epochs=15",
            "--set",
            "dim=4",
            "--set",
            "hie.mode=full",
            "--set",
            "hie.lambda=0.1",
            "--seed",
            "7",
        ]);
        outputs.push(fs::read(run.join("metrics.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "metrics.json differs between identical runs");
}

#[test]
fn config_file_plus_override_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tree");
    gen_small_tree(&data);
    let cfg = dir.path().join("c.cfg");
    fs::write(&cfg, "dim=4\nmax_epochs=10\npatience=10\nhie.mode=stretch_only\n").unwrap();
    let run = dir.path().join("run");
    run_ok(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--set",
        "hie.lambda=0.01",
        "--seed",
        "1",
    ]);
    // The resolved config written to the run dir round-trips: file values
    // survive, overrides land.
    let body = fs::read_to_string(run.join("config.cfg")).unwrap();
    assert!(body.contains("dim=4"));
    assert!(body.contains("hie.mode=stretch_only"));
    assert!(body.contains("hie.lambda=0.01"));
    assert!(body.contains("seed=1"));
}

#[test]
fn help_lists_flags_for_every_verb() {
    for verb in ["gen-tree", "train", "eval", "probe", "sweep"] {
        let out = bin().args([verb, "--help"]).output().unwrap();
        assert!(out.status.success());
        let text = String::from_utf8_lossy(&out.stdout);
        match verb {
            "gen-tree" => {
                for flag in ["--variant", "--branching", "--budget", "--feature-dim", "--seed", "--out"] {
                    assert!(text.contains(flag), "{verb} help missing {flag}");
                }
            }
            "train" => {
                for flag in ["--data", "--out", "--config", "--set", "--seed"] {
                    assert!(text.contains(flag), "{verb} help missing {flag}");
                }
            }
            "eval" => {
                for flag in ["--run", "--data", "--out"] {
                    assert!(text.contains(flag), "{verb} help missing {flag}");
                }
            }
            "probe" => {
                for flag in ["--embedding", "--depth", "--pairs", "--bins", "--hist-out"] {
                    assert!(text.contains(flag), "{verb} help missing {flag}");
                }
            }
            "sweep" => {
                for flag in ["--data", "--out", "--seeds", "--config", "--set"] {
                    assert!(text.contains(flag), "{verb} help missing {flag}");
                }
            }
            _ => {}
        }
    }
}

#[test]
fn sweep_writes_per_seed_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("tree");
    gen_small_tree(&data);
    let out = dir.path().join("sweep");
    run_ok(&[
        "sweep",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seeds",
        "0,1,2",
        "--set",
        "max_epochs=8",
        "--set",
        "dim=3",
    ]);
    for seed in 0..3 {
        assert!(out.join(format!("metrics_seed{seed}.json")).exists());
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["aggregate"]["accuracy"].is_number());
}
