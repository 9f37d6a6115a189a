//! End-to-end tests of the `sqlcost` binary: exit codes, determinism,
//! and the full generate/train/evaluate/monitor/simulate flow.

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::temp_dir;

fn sqlcost(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqlcost"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn path_str(path: &Path) -> String {
    path.to_str().unwrap().to_string()
}

#[test]
fn generate_is_deterministic_per_seed() {
    let dir = temp_dir("cli-gen");
    let a = dir.join("a.jsonl");
    let b = dir.join("b.jsonl");
    let c = dir.join("c.jsonl");
    for (out, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        let run = sqlcost(&[
            "generate",
            "--n",
            "1000",
            "--seed",
            seed,
            "--out",
            &path_str(out),
        ]);
        assert!(run.status.success(), "{}", stderr(&run));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn usage_errors_exit_one() {
    let run = sqlcost(&["generate", "--definitely-not-a-flag"]);
    assert_eq!(run.status.code(), Some(1));
    let run = sqlcost(&["frobnicate"]);
    assert_eq!(run.status.code(), Some(1));
    let run = sqlcost(&["train", "--logs", "x.jsonl", "--repo", "r", "--model", "svm"]);
    assert_eq!(run.status.code(), Some(1), "{}", stderr(&run));
    let run = sqlcost(&["--help"]);
    assert_eq!(run.status.code(), Some(0));
}

#[test]
fn empty_logs_are_a_data_error() {
    let dir = temp_dir("cli-empty");
    let logs = dir.join("empty.jsonl");
    fs::write(&logs, "").unwrap();
    let run = sqlcost(&[
        "train",
        "--logs",
        &path_str(&logs),
        "--repo",
        &path_str(&dir.join("repo")),
    ]);
    assert_eq!(run.status.code(), Some(2), "{}", stderr(&run));
    assert!(
        stderr(&run).contains("empty dataset"),
        "unexpected message: {}",
        stderr(&run)
    );
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn missing_logs_file_is_an_internal_error() {
    let run = sqlcost(&["train", "--logs", "/nonexistent/x.jsonl", "--repo", "/tmp/r"]);
    assert_eq!(run.status.code(), Some(3), "{}", stderr(&run));
}

#[test]
fn full_pipeline_roundtrip() {
    let dir = temp_dir("cli-full");
    let logs = dir.join("logs.jsonl");
    let repo = dir.join("repo");

    let run = sqlcost(&[
        "generate",
        "--n",
        "3000",
        "--seed",
        "3",
        "--out",
        &path_str(&logs),
    ]);
    assert!(run.status.success(), "{}", stderr(&run));

    // logreg keeps this test quick; reports land on stdout
    let train = sqlcost(&[
        "train",
        "--logs",
        &path_str(&logs),
        "--repo",
        &path_str(&repo),
        "--model",
        "logreg",
        "--vectorizer",
        "tfidf",
        "--seed",
        "11",
    ]);
    assert!(train.status.success(), "{}", stderr(&train));
    let report = stdout(&train);
    assert!(report.contains("CPU time model"), "{report}");
    assert!(report.contains("[30s, 5h)"), "{report}");
    assert!(report.contains("saved bundles: cpu v1, memory v1"), "{report}");

    // identical flags and seed reproduce the reported metrics
    let again = sqlcost(&[
        "train",
        "--logs",
        &path_str(&logs),
        "--repo",
        &path_str(&repo),
        "--model",
        "logreg",
        "--vectorizer",
        "tfidf",
        "--seed",
        "11",
    ]);
    let strip_variable = |s: &str| -> String {
        s.lines()
            .filter(|line| !line.contains("in ") || !line.contains('s'))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(
        strip_variable(&report).replace("cpu v1, memory v1", ""),
        strip_variable(&stdout(&again)).replace("cpu v2, memory v2", "")
    );

    let eval = sqlcost(&[
        "evaluate",
        "--logs",
        &path_str(&logs),
        "--repo",
        &path_str(&repo),
        "--json",
    ]);
    assert!(eval.status.success(), "{}", stderr(&eval));
    for line in stdout(&eval).lines() {
        let report: serde_json::Value = serde_json::from_str(line).expect("JSON report");
        assert!(report["accuracy"].as_f64().unwrap() > 0.8);
    }

    let sim = sqlcost(&[
        "simulate-routing",
        "--n",
        "1500",
        "--seed",
        "5",
        "--repo",
        &path_str(&repo),
        "--policy",
        "predicted_cost",
    ]);
    assert!(sim.status.success(), "{}", stderr(&sim));
    let lines: Vec<serde_json::Value> = stdout(&sim)
        .lines()
        .map(|l| serde_json::from_str(l).expect("JSON report"))
        .collect();
    // trained run plus its oracle bound
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["predictor"], "trained");
    assert_eq!(lines[1]["predictor"], "oracle");
    assert_eq!(lines[0]["completed"], 1500);

    fs::remove_dir_all(&dir).ok();
}

#[test]
fn monitor_reports_windows_and_retrains_on_drift() {
    let dir = temp_dir("cli-monitor");
    let logs = dir.join("logs.jsonl");
    let repo = dir.join("repo");

    let run = sqlcost(&[
        "generate",
        "--n",
        "4000",
        "--seed",
        "13",
        "--out",
        &path_str(&logs),
    ]);
    assert!(run.status.success());
    let train = sqlcost(&[
        "train",
        "--logs",
        &path_str(&logs),
        "--repo",
        &path_str(&repo),
        "--model",
        "logreg",
        "--seed",
        "13",
    ]);
    assert!(train.status.success(), "{}", stderr(&train));

    let monitor = sqlcost(&[
        "monitor",
        "--repo",
        &path_str(&repo),
        "--windows",
        "6",
        "--drift-at",
        "3",
        "--severity",
        "0.5",
        "--window-size",
        "2500",
        "--seed",
        "17",
    ]);
    assert!(monitor.status.success(), "{}", stderr(&monitor));
    let out = stdout(&monitor);
    let reports: Vec<serde_json::Value> = out
        .lines()
        .filter(|l| l.starts_with('{'))
        .map(|l| serde_json::from_str(l).expect("window report"))
        .collect();
    assert_eq!(reports.len(), 12, "6 windows x 2 resources: {out}");

    let cpu_acc = |w: usize| -> f64 {
        reports
            .iter()
            .find(|r| r["window_index"] == w && r["resource"] == "cpu")
            .unwrap()["accuracy"]
            .as_f64()
            .unwrap()
    };
    // decay shows up once the drift starts at window 3
    assert!(cpu_acc(3) < cpu_acc(1) - 0.03, "no decay: {out}");
    assert!(out.contains("retrained at window"), "no retrain event: {out}");

    fs::remove_dir_all(&dir).ok();
}

#[test]
fn config_file_overrides_flags() {
    let dir = temp_dir("cli-config");
    let logs = dir.join("logs.jsonl");
    let repo = dir.join("repo");
    let config = dir.join("train.json");

    sqlcost(&["generate", "--n", "2000", "--seed", "1", "--out", &path_str(&logs)]);
    fs::write(&config, r#"{"model": "logreg", "seed": 99}"#).unwrap();
    // flag says gbt, config wins with logreg
    let train = sqlcost(&[
        "train",
        "--logs",
        &path_str(&logs),
        "--repo",
        &path_str(&repo),
        "--model",
        "gbt",
        "--config",
        &path_str(&config),
    ]);
    assert!(train.status.success(), "{}", stderr(&train));
    assert!(
        stdout(&train).contains("trained logreg+tfidf"),
        "{}",
        stdout(&train)
    );
    fs::remove_dir_all(&dir).ok();
}
