use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use arcgd_core::report::{
    parse_mlp_curve_csv, parse_run_csv, parse_summary_json, strip_column, RUN_HEADER,
};

fn arcgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arcgd"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn no_subcommand_prints_usage_and_fails() {
    let out = arcgd(&[]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn rejects_unknown_config_and_flags() {
    let out = arcgd(&["bench-rosenbrock", "--config", "C"]);
    assert!(!out.status.success());
    let out = arcgd(&["bench-rosenbrock", "--config", "A", "--frobnicate"]);
    assert!(!out.status.success());
    let out = arcgd(&["train-mlp", "--synthetic", "--optimizer", "rmsprop"]);
    assert!(!out.status.success());
    let out = arcgd(&["train-mlp"]);
    assert!(!out.status.success(), "a data source is required");
}

#[test]
fn range_checks_use_core_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let out = arcgd(&[
        "bench-rosenbrock",
        "--config",
        "B",
        "--dims",
        "2",
        "--max-iters",
        "10",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("patience"));
    let out = arcgd(&[
        "bench-rosenbrock",
        "--config",
        "A",
        "--dims",
        "1",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = arcgd(&[
        "train-mlp",
        "--synthetic",
        "--eta-low",
        "-1",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_rosenbrock_writes_reproducible_bundle() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = arcgd(&[
            "bench-rosenbrock",
            "--config",
            "A",
            "--dims",
            "2,10",
            "--runs",
            "2",
            "--trace-every",
            "50",
            "--out",
            path_str(dir.path()),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }

    let text = fs::read_to_string(a.path().join("records_A2.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), RUN_HEADER.join(","));
    let rows = parse_run_csv(text.as_bytes()).unwrap();
    assert_eq!(rows.len(), 4);
    let other = fs::read_to_string(b.path().join("records_A2.csv")).unwrap();
    assert_eq!(
        strip_column(&text, "time_s").unwrap(),
        strip_column(&other, "time_s").unwrap()
    );

    let summary = fs::read_to_string(a.path().join("summary.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(doc["metadata"]["seed"], 42);
    assert_eq!(doc["metadata"]["config"], "A");
    let summaries = parse_summary_json(summary.as_bytes()).unwrap();
    let sets: Vec<_> = summaries
        .iter()
        .map(|s| (s.test_set.as_str(), s.optimizer.as_str()))
        .collect();
    assert_eq!(
        sets,
        [
            ("A2", "ADAM"),
            ("A2", "ArcGD"),
            ("A10", "ADAM"),
            ("A10", "ArcGD")
        ]
    );

    let trace = fs::read_to_string(a.path().join("traces/A2_run1_ArcGD.csv")).unwrap();
    assert_eq!(
        trace.lines().next().unwrap(),
        "iteration,loss,smoothed_loss,grad_norm"
    );

    let report = arcgd(&["report", "--out", path_str(a.path())]);
    assert!(report.status.success());
    assert!(String::from_utf8_lossy(&report.stdout).contains("A10"));
}

#[test]
fn train_mlp_on_synthetic_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = arcgd(&[
        "train-mlp",
        "--synthetic",
        "--subset",
        "400",
        "--optimizer",
        "arcgd,sgd",
        "--max-iters",
        "200",
        "--out",
        path_str(dir.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let curve = fs::read_to_string(dir.path().join("curve_tiny_ArcGD.csv")).unwrap();
    let points = parse_mlp_curve_csv(curve.as_bytes()).unwrap();
    assert_eq!(points[0].iteration, 0);
    assert_eq!(points.last().unwrap().iteration, 200);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("training.json")).unwrap())
            .unwrap();
    assert_eq!(meta["metadata"]["monitor"], "test_accuracy");
    assert_eq!(meta["results"].as_array().unwrap().len(), 2);
}

#[test]
fn ablation_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = arcgd(&[
        "ablate-eta-low",
        "--synthetic",
        "--subset",
        "300",
        "--arch",
        "tiny,shallow",
        "--max-iters",
        "100",
        "--out",
        path_str(dir.path()),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(
        lines.next().unwrap(),
        "arch,checkpoint,eta_low_a,eta_low_b,test_acc_a,test_acc_b,delta"
    );
    assert_eq!(lines.count(), 2);
}

#[test]
fn missing_data_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = arcgd(&[
        "train-mlp",
        "--data",
        "/nonexistent/cifar",
        "--out",
        path_str(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(1));
}
