//! End-to-end tests of the nslab binary: exit codes, emitted files, and
//! reproducibility of numeric columns.

use std::path::Path;
use std::process::{Command, Output};

fn nslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nslab"))
        .args(args)
        .output()
        .expect("spawn nslab")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.ini");
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn usage_error_is_exit_2() {
    let out = nslab(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn forward_zero_potential() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "potential.kind = zero\nL = 3\n");
    let out_dir = dir.path().join("out");
    let out = nslab(&["forward", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("shifts.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# nslab "));
    assert_eq!(lines.next().unwrap(), "l,delta,jost_magnitude,delta_born");
    for line in lines {
        let delta: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(delta.abs() < 1e-10);
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["verdict"], "ok");
}

#[test]
fn malformed_potential_name_is_exit_2_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "potential.kind = no-such-potential\n");
    let out_dir = dir.path().join("out");
    let out = nslab(&["forward", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());
}

#[test]
fn invert_direct_breakdown_is_finding_not_error() {
    let dir = tempfile::tempdir().unwrap();
    let c_path = dir.path().join("c.csv");
    std::fs::write(&c_path, "l,c_l\n0,-1.0\n").unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("mode = direct\nc.file = {}\nr_grid.max = 10\n", c_path.display()),
    );
    let out_dir = dir.path().join("out");
    let out = nslab(&["invert", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["verdict"], "breakdown");
    let b = report["breakdown_radius"].as_f64().unwrap();
    assert!((b - 1.1535934731831021).abs() < 1e-3, "b = {b}");
}

#[test]
fn unknown_experiment_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("out");
    let out = nslab(&["experiment", "warp", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn transparent_experiment_emits_solvability_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c0_values = -0.5, -1\n");
    let out_dir = dir.path().join("out");
    let out = nslab(&[
        "experiment",
        "transparent",
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("transparent_sweep.csv")).unwrap();
    // Header comment + column header + one row per c0.
    assert_eq!(csv.lines().count(), 4);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["verdict"], "pass");
    assert!(report["metrics"]["breakdown_radius_1"].as_f64().unwrap() < 1.2);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "potential.kind = exponential\npotential.params = depth=0.5\nL = 2\n",
    );
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out_dir in [&out_a, &out_b] {
        let out = nslab(&["forward", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(
        std::fs::read(out_a.join("shifts.csv")).unwrap(),
        std::fs::read(out_b.join("shifts.csv")).unwrap()
    );
}
