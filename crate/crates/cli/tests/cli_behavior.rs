//! Black-box tests of the bsms binary: file round-trips, exit codes, and
//! log-line shape.

use std::path::Path;
use std::process::{Command, Output};

fn bsms() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bsms"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("failed to spawn bsms")
}

fn write_path_mesh(path: &Path, n: usize) {
    let positions: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 * 0.1]).collect();
    let cells: Vec<[usize; 2]> = (0..n - 1).map(|i| [i, i + 1]).collect();
    let mesh = serde_json::json!({
        "dim": 1,
        "positions": positions,
        "cells": cells,
        "node_type": vec![0u8; n],
    });
    std::fs::write(path, serde_json::to_string(&mesh).unwrap()).unwrap();
}

#[test]
fn build_emits_a_halving_hierarchy_file() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("mesh.json");
    let out = dir.path().join("hier.json");
    write_path_mesh(&mesh, 16);
    let output = run(bsms()
        .arg("build")
        .args(["--mesh", mesh.to_str().unwrap()])
        .args(["--depth", "5"])
        .args(["--out", out.to_str().unwrap()]));
    assert!(output.status.success(), "{output:?}");
    let text = std::fs::read_to_string(&out).unwrap();
    let file: serde_json::Value = serde_json::from_str(&text).unwrap();
    let levels = file["levels"].as_array().unwrap();
    assert_eq!(levels.len(), 5);
    let sizes: Vec<usize> = levels
        .iter()
        .map(|l| l["positions"].as_array().unwrap().len())
        .collect();
    assert_eq!(sizes, vec![16, 8, 4, 2, 1]);
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("level=info event=build"), "{stderr}");
}

#[test]
fn eval_of_a_trajectory_against_itself_reports_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("data");
    let output = run(bsms()
        .arg("gen-heat1d")
        .args(["--split", "test"])
        .args(["--out-dir", out_dir.to_str().unwrap()]));
    assert!(output.status.success(), "{output:?}");
    for i in 0..4 {
        assert!(out_dir.join(format!("mesh_{i}.json")).exists());
        assert!(out_dir.join(format!("trajectory_{i}.json")).exists());
    }
    let truth = out_dir.join("trajectory_0.json");
    let metrics_path = dir.path().join("metrics.json");
    let output = run(bsms()
        .arg("eval")
        .args(["--prediction", truth.to_str().unwrap()])
        .args(["--truth", truth.to_str().unwrap()])
        .args(["--out", metrics_path.to_str().unwrap()]));
    assert!(output.status.success(), "{output:?}");
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&metrics_path).unwrap()).unwrap();
    assert_eq!(metrics["rmse_all"].as_f64().unwrap(), 0.0);
    assert!(metrics_path.with_extension("csv").exists());
}

#[test]
fn unknown_subcommand_exits_with_usage_error() {
    let output = run(bsms().arg("frobnicate"));
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn missing_mesh_file_exits_with_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let output = run(bsms()
        .arg("build")
        .args(["--mesh", dir.path().join("absent.json").to_str().unwrap()])
        .args(["--depth", "2"])
        .args(["--out", dir.path().join("h.json").to_str().unwrap()]));
    assert_eq!(output.status.code(), Some(3), "{output:?}");
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("level=error exit=3"), "{stderr}");
}

#[test]
fn malformed_mesh_json_exits_with_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("mesh.json");
    std::fs::write(&mesh, "{ not json").unwrap();
    let output = run(bsms()
        .arg("build")
        .args(["--mesh", mesh.to_str().unwrap()])
        .args(["--depth", "2"])
        .args(["--out", dir.path().join("h.json").to_str().unwrap()]));
    assert_eq!(output.status.code(), Some(3), "{output:?}");
}

#[test]
fn zero_depth_is_rejected_as_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = dir.path().join("mesh.json");
    write_path_mesh(&mesh, 8);
    let output = run(bsms()
        .arg("build")
        .args(["--mesh", mesh.to_str().unwrap()])
        .args(["--depth", "0"])
        .args(["--out", dir.path().join("h.json").to_str().unwrap()]));
    assert_eq!(output.status.code(), Some(2), "{output:?}");
}
