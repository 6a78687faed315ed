//! The binary end to end: exit codes, versioned CSVs, snapshots, seeds.

use std::path::{Path, PathBuf};
use std::process::Command;

use movingdom::cli::Table;
use movingdom::grid::read_snapshot;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn movingdom(args: &[&str], config: &Path, out: &Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_movingdom"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("MOVINGDOM_LOG", "error")
        .output()
        .expect("binary runs")
        .status
        .code()
        .expect("exit code")
}

fn read_table(path: &Path) -> Table {
    Table::read(std::fs::File::open(path).unwrap()).unwrap()
}

#[test]
fn check_exit_codes() {
    let out = tempfile::tempdir().unwrap();
    for (name, code) in [
        ("moving_ball.toml", 0),
        ("identity_box.toml", 0),
        ("sine.toml", 0),
        ("rotation.toml", 1),
        ("cubic.toml", 1),
        ("quintic.toml", 1),
    ] {
        assert_eq!(movingdom(&["check"], &fixture(name), out.path()), code, "{name}");
    }
    let report = read_table(&out.path().join("hypothesis_report.csv"));
    assert_eq!(report.name, "hypothesis_report");
    assert_eq!(report.version, 1);
}

#[test]
fn rotation_reports_separability_witness() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(movingdom(&["check"], &fixture("rotation.toml"), out.path()), 1);
    let report = read_table(&out.path().join("hypothesis_report.csv"));
    let h1 = report.rows.iter().find(|r| r[0] == "h1").unwrap();
    assert_eq!(h1[1], "fail");
    assert!(h1[3].contains("witness t="), "{h1:?}");
}

#[test]
fn hypothesis_failure_blocks_solve() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(movingdom(&["solve"], &fixture("rotation.toml"), out.path()), 1);
    assert!(!out.path().join("metrics.csv").exists());
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.toml");
    assert_eq!(movingdom(&["check"], &missing, dir.path()), 2);
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(fixture("sine.toml")).unwrap();
    std::fs::write(&bad, text.replace("sin(u)", "sin(u))")).unwrap();
    assert_eq!(movingdom(&["check"], &bad, dir.path()), 2);
    std::fs::write(&bad, text.replace("cells = 16", "cells = 2")).unwrap();
    assert_eq!(movingdom(&["solve"], &bad, dir.path()), 2);
    assert_eq!(movingdom(&["mms"], &fixture("sine.toml"), dir.path()), 2);
}

#[test]
fn large_step_is_a_solver_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cubic_ok.toml");
    let text = std::fs::read_to_string(fixture("identity_box.toml")).unwrap();
    std::fs::write(&cfg, text.replace("sin(u)", "10*sin(u)").replace("dt = 0.01", "dt = 0.5")).unwrap();
    assert_eq!(movingdom(&["solve"], &cfg, dir.path()), 3);
}

#[test]
fn step_budget_exits_four_with_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("capped.toml");
    let text = std::fs::read_to_string(fixture("moving_ball.toml")).unwrap();
    std::fs::write(&cfg, text.replace("dt = 0.01", "dt = 0.01\nmax_steps = 3000")).unwrap();
    assert_eq!(movingdom(&["pullback"], &cfg, dir.path()), 4);
    let report = read_table(&dir.path().join("pullback_report.csv"));
    assert_eq!(report.rows[0], ["status", "0", "complete", "false"]);
}

#[test]
fn solve_writes_metrics_and_round_trippable_snapshots() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(movingdom(&["solve"], &fixture("identity_box.toml"), out.path()), 0);
    let metrics = read_table(&out.path().join("metrics.csv"));
    assert_eq!(
        metrics.columns,
        ["step", "t", "L2", "H1", "mass", "boundary_residual", "cg_iters"]
    );
    assert_eq!(metrics.rows.len(), 101);
    let snaps = out.path().join("snapshots");
    let mut files: Vec<_> = std::fs::read_dir(&snaps).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 5);
    let text = std::fs::read(&files[2]).unwrap();
    let snap = read_snapshot(text.as_slice()).unwrap();
    assert_eq!(snap.time, 0.5);
    let mut again = Vec::new();
    movingdom::grid::write_snapshot(&mut again, snap.time, &snap.field).unwrap();
    assert_eq!(again, text);
    let moving = read_table(&out.path().join("moving").join("moving_00000.csv"));
    assert_eq!(moving.columns, ["x1", "x2", "u"]);
    assert_eq!(moving.rows.len(), 256);
}

#[test]
fn seed_controls_random_initial_data() {
    let run = |seed: &str| {
        let out = tempfile::tempdir().unwrap();
        let status = Command::new(env!("CARGO_BIN_EXE_movingdom"))
            .args(["solve", "--seed", seed, "--jobs", "2", "--config"])
            .arg(fixture("moving_ball.toml"))
            .arg("--out")
            .arg(out.path())
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(out.path().join("metrics.csv")).unwrap()
    };
    assert_eq!(run("3"), run("3"));
    assert_ne!(run("3"), run("4"));
}

#[test]
fn transform_lists_closed_forms() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(movingdom(&["transform"], &fixture("dilation.toml"), out.path()), 0);
    let t = read_table(&out.path().join("coefficients.csv"));
    let get = |name: &str| t.rows.iter().find(|r| r[0] == name).unwrap()[1].clone();
    assert_eq!(get("a_11"), "0.25");
    assert_eq!(get("a_12"), "0");
    assert_eq!(get("b_1"), "0");
    assert_eq!(get("K_1+"), "2");
    let sampled = read_table(&out.path().join("coefficients_sampled.csv"));
    assert_eq!(sampled.columns[0], "t");
    assert!(!sampled.rows.is_empty());
}

#[test]
fn mms_writes_order_table() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(movingdom(&["mms"], &fixture("mms_identity.toml"), out.path()), 0);
    let t = read_table(&out.path().join("mms_orders.csv"));
    assert_eq!(t.columns, ["kind", "scheme", "resolution", "error", "order"]);
    assert_eq!(t.rows.len(), 12);
}
