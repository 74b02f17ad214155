use std::fs;
use std::process::Command;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gmm-weights"))
}

fn json(out: &std::process::Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn avocado_writes_report_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let trials = dir.path().join("trials.csv");
    let grids = dir.path().join("grids");
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "[avocado]\ngrid_nodes = 61\n").unwrap();
    let out = bin()
        .args(["avocado", "--updater", "ekf", "--scheme", "improved", "--components", "10"])
        .args(["--monte-carlo", "3", "--seed", "4", "--config"])
        .arg(&cfg)
        .arg("--output")
        .arg(&report)
        .arg("--trial-csv")
        .arg(&trials)
        .arg("--grid-dump")
        .arg(&grids)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["scenario"], "avocado");
    assert_eq!(v["records"][0]["label"], "GMF(EKF*)");
    assert_eq!(v["records"][0]["trials"], 3);
    let saved: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(saved, v);
    let rows = fs::read_to_string(&trials).unwrap();
    assert!(rows.starts_with("trial,epoch,rmse,snees"));
    assert_eq!(rows.lines().count(), 4);
    let dumped: Vec<_> = fs::read_dir(&grids).unwrap().collect();
    assert!(dumped.len() >= 2);
}

#[test]
fn linear_check_passes() {
    let out = bin().args(["linear-check", "--cases", "40", "--seed", "9"]).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["linear_check"]["passed"], true);
    assert_eq!(v["linear_check"]["cases"], 40);
}

#[test]
fn sweep_reports_each_count_and_method() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "[avocado]\ngrid_nodes = 41\n").unwrap();
    let out = bin()
        .args(["sweep", "--scenario", "avocado", "--updater", "ckf", "--components", "5,2"])
        .args(["--monte-carlo", "2", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = json(&out)["records"].as_array().unwrap().clone();
    let got: Vec<(u64, String)> = rows
        .iter()
        .map(|r| (r["components"].as_u64().unwrap(), r["label"].as_str().unwrap().to_string()))
        .collect();
    assert_eq!(
        got,
        vec![
            (2, "GMF(CKF)".to_string()),
            (2, "GMF(CKF*)".to_string()),
            (5, "GMF(CKF)".to_string()),
            (5, "GMF(CKF*)".to_string()),
        ]
    );
}

#[test]
fn flagged_trials_over_the_limit_exit_with_two() {
    // An impossibly tight divergence gate flags every trial.
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(
        &cfg,
        "[nrho]\norbits = 1\ntracklets_per_orbit = 1\ntracklet_hours = 0.2\ndivergence_gate = 1e-12\n",
    )
    .unwrap();
    let out = bin()
        .args(["nrho", "--components", "10", "--monte-carlo", "1", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["records"][0]["flagged_trials"], 1);
}

#[test]
fn bad_input_is_rejected() {
    let out = bin().args(["avocado", "--components", "0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.toml");
    fs::write(&cfg, "componets = 3\n").unwrap();
    let out = bin().args(["avocado", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["avocado", "--updater", "pf"]).output().unwrap();
    assert!(!out.status.success());
}
