use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "nodes = 8\nsamples = 25\nclusters = 2\nradius = 0.8\nreplications = 2\nlambda_scaled_grid = 0.01, 10, 4\n";

fn run(dir: &Path, config: &str, extra: &[&str]) -> Output {
    let path = dir.join("exp.cfg");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_treefuse"))
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("results"))
        .args(extra)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

#[test]
fn writes_reports_and_honours_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), SMALL, &["--seed", "99", "--arms", "mst_l1", "--workers", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("results/replications.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("replication,arm,seed,lambda,mse"));
    assert_eq!(lines.len(), 3);
    assert!(lines[1..].iter().all(|l| l.split(',').nth(1) == Some("mst_l1")));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("results/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["seed"], 99);
    assert!(String::from_utf8_lossy(&out.stdout).contains("2/2 replications completed"));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(dir.path(), "nodes = many\n", &[]).status.code(), Some(2));
    assert_eq!(run(dir.path(), "replications = 0\n", &[]).status.code(), Some(2));
    assert_eq!(run(dir.path(), SMALL, &["--arms", "ring_l2"]).status.code(), Some(2));
    assert_eq!(run(dir.path(), SMALL, &["--ridge", "-1"]).status.code(), Some(2));
    let missing = Command::new(env!("CARGO_BIN_EXE_treefuse")).args(["--config", "/nonexistent/x.cfg"]).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn total_attrition_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &format!("{SMALL}radius = 0.01\n"), &[]);
    assert_eq!(out.status.code(), Some(3));
    let summary = fs::read_to_string(dir.path().join("results/summary.json")).unwrap();
    assert!(summary.contains("\"attrition\""));
}
