use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gw")).args(args).output().expect("run gw")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&out.stdout));
    })
}

/// Two-point space with distance 1 and weights 1/4, 3/4.
fn write_example(dir: &Path) -> String {
    let path = dir.join("y.csv");
    std::fs::write(&path, "0,1\n1,0\n0.25,0.75\n").unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn gamma_matches_example() {
    let dir = tempfile::tempdir().unwrap();
    let y = write_example(dir.path());
    let out = gw(&["gamma", "delta:2", &y]);
    assert!(out.status.success());
    let doc = stdout_json(&out);
    assert_eq!(doc["gamma"], serde_json::json!([[0.0, 1.0, 1.0, 0.0], [1.0, 0.0, 0.0, 1.0], [1.0, 0.0, 0.0, 1.0], [0.0, 1.0, 1.0, 0.0]]));
    assert_eq!(doc["rhs"], serde_json::json!([0.5, 0.5, 0.25, 0.75]));
    assert_eq!(doc["constraint_matrix"][2], serde_json::json!([1.0, 0.0, 1.0, 0.0]));
}

#[test]
fn gamma_csv_output() {
    let dir = tempfile::tempdir().unwrap();
    let y = write_example(dir.path());
    let csv = dir.path().join("g.csv");
    let out = gw(&["gamma", "delta:2", &y, "--out", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().next(), Some("0,1,1,0"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn spectrum_reports_one_negative_eigenvalue() {
    let dir = tempfile::tempdir().unwrap();
    let y = write_example(dir.path());
    let doc = stdout_json(&gw(&["spectrum", "delta:2", &y]));
    assert_eq!(doc["negative_count"], 1);
    assert_eq!(doc["psd"], false);
    assert_eq!(doc["minor_det"], -1.0);
    assert!((doc["eigenvalues"][0].as_f64().unwrap() + 2.0).abs() < 1e-10);
}

#[test]
fn solve_with_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let y = write_example(dir.path());
    let trace = dir.path().join("trace.csv");
    let out = gw(&["solve", "delta:2", &y, "--oracle", "--trace", trace.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert!((doc["value"].as_f64().unwrap() - 0.375).abs() < 1e-9);
    assert!((doc["distance"].as_f64().unwrap() - 0.1875).abs() < 1e-9);
    assert_eq!(doc["oracle"]["value"], 0.375);
    assert_eq!(doc["oracle"]["method"], "closed-form-1dof");
    let trace = std::fs::read_to_string(trace).unwrap();
    assert_eq!(trace.lines().next(), Some("iteration,value,gap"));
}

#[test]
fn fw_from_independence_stays_put() {
    let dir = tempfile::tempdir().unwrap();
    let y = write_example(dir.path());
    let doc = stdout_json(&gw(&["solve", "delta:2", &y, "--method", "fw"]));
    assert_eq!(doc["value"], 0.5);
    assert_eq!(doc["iterations"], 0);
}

#[test]
fn entropic_solve_is_feasible() {
    let doc = stdout_json(&gw(&["solve", "delta:3", "delta:3", "--method", "entropic", "--epsilon", "0.05"]));
    let mu: Vec<f64> = doc["coupling"]["mu"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(mu.len(), 9);
    assert!((mu.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

#[test]
fn oracle_refuses_large_instances() {
    let out = gw(&["solve", "delta:3", "delta:4", "--oracle"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn input_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "0,1\n2,0\n").unwrap();
    assert_eq!(gw(&["spectrum", "delta:2", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(gw(&["spectrum", "delta:2", "/nonexistent/file.csv"]).status.code(), Some(2));
    assert_eq!(gw(&["sweep-delta", "--n-min", "5", "--n-max", "3"]).status.code(), Some(2));
    assert_eq!(gw(&["spectrum", "delta:1", "delta:3"]).status.code(), Some(2));
}

#[test]
fn sweep_delta_counts() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let out = gw(&["sweep-delta", "--n-max", "12", "--out", csv.to_str().unwrap()]);
    assert!(out.status.success());
    let summary = stdout_json(&out);
    assert_eq!(summary["rows"], 11);
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,matrix_dim,negative_count,min_eigenvalue"));
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let n: usize = f[0].parse().unwrap();
        assert_eq!(f[2].parse::<usize>().unwrap(), n - 1);
    }
}

#[test]
fn sweep_delta_single_row_on_stdout() {
    let out = gw(&["sweep-delta", "--n-min", "2", "--n-max", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("2,4,1,"));
}

#[test]
fn sweep_curves_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for (name, turns) in [("a.csv", 3.0f64), ("b.csv", 5.0)] {
        let text: String = (0..80)
            .map(|k| {
                let t = turns * k as f64 / 79.0;
                format!("{},{},{}\n", t.cos(), t.sin(), 0.1 * t)
            })
            .collect();
        let path = dir.path().join(name);
        std::fs::write(&path, text).unwrap();
        paths.push(path.to_str().unwrap().to_string());
    }
    let csv = dir.path().join("rows.csv");
    let out = gw(&[
        "sweep-curves", &paths[0], &paths[1], "--m", "8", "--n-min", "4", "--n-max", "10", "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = stdout_json(&out);
    assert_eq!(summary["rows"], 7);
    assert!(summary["min_negative_count"].as_u64().unwrap() >= 1);
    assert!(summary["subsampling"].as_str().unwrap().contains("evenly"));
}

#[test]
fn sweep_curves_needs_inputs() {
    assert_eq!(gw(&["sweep-curves"]).status.code(), Some(2));
}

#[test]
fn qap_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("pts.csv");
    std::fs::write(&pts, "0,0\n1,0\n0,2\n3,1\n").unwrap();
    let out = gw(&["qap-check", pts.to_str().unwrap(), pts.to_str().unwrap(), "--format", "points", "--trials", "200"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = stdout_json(&out);
    assert_eq!(doc["trials"], 200);
    assert!(doc["max_rel_error"].as_f64().unwrap() <= 1e-12);
}
