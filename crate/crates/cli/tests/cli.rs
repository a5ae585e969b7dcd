//! End-to-end tests of the `specflag` binary: exit codes and file outputs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_specflag");

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn specflag(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env("SPECFLAG_THREADS", "1").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const DIAGONAL: &str = r#"{"k": 3, "n": 1, "matrices": [[
    [[1, 0], [0, 0], [0, 0]],
    [[0, 0], [1, 0], [0, 0]],
    [[0, 0], [0, 0], [2, 0]]
]]}"#;

#[test]
fn check_accepts_commuting_pair() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t.json");
    let gen = specflag(&["generate", "--k", "5", "--n", "2", "--seed", "3", "--out", path(&input)]);
    assert_eq!(code(&gen), 0, "{}", String::from_utf8_lossy(&gen.stderr));
    let out = specflag(&["check", "--input", path(&input)]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["certified"], Value::Bool(true));
}

#[test]
fn check_rejects_non_commuting_pair() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(
        dir.path(),
        "t.json",
        r#"{"k": 2, "n": 2, "matrices": [
            [[[0, 0], [1, 0]], [[0, 0], [0, 0]]],
            [[[0, 0], [0, 0]], [[1, 0], [0, 0]]]
        ]}"#,
    );
    let out = specflag(&["check", "--input", path(&input)]);
    assert_eq!(code(&out), 2);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["certified"], Value::Bool(false));
    assert_eq!(report["pair"], serde_json::json!([0, 1]));
}

#[test]
fn malformed_input_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let broken = write(dir.path(), "broken.json", "{\"k\": 2,\n \"n\": 1, \"matrices\": [}");
    let out = specflag(&["check", "--input", path(&broken)]);
    assert_eq!(code(&out), 64);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let ragged = write(dir.path(), "ragged.json", r#"{"k": 2, "n": 1, "matrices": [[[[1, 0]], [[0, 0], [1, 0]]]]}"#);
    assert_eq!(code(&specflag(&["check", "--input", path(&ragged)])), 64);

    let missing = dir.path().join("absent.json");
    assert_eq!(code(&specflag(&["check", "--input", path(&missing)])), 64);
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&specflag(&["run", "--task", "nonsense"])), 64);
    assert_eq!(code(&specflag(&["generate", "--k", "3"])), 64);
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "t.json", DIAGONAL);
    let out = specflag(&["run", "--task", "measure", "--input", path(&input), "--out", path(dir.path()), "--depth", "0"]);
    assert_eq!(code(&out), 64);
    let threads = Command::new(BIN)
        .args(["check", "--input", path(&input)])
        .env("SPECFLAG_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&threads), 64);
}

#[test]
fn diagonal_measure_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "t.json", DIAGONAL);
    let out_dir = dir.path().join("out");
    let out = specflag(&["run", "--task", "measure", "--input", path(&input), "--out", path(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("measure.json")).unwrap()).unwrap();
    let atoms = doc["atoms"].as_array().unwrap();
    assert_eq!(atoms.len(), 2);
    let mut weights: Vec<(f64, String)> = atoms
        .iter()
        .map(|a| (a["point"][0][0].as_f64().unwrap(), a["weight_exact"].as_str().unwrap().to_owned()))
        .collect();
    weights.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert_eq!(weights, vec![(1.0, "2/3".to_owned()), (2.0, "1/3".to_owned())]);
}

#[test]
fn region_through_an_eigenvalue_is_boundary_ambiguous() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "t.json", DIAGONAL);
    let region = r#"{"rect": [{"disk": {"center": [0, 0], "radius": 1}}]}"#;
    let out = specflag(&["run", "--task", "project", "--input", path(&input), "--out", path(dir.path()), "--region", region]);
    assert_eq!(code(&out), 3);

    let clear = r#"{"rect": [{"disk": {"center": [0, 0], "radius": 1.5}}]}"#;
    let out = specflag(&["run", "--task", "project", "--input", path(&input), "--out", path(dir.path()), "--region", clear]);
    assert_eq!(code(&out), 0);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("project.json")).unwrap()).unwrap();
    let row = &doc["projections"][0];
    assert_eq!(row["trace"], Value::String("2/3".into()));
    assert_eq!(row["trace_equals_measure"], Value::Bool(true));
}

#[test]
fn spectrum_scan_writes_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "t.json", DIAGONAL);
    let out = specflag(&["run", "--task", "spectrum-scan", "--input", path(&input), "--out", path(dir.path()), "--grid", "41x41"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("spectrum-scan.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().contains("harte_margin"));
    assert_eq!(lines.count(), 1681);
    let svg = std::fs::read_to_string(dir.path().join("spectrum-scan.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn every_task_runs_on_a_generated_tuple() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t.json");
    assert_eq!(code(&specflag(&["generate", "--k", "3", "--n", "2", "--seed", "11", "--out", path(&input)])), 0);
    for task in ["triangularize", "measure", "project", "order", "calc"] {
        let out = specflag(&["run", "--task", task, "--input", path(&input), "--out", path(dir.path()), "--angular", "32", "--radial", "8"]);
        assert_eq!(code(&out), 0, "{task}: {}", String::from_utf8_lossy(&out.stderr));
        let text = std::fs::read_to_string(dir.path().join(format!("{task}.json"))).unwrap();
        let doc: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc["task"], Value::String(task.into()));
    }
}
