use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mcbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcbf")).args(args).output().expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn schema_errors(instance: &Value) -> Vec<String> {
    let text = fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../schemas/report.schema.json")).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).expect("schema compiles");
    let errors = match compiled.validate(instance) {
        Ok(()) => Vec::new(),
        Err(errs) => errs.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
    };
    errors
}

/// Trajectory with the wall-clock column removed.
fn trajectory_without_timing(dir: &Path) -> Vec<String> {
    let text = fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let timing = header.iter().position(|c| *c == "solve_time_us").unwrap();
    text.lines()
        .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != timing).map(|(_, f)| f).collect::<Vec<_>>().join(","))
        .collect()
}

#[test]
fn run_writes_valid_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcbf(&["run", "--duration", "2", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 401);
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(schema_errors(&report), Vec::<String>::new());
    let mut broken = report.clone();
    broken["steps"] = Value::String("many".into());
    assert!(!schema_errors(&broken).is_empty());
    assert_eq!(report["filter_enabled"], Value::Bool(true));
    for f in report["families"].as_array().unwrap() {
        assert!(f["violations"].as_array().unwrap().is_empty());
    }
}

#[test]
fn nominal_run_leaves_the_position_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcbf(&["run", "--no-safety-filter", "--out-dir", dir.path().to_str().unwrap()]);
    // violations without the filter are expected, not an error
    assert_eq!(out.status.code(), Some(0));
    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(schema_errors(&report), Vec::<String>::new());
    let position = report["families"].as_array().unwrap().iter().find(|f| f["family"] == "position").unwrap();
    assert!(position["min_h"].as_f64().unwrap() < 0.0);
    assert!(!position["violations"].as_array().unwrap().is_empty());
}

#[test]
fn compare_reports_both_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = mcbf(&["compare", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cmp = read_json(&dir.path().join("compare.json"));
    assert_eq!(schema_errors(&cmp["filtered"]), Vec::<String>::new());
    assert_eq!(schema_errors(&cmp["nominal"]), Vec::<String>::new());
    let deltas = cmp["deltas"].as_array().unwrap();
    assert_eq!(deltas.len(), 4);
    for d in deltas {
        assert!(d["filtered_min_h"].as_f64().unwrap() >= -1e-6, "{d}");
    }
    let position = deltas.iter().find(|d| d["family"] == "position").unwrap();
    assert!(position["nominal_min_h"].as_f64().unwrap() < 0.0);
    assert!(position["delta"].as_f64().unwrap() > 0.0);
}

#[test]
fn missing_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let out = mcbf(&["run", "--config", missing.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.toml"));
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "name = \"bad\"\n[simulation]\ndt = -1.0\n").unwrap();
    let out = mcbf(&["run", "--config", path.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn shipped_scenario_file_matches_the_built_in_one() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/scenario_paper.toml");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = |d: &Path| vec!["run".to_string(), "--duration".into(), "1".into(), "--out-dir".into(), d.to_str().unwrap().into()];
    let mut with_file = args(a.path());
    with_file.extend(["--config".to_string(), path.to_string()]);
    let refs: Vec<&str> = with_file.iter().map(String::as_str).collect();
    assert_eq!(mcbf(&refs).status.code(), Some(0));
    let refs: Vec<String> = args(b.path());
    assert_eq!(mcbf(&refs.iter().map(String::as_str).collect::<Vec<_>>()).status.code(), Some(0));
    assert_eq!(trajectory_without_timing(a.path()), trajectory_without_timing(b.path()));
}

#[test]
fn seeded_runs_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let out = mcbf(&["run", "--seed", "7", "--duration", "1", "--out-dir", d.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    assert_eq!(trajectory_without_timing(a.path()), trajectory_without_timing(b.path()));
}

#[test]
fn check_passes_and_catches_an_injected_fault() {
    let ok = mcbf(&["check", "--seed", "3"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(!stdout.contains("FAIL"));

    let bad = mcbf(&["check", "--seed", "3", "--inject-fault", "velocity-residual-sign"]);
    assert_ne!(bad.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL"));
}
