use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn polymerlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polymerlab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Runs `config` and returns the report path from the verdict line.
fn run_ok(dir: &Path, config: &Path) -> PathBuf {
    let out = polymerlab(&["run", config.to_str().unwrap(), "--output-dir", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let line = stdout(&out);
    assert_eq!(line.lines().count(), 1, "{line}");
    PathBuf::from(line.split_whitespace().last().unwrap())
}

#[test]
fn heat_suite_smoke_run_exits_zero_with_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "heat.json", r#"{"experiment": "exp_heat_flow_suite"}"#);
    let report = run_ok(dir.path(), &cfg);
    assert!(report.exists());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["verdict"], "pass");
    assert!(v["config_digest"].as_str().is_some_and(|d| d.len() == 64));
}

#[test]
fn sigma_mismatch_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", r#"{"experiment": "exp_heat_flow_suite", "sde": {"sigma": 1.0}}"#);
    let out = polymerlab(&["run", cfg.to_str().unwrap(), "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("2/beta"), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());
}

#[test]
fn unknown_experiment_exits_three_listing_names() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "x.json", r#"{"experiment": "exp_unknown"}"#);
    let out = polymerlab(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(err.contains("exp_monotonicity") && err.contains("exp_heat_flow_suite"), "{err}");
}

#[test]
fn schema_violation_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "x.json", "{\n \"experiment\": \"exp_heat_flow_suite\",\n \"sde\": {\"dtt\": 0.1}\n}");
    let out = polymerlab(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn missing_config_and_bad_usage_exit_three() {
    assert_eq!(polymerlab(&["run", "/nonexistent/config.json"]).status.code(), Some(3));
    assert_eq!(polymerlab(&["frobnicate"]).status.code(), Some(3));
    assert_eq!(polymerlab(&["--help"]).status.code(), Some(0));
}

#[test]
fn list_is_stable_and_has_json_form() {
    let a = polymerlab(&["list"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&polymerlab(&["list"])));
    let j = polymerlab(&["list", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&j.stdout).unwrap();
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
    assert_eq!(names.len(), 9);
    assert!(names.iter().all(|n| stdout(&a).contains(n)));
}

#[test]
fn replay_reproduces_and_refuses_other_versions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mono.json", r#"{"experiment": "exp_monotonicity", "seeds": 4, "params": {"n": 8, "t_end": 1.0}}"#);
    let report = run_ok(dir.path(), &cfg);
    let out = polymerlab(&["replay", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("REPRODUCED exp_monotonicity"));

    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    v["code_version"] = "polymerlab 0.0.0".into();
    let old = dir.path().join("old.json");
    std::fs::write(&old, v.to_string()).unwrap();
    let out = polymerlab(&["replay", old.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("refusing to replay"));

    v["code_version"] = format!("polymerlab {}", env!("CARGO_PKG_VERSION")).into();
    v["metrics"]["min_gap"]["value"] = 12345.0.into();
    let tampered = dir.path().join("tampered.json");
    std::fs::write(&tampered, v.to_string()).unwrap();
    let out = polymerlab(&["replay", tampered.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).starts_with("MISMATCH"));
}

#[test]
fn replay_with_seeds_extend_writes_merged_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "mono.json", r#"{"experiment": "exp_monotonicity", "seeds": 3, "params": {"n": 8, "t_end": 1.0}}"#);
    let report = run_ok(dir.path(), &cfg);
    let out = polymerlab(&["replay", report.to_str().unwrap(), "--seeds-extend", "2", "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let merged = PathBuf::from(stdout(&out).split_whitespace().last().unwrap());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(merged).unwrap()).unwrap();
    assert_eq!(v["seeds"], serde_json::json!([0, 1, 2, 3, 4]));
}
