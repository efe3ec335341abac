use polymerlab_experiments::{
    list, names, replay, replay_file, run_config_str, ExpError, ExperimentReport, RunOptions, Verdict, CODE_VERSION,
};

const SMALL_GIBBS: &str = r#"{"experiment": "exp_gibbs_invariance", "potential": {"kind": "zero"}, "seeds": 40,
    "params": {"n": 2, "t_end": 0.5, "long_run": false, "negative_control": false}}"#;

fn opts(dir: &tempfile::TempDir) -> RunOptions {
    RunOptions { output_dir: Some(dir.path().to_path_buf()), dry_run: false }
}

#[test]
fn registry_lists_nine_experiments_in_fixed_order() {
    let n = names();
    assert_eq!(n.len(), 9);
    assert_eq!(n[0], "exp_monotonicity");
    assert_eq!(n[8], "exp_heat_flow_suite");
    assert_eq!(list().iter().map(|i| i.name).collect::<Vec<_>>(), n);
    assert!(list().iter().all(|i| i.params.is_object() && !i.summary.is_empty()));
}

#[test]
fn unknown_experiment_lists_valid_names() {
    let err = run_config_str(r#"{"experiment": "exp_nope"}"#, &RunOptions::default()).unwrap_err();
    assert!(matches!(err, ExpError::UnknownExperiment { .. }));
    let msg = err.to_string();
    assert!(names().iter().all(|n| msg.contains(n)), "{msg}");
}

#[test]
fn sigma_mismatch_needs_override() {
    let cfg = r#"{"experiment": "exp_heat_flow_suite", "sde": {"sigma": 3.0}}"#;
    let err = run_config_str(cfg, &RunOptions { dry_run: true, ..Default::default() }).unwrap_err();
    assert!(matches!(err, ExpError::SigmaMismatch { .. }), "{err}");
    let ok = r#"{"experiment": "exp_heat_flow_suite", "sde": {"sigma": 3.0}, "allow_sigma_mismatch": true}"#;
    assert!(run_config_str(ok, &RunOptions { dry_run: true, ..Default::default() }).is_ok());
}

#[test]
fn unknown_param_is_rejected_with_position() {
    let cfg = "{\n  \"experiment\": \"exp_galerkin_convergence\",\n  \"params\": {\"sizez\": [8, 16, 32]}\n}";
    let err = run_config_str(cfg, &RunOptions::default()).unwrap_err().to_string();
    assert!(err.contains("sizez") && err.contains("line 3"), "{err}");
}

#[test]
fn report_and_artifacts_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"experiment": "exp_heat_flow_suite", "plot_scripts": true}"#;
    let (report, path) = run_config_str(cfg, &opts(&dir)).unwrap();
    let path = path.unwrap();
    assert_eq!(report.verdict, Verdict::Pass);
    assert_eq!(report.code_version, CODE_VERSION);
    assert_eq!(report.config_digest.len(), 64);
    assert!(!report.rule.is_empty());
    assert!(report.artifacts.iter().any(|a| a.extension().is_some_and(|e| e == "csv")));
    assert!(report.artifacts.iter().any(|a| a.extension().is_some_and(|e| e == "py")));
    assert!(report.artifacts.iter().all(|a| a.exists()));
    let loaded = ExperimentReport::load(&path).unwrap();
    assert!(loaded.differences(&report).is_empty());
}

#[test]
fn runs_are_deterministic_and_replay_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let (a, path) = run_config_str(SMALL_GIBBS, &opts(&dir)).unwrap();
    let (b, _) = run_config_str(SMALL_GIBBS, &RunOptions { dry_run: true, ..Default::default() }).unwrap();
    assert!(a.differences(&b).is_empty());
    assert_eq!(a.config_digest, b.config_digest);
    let out = replay_file(&path.unwrap(), 0, &RunOptions::default()).unwrap();
    assert!(out.reproduced(), "{:?}", out.differences);
    assert!(!out.extended);
}

#[test]
fn worker_count_does_not_change_results() {
    let cfg = r#"{"experiment": "exp_monotonicity", "seeds": 6, "params": {"n": 16, "t_end": 1.0, "negative_control": false}}"#;
    let dry = RunOptions { dry_run: true, ..Default::default() };
    let (a, _) = run_config_str(cfg, &dry).unwrap();
    std::env::set_var("POLYMERLAB_WORKERS", "3");
    let (b, _) = run_config_str(cfg, &dry).unwrap();
    std::env::remove_var("POLYMERLAB_WORKERS");
    assert!(a.differences(&b).is_empty());
}

#[test]
fn replay_refuses_other_code_versions() {
    let (mut r, _) = run_config_str(SMALL_GIBBS, &RunOptions { dry_run: true, ..Default::default() }).unwrap();
    r.code_version = "polymerlab 0.0.0".into();
    assert!(matches!(replay(&r, 0, &RunOptions::default()), Err(ExpError::VersionMismatch { .. })));
}

#[test]
fn tampered_metric_is_detected() {
    let (mut r, _) = run_config_str(SMALL_GIBBS, &RunOptions { dry_run: true, ..Default::default() }).unwrap();
    r.metrics.get_mut("max_z").unwrap().value += 1e-15;
    let out = replay(&r, 0, &RunOptions::default()).unwrap();
    assert_eq!(out.differences, vec!["metric max_z".to_string()]);
}

#[test]
fn seeds_extend_merges_and_shrinks_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let (r, _) = run_config_str(SMALL_GIBBS, &opts(&dir)).unwrap();
    let out = replay(&r, 120, &opts(&dir)).unwrap();
    assert!(out.extended);
    assert_eq!(out.report.seeds.len(), 160);
    assert_eq!(&out.report.seeds[..40], &r.seeds[..]);
    assert!(out.path.as_ref().is_some_and(|p| p.exists()));
    let width = |r: &ExperimentReport| {
        let (lo, hi) = r.metrics["time_t_mean_x1"].ci.unwrap();
        hi - lo
    };
    assert!(width(&out.report) < 0.7 * width(&r), "{} vs {}", width(&out.report), width(&r));
}
