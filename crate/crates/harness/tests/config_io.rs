use std::fs;

mod common;

use fea_harness::{run_experiment, validate_config, ExperimentConfig, RunReport};

const MINIMAL_ESTIMATE: &str =
    r#"{"experiment": "estimate", "plant": {"kind": "integrator", "dt": 0.1}}"#;

#[test]
fn documented_malformed_configs_are_rejected() {
    let cases = common::malformed_cases();
    assert_eq!(cases.len(), 10);
    for (file, raw, needles) in cases {
        if let Err(e) = common::check_malformed(&raw, &needles) {
            panic!("{file}: {e}");
        }
    }
}

#[test]
fn planner_horizon_over_budget_is_rejected() {
    let raw = r#"{"experiment": "plan", "seeds": [0], "planner": {"env": "tmaze", "horizon": 6, "episodes": 1}}"#;
    common::check_malformed(raw, &["planner.horizon".into(), "budget".into()]).unwrap();
}

#[test]
fn minimal_estimate_config_matches_golden_defaults() {
    let cfg = validate_config(MINIMAL_ESTIMATE).unwrap();
    let golden = common::repo_path("tests/golden/minimal_estimate.json");
    let expected: ExperimentConfig =
        serde_json::from_str(&fs::read_to_string(golden).unwrap()).unwrap();
    assert_eq!(cfg, expected);
    assert_eq!(cfg.horizon, 1000);
    assert_eq!(cfg.estimator.order, 0);
    assert_eq!(cfg.estimator.kappa_x, 1.0);
    assert_eq!(cfg.estimator.steps_per_observation, 1);
    let setup = cfg.setup().unwrap();
    assert_eq!(setup.seeds, vec![0]);
}

#[test]
fn shipped_configs_validate() {
    let dir = common::repo_path("../../configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let raw = fs::read_to_string(&path).unwrap();
        validate_config(&raw).unwrap_or_else(|e| panic!("{}: {e:?}", path.display()));
        n += 1;
    }
    assert!(n >= 6);
}

#[test]
fn zero_horizon_gives_empty_trace_and_valid_report() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = validate_config(MINIMAL_ESTIMATE).unwrap();
    cfg.horizon = 0;
    let report = run_experiment(&cfg, dir.path()).unwrap();
    assert_eq!(report.seeds[0].steps, 0);
    assert!(report.seeds[0].metrics.is_empty());
    let csv = fs::read_to_string(dir.path().join("trace_0.csv")).unwrap();
    assert_eq!(csv, "t,y.0,mu.0,x.0,F\n");
    let back: RunReport =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn same_config_and_seed_give_identical_bytes() {
    let raw = common::read_config("compare_kf.json");
    let mut cfg = validate_config(&raw).unwrap();
    cfg.horizon = 300;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = run_experiment(&cfg, a.path()).unwrap();
    let rb = run_experiment(&cfg, b.path()).unwrap();
    for s in &cfg.seeds {
        let name = format!("trace_{s}.csv");
        let x = fs::read(a.path().join(&name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, fs::read(b.path().join(&name)).unwrap());
    }
    assert_eq!(ra.seeds, rb.seeds);
}

#[test]
fn report_round_trips_and_metrics_are_finite() {
    let dir = tempfile::tempdir().unwrap();
    let raw = common::read_config("compare_kf.json");
    let report = run_experiment(&validate_config(&raw).unwrap(), dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("report.json")).unwrap();
    let back: RunReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, report);
    for s in &report.seeds {
        for key in ["mse_aif", "mse_kf", "mse_ratio"] {
            assert!(s.metrics[key].is_finite());
        }
    }
}

#[test]
fn csv_header_declares_every_column() {
    let dir = tempfile::tempdir().unwrap();
    let raw = common::read_config("control.json");
    let mut cfg = validate_config(&raw).unwrap();
    cfg.horizon = 50;
    run_experiment(&cfg, dir.path()).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("trace_0.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!(
        &header.iter().collect::<Vec<_>>(),
        &["t", "y.0", "mu.0", "u.0", "F", "err.0"]
    );
    for rec in rdr.records() {
        assert_eq!(rec.unwrap().len(), header.len());
    }
}
