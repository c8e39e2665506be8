//! End-to-end checks of the command layer.

use std::fs;
use std::path::Path;
use std::process::Command;

use sfl_lab::engine::{generate_dataset, run_training, Recording};
use sfl_lab::io::{cmd_estimate, cmd_optimize, cmd_simulate, parse_config, read_constants, ScenarioConfig};
use sfl_lab::optimizer::{bcd_optimize, DecisionVars};

fn config(text: &str, out: &Path) -> ScenarioConfig {
    let mut cfg = parse_config(text).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg
}

fn trace_rows(path: &Path) -> Vec<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records().map(|r| r.unwrap().iter().map(str::to_owned).collect()).collect()
}

#[test]
fn no_sensing_gives_a_flat_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(r#"{"decision": {"q_s": 0.0}, "train": {"rounds": 15}}"#, dir.path());
    cmd_simulate(&cfg, false).unwrap();
    let rows = trace_rows(&dir.path().join("trace.csv"));
    assert_eq!(rows.len(), 16);
    for w in rows.windows(2) {
        let (prev, r) = (&w[0], &w[1]);
        assert_eq!(r[2], rows[0][2], "loss changed");
        assert_eq!(r[3], rows[0][3], "accuracy changed");
        assert_eq!(r[4], "0");
        // Only the parameter upload at aggregation rounds costs time.
        if r[5] == "0" {
            assert_eq!(r[1], prev[1]);
        }
    }
}

#[test]
fn homogeneous_data_has_no_heterogeneity() {
    let cfg = config(r#"{"data": {"shared_pool": true}}"#, Path::new("unused"));
    let sc = cfg.scenario().unwrap();
    let data = generate_dataset(&cfg.data, sc.n_uavs(), cfg.seed).unwrap();
    let dv = DecisionVars { period: 1, split: 2, batch: 16, q_s: 1.0 };
    let rec = Recording { probe: true, ..Recording::default() };
    let trace = run_training(&sc, &data, &cfg.train, &dv, 20, cfg.seed, rec).unwrap();
    let worst = trace.probe.unwrap().rounds.iter().flat_map(|r| r.heterogeneity.clone()).fold(0.0, f64::max);
    assert!(worst < 1e-8, "heterogeneity {worst}");
}

#[test]
fn estimated_constants_feed_the_optimizer() {
    let dir = tempfile::tempdir().unwrap();
    let est = config(
        r#"{"data": {"shared_pool": true}, "estimate": {"rounds": 20}, "constants": {"eta": 1e-7}}"#,
        &dir.path().join("est"),
    );
    cmd_estimate(&est).unwrap();
    let file = dir.path().join("est").join("constants.txt");
    let constants = read_constants(&file).unwrap();
    assert_eq!(constants.eta, 1e-7);

    let text = format!(r#"{{"constants": {{"file": {:?}}}}}"#, file.to_str().unwrap());
    let opt = config(&text, &dir.path().join("opt"));
    let files = cmd_optimize(&opt, false).unwrap();
    assert!(files.iter().any(|f| f.ends_with("report.csv")));
    let summary = fs::read_to_string(dir.path().join("opt").join("summary.txt")).unwrap();
    assert!(summary.contains("Xi"), "{summary}");
}

#[test]
fn narrow_sensing_range_is_reported_as_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, r#"{"sensing": {"theta0_deg": 89.0}, "constants": {"eta": 1e-3}}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sfl-lab"))
        .args(["optimize", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error: "), "{stderr}");
    assert!(stderr.to_lowercase().contains("infeasible"), "{stderr}");
    assert!(!stderr.contains("panicked"), "{stderr}");
}

#[test]
fn invalid_config_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    fs::write(&path, r#"{"decision": {"I": 0}}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sfl-lab")).args(["simulate", "--config"]).arg(&path).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("decision.I"));
}

#[test]
fn optimized_decision_reaches_target_sooner() {
    let cfg = parse_config("{}").unwrap();
    let sc = cfg.scenario().unwrap();
    let data = generate_dataset(&cfg.data, sc.n_uavs(), cfg.seed).unwrap();
    let optimized = bcd_optimize(&sc, &cfg.decision, &cfg.bcd).unwrap().best().dv;
    let run = |dv: &DecisionVars| run_training(&sc, &data, &cfg.train, dv, cfg.train.rounds, cfg.seed, Recording::default()).unwrap();
    let baseline = run(&cfg.decision);
    let target = 0.9 * baseline.best_accuracy();
    let t_base = baseline.time_to_target(target).unwrap();
    let t_opt = run(&optimized).time_to_target(target);
    println!("baseline {t_base:.1} s, optimized {t_opt:?} s at {optimized:?}");
    assert!(t_opt.is_some_and(|t| t < t_base));
}
