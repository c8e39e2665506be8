//! `optimize`, `simulate`, `sweep` and `estimate-constants`.
//!
//! Every command writes into `output_dir` and finishes with a
//! `manifest.json` naming the schema version and the files it produced.
//! Outputs depend only on the configuration and seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{write_constants, ScenarioConfig, SweepVar};
use super::svg::{line_chart, series_from_csv};
use crate::convergence::{estimate_constants, n_min};
use crate::delay::expected_cycle_delay;
use crate::engine::{generate_dataset, run_training, Recording, SynthDataset, TrainTrace};
use crate::error::{Error, Result};
use crate::geometry::logistic_link_prob;
use crate::optimizer::{
    bcd_optimize, grid_search, objective_xi, BcdOptions, Block, DecisionVars, GridSpec, Scenario,
};

/// Bumped whenever a CSV column is added, removed or reinterpreted.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    command: &'a str,
    seed: u64,
    files: Vec<String>,
}

fn prepare_dir(cfg: &ScenarioConfig) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output_dir)?;
    Ok(cfg.output_dir.clone())
}

fn finish(dir: &Path, command: &str, seed: u64, mut files: Vec<PathBuf>) -> Result<Vec<PathBuf>> {
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        command,
        seed,
        files: files
            .iter()
            .map(|f| f.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    files.push(path);
    Ok(files)
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// A chart drawn from two CSV columns.
struct Chart<'a> {
    title: &'a str,
    x: (&'a str, &'a str),
    y: (&'a str, &'a str),
    group: Option<&'a str>,
}

impl Chart<'_> {
    /// `x` and `y` are `(column, axis label)` pairs.
    fn write(&self, csv: &Path, path: PathBuf) -> Result<PathBuf> {
        let series = series_from_csv(csv, self.x.0, self.y.0, self.group)?;
        fs::write(&path, line_chart(self.title, self.x.1, self.y.1, &series))?;
        Ok(path)
    }
}

fn n_min_of(sc: &Scenario, dv: &DecisionVars) -> Option<f64> {
    n_min(&sc.constants, sc.n_uavs(), dv.q_s, dv.period as f64, dv.split, dv.batch as f64, &sc.bound).ok()
}

/// Runs block coordinate descent and writes `report.csv` (one row per
/// accepted step) and `summary.txt`.
pub fn cmd_optimize(cfg: &ScenarioConfig, brute_force: bool) -> Result<Vec<PathBuf>> {
    let sc = cfg.scenario()?;
    let report = bcd_optimize(&sc, &cfg.decision, &cfg.bcd)?;
    let dir = prepare_dir(cfg)?;
    let grid = if brute_force { grid_search(&sc, &GridSpec::default())? } else { None };

    let report_path = dir.join("report.csv");
    let mut w = csv::Writer::from_path(&report_path)?;
    let mut header = vec!["iteration", "I", "L_c", "b", "q_s", "Xi_seconds", "N_min"];
    if brute_force {
        header.extend(["grid_I", "grid_L_c", "grid_b", "grid_q_s", "grid_Xi_seconds", "relative_gap"]);
    }
    w.write_record(&header)?;
    for step in &report.history {
        let dv = step.dv;
        let mut row = vec![
            step.iteration.to_string(),
            dv.period.to_string(),
            dv.split.to_string(),
            dv.batch.to_string(),
            num(dv.q_s),
            num(step.xi),
            opt(n_min_of(&sc, &dv)),
        ];
        if brute_force {
            match &grid {
                Some((g, gx)) => row.extend([
                    g.period.to_string(),
                    g.split.to_string(),
                    g.batch.to_string(),
                    num(g.q_s),
                    num(*gx),
                    num((step.xi - gx) / gx),
                ]),
                None => row.extend(std::iter::repeat_n(String::new(), 6)),
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let best = report.best();
    let delays = sc.delays(&best.dv)?;
    let (per_uav, total) = expected_cycle_delay(best.dv.period, sc.compute.epochs, best.dv.q_s, &delays);
    let mut s = String::new();
    let _ = writeln!(s, "termination: {:?} after {} iterations", report.termination, report.iterations);
    let _ = writeln!(
        s,
        "decision: I={} L_c={} b={} q_s={}",
        best.dv.period, best.dv.split, best.dv.batch, best.dv.q_s
    );
    let _ = writeln!(s, "Xi_seconds: {}", best.xi);
    let _ = writeln!(s, "N_min: {}", opt(n_min_of(&sc, &best.dv)));
    let _ = writeln!(s, "expected_cycle_delay_s: {total}");
    if let Some((g, gx)) = &grid {
        let _ = writeln!(
            s,
            "grid optimum: I={} L_c={} b={} q_s={} Xi_seconds={} relative_gap={}",
            g.period,
            g.split,
            g.batch,
            g.q_s,
            gx,
            (best.xi - gx) / gx
        );
    }
    let _ = writeln!(s, "positions:");
    for (m, (p, d)) in report.positions.iter().zip(&per_uav).enumerate() {
        let _ = writeln!(
            s,
            "  uav {m}: x={} y={} z={} cycle_delay_s={d}{}",
            p.position.x,
            p.position.y,
            p.position.z,
            if p.degenerate { " (server above target, direction arbitrary)" } else { "" }
        );
    }
    let _ = writeln!(s, "diagnostics:");
    for d in &report.diagnostics {
        let _ = writeln!(s, "  {d}");
    }
    let summary_path = dir.join("summary.txt");
    fs::write(&summary_path, s)?;
    finish(&dir, "optimize", cfg.seed, vec![report_path, summary_path])
}

fn simulate_with(cfg: &ScenarioConfig, sc: &Scenario, data: &SynthDataset, dv: &DecisionVars, seed: u64) -> Result<TrainTrace> {
    run_training(sc, data, &cfg.train, dv, cfg.train.rounds, seed, Recording::default())
}

pub fn write_trace_csv(trace: &TrainTrace, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["round", "wall_clock_s", "loss", "accuracy", "participants", "aggregated_flag"])?;
    w.write_record(["0", "0", &num(trace.initial_loss), &num(trace.initial_accuracy), "0", "0"])?;
    for r in &trace.rounds {
        w.write_record([
            r.round.to_string(),
            num(r.wall_clock),
            num(r.loss),
            num(r.accuracy),
            r.participants.to_string(),
            u8::from(r.aggregated).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Trains under the configured (or optimised) decision and writes `trace.csv`.
pub fn cmd_simulate(cfg: &ScenarioConfig, svg: bool) -> Result<Vec<PathBuf>> {
    let sc = cfg.scenario()?;
    let dv = if cfg.simulate.use_optimized {
        bcd_optimize(&sc, &cfg.decision, &cfg.bcd)?.best().dv
    } else {
        cfg.decision
    };
    let data = generate_dataset(&cfg.data, sc.n_uavs(), cfg.seed)?;
    let trace = simulate_with(cfg, &sc, &data, &dv, cfg.seed)?;
    let dir = prepare_dir(cfg)?;
    let csv_path = dir.join("trace.csv");
    write_trace_csv(&trace, &csv_path)?;
    let mut files = vec![csv_path.clone()];
    if svg {
        let by_round = Chart { title: "Test accuracy", x: ("round", "round"), y: ("accuracy", "accuracy"), group: None };
        files.push(by_round.write(&csv_path, dir.join("accuracy_vs_round.svg"))?);
        let by_time = Chart { x: ("wall_clock_s", "simulated time (s)"), ..by_round };
        files.push(by_time.write(&csv_path, dir.join("accuracy_vs_time.svg"))?);
    }
    finish(&dir, "simulate", cfg.seed, files)
}

fn pinned_block(var: SweepVar) -> Block {
    match var {
        SweepVar::I => Block::Period,
        SweepVar::Lc => Block::Split,
        SweepVar::B => Block::Batch,
        SweepVar::ThetaS => Block::Sensing,
    }
}

fn positive_integer(v: f64) -> bool {
    v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64
}

fn sweep_point(var: SweepVar, value: f64, base: &DecisionVars, sc: &Scenario) -> DecisionVars {
    let mut dv = *base;
    match var {
        SweepVar::I => dv.period = value as u32,
        SweepVar::Lc => dv.split = value as usize,
        SweepVar::B => dv.batch = value as u32,
        SweepVar::ThetaS => dv.q_s = logistic_link_prob(value, &sc.env),
    }
    dv
}

/// One row per `(value, seed)`: the predicted objective and the simulated
/// rounds and time to reach `target_fraction` of the baseline's best accuracy.
/// The baseline is the configured decision trained for `train.rounds`.
pub fn cmd_sweep(cfg: &ScenarioConfig, svg: bool) -> Result<Vec<PathBuf>> {
    let spec = &cfg.sweep;
    let sc = cfg.scenario()?;
    if spec.values.is_empty() {
        return Err(Error::config("sweep.values", "no values to sweep"));
    }
    for &v in &spec.values {
        let ok = match spec.variable {
            SweepVar::I | SweepVar::B => positive_integer(v),
            SweepVar::Lc => positive_integer(v) && (v as usize) <= sc.n_layers(),
            SweepVar::ThetaS => (0.0..=90.0).contains(&v),
        };
        if !ok {
            return Err(Error::config("sweep.values", format!("{v} is outside the range of {}", spec.variable.name())));
        }
    }

    // Decisions do not depend on the seed, so optimise once per value.
    let points: Vec<(f64, DecisionVars, bool, Option<f64>)> = spec
        .values
        .iter()
        .map(|&value| {
            let mut dv = sweep_point(spec.variable, value, &cfg.decision, &sc);
            if spec.reoptimize {
                let pinned = pinned_block(spec.variable);
                let opts = BcdOptions { order: cfg.bcd.order.iter().copied().filter(|b| *b != pinned).collect(), ..cfg.bcd.clone() };
                if let Ok(report) = bcd_optimize(&sc, &dv, &opts) {
                    let best = report.best().dv;
                    // The repair step may have moved the pinned variable.
                    if sweep_point(spec.variable, value, &best, &sc) == best {
                        dv = best;
                    }
                }
            }
            let structural = sc.check_constraints(&dv).is_ok();
            (value, dv, structural, objective_xi(&dv, &sc).ok())
        })
        .collect();

    let dir = prepare_dir(cfg)?;
    let csv_path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record([
        "variable",
        "value",
        "seed",
        "I",
        "L_c",
        "b",
        "q_s",
        "feasible",
        "Xi_seconds",
        "expected_cycle_delay_s",
        "rounds_to_target",
        "time_to_target_s",
        "best_accuracy",
        "target_accuracy",
    ])?;
    for k in 0..spec.seeds {
        let seed = cfg.seed.wrapping_add(k as u64);
        let data = generate_dataset(&cfg.data, sc.n_uavs(), seed)?;
        let baseline = simulate_with(cfg, &sc, &data, &cfg.decision, seed)?;
        let target = spec.target_fraction * baseline.best_accuracy();
        for (value, dv, structural, xi) in &points {
            let mut row = vec![
                spec.variable.name().to_string(),
                num(*value),
                seed.to_string(),
                dv.period.to_string(),
                dv.split.to_string(),
                dv.batch.to_string(),
                num(dv.q_s),
                u8::from(xi.is_some()).to_string(),
                opt(xi.map(num)),
            ];
            if *structural {
                let delays = sc.delays(dv)?;
                let (_, cycle) = expected_cycle_delay(dv.period, sc.compute.epochs, dv.q_s, &delays);
                let trace = simulate_with(cfg, &sc, &data, dv, seed)?;
                row.extend([
                    num(cycle),
                    opt(trace.rounds_to_target(target)),
                    opt(trace.time_to_target(target).map(num)),
                    num(trace.best_accuracy()),
                    num(target),
                ]);
            } else {
                row.extend([String::new(), String::new(), String::new(), String::new(), num(target)]);
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    let mut files = vec![csv_path.clone()];
    if svg {
        let name = spec.variable.name();
        let rounds = Chart { title: "Rounds to target", x: ("value", name), y: ("rounds_to_target", "rounds"), group: Some("seed") };
        files.push(rounds.write(&csv_path, dir.join("sweep_rounds.svg"))?);
        let xi = Chart { title: "Predicted delay to accuracy", y: ("Xi_seconds", "Xi (s)"), ..rounds };
        files.push(xi.write(&csv_path, dir.join("sweep_xi.svg"))?);
    }
    finish(&dir, "sweep", cfg.seed, files)
}

/// Full-participation probe run followed by constant estimation; writes
/// `constants.txt` in the format accepted by `constants.file`.
pub fn cmd_estimate(cfg: &ScenarioConfig) -> Result<Vec<PathBuf>> {
    let sc = cfg.scenario()?;
    let data = generate_dataset(&cfg.data, sc.n_uavs(), cfg.seed)?;
    let dv = DecisionVars { period: 1, q_s: 1.0, ..cfg.decision };
    let trace = run_training(&sc, &data, &cfg.train, &dv, cfg.estimate.rounds, cfg.seed, Recording { probe: true, ..Recording::default() })?;
    let probe = trace.probe.ok_or_else(|| Error::Estimation("probe run recorded nothing".into()))?;
    let constants = estimate_constants(&probe, &cfg.estimate_options())?;
    let dir = prepare_dir(cfg)?;
    let path = dir.join("constants.txt");
    write_constants(&constants, &path)?;
    finish(&dir, "estimate-constants", cfg.seed, vec![path])
}
