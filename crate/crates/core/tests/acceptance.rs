//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line and then
//! asserts, so `cargo test --test acceptance -- --nocapture` gives a summary.

mod common;

use std::path::Path;
use std::process::Command;

use rand::Rng;

use sfl_lab::convergence::{
    estimate_constants, n_min, phi_m, phi_sum, theorem_bound, BoundOptions, EstimateOptions,
};
use sfl_lab::delay::expected_cycle_delay;
use sfl_lab::engine::data::{substream, Stream};
use sfl_lab::engine::mlp::softmax_cross_entropy;
use sfl_lab::engine::{
    client_backward, client_forward, generate_dataset, lemma1_monitor, run_training, server_step,
    toy_scenario, Batch, DataConfig, Matrix, Mlp, Recording, TrainConfig, TrainTrace,
};
use sfl_lab::geometry::{data_rate, optimal_uav_position, EnvParams, Point3};
use sfl_lab::optimizer::{
    bcd_optimize, grid_search, solve_batch, solve_period, solve_sensing, xi_or_inf,
    BcdOptions, DecisionVars, GridSpec, Scenario,
};

fn report(id: u32, name: &str, ok: bool, detail: &str) {
    println!("{} criterion {id}: {name} ({detail})", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {id} failed: {detail}");
}

// ---------------------------------------------------------------- 1

/// Participation weight of UAV 0 by enumerating every success pattern.
fn phi_by_enumeration(q: f64, m: usize) -> f64 {
    let none = (1.0 - q).powi(m as i32);
    let mut acc = 0.0;
    for mask in 1u32..(1 << m) {
        if mask & 1 == 0 {
            continue;
        }
        let k = mask.count_ones() as i32;
        acc += q.powi(k) * (1.0 - q).powi(m as i32 - k) / m as f64;
    }
    acc / (1.0 - none)
}

#[test]
fn criterion_01_participation_weights() {
    let mut worst = 0.0f64;
    let mut sum_ok = true;
    for m in 1..=10 {
        for k in 1..=9 {
            let q = k as f64 / 10.0;
            let closed = phi_m(q, m).unwrap();
            worst = worst.max((closed - phi_by_enumeration(q, m)).abs());
            sum_ok &= phi_sum(q, m).unwrap() <= 1.0 + 1e-15;
        }
    }
    report(1, "participation weight closed form", worst <= 1e-12 && sum_ok, &format!("max abs error {worst:.2e}, sum <= 1: {sum_ok}"));
}

// ---------------------------------------------------------------- 2

/// True when `chosen` attains the exact minimum of Xi over `1..=256`.
fn is_brute_argmin(sc: &Scenario, chosen: u32, set: impl Fn(u32) -> DecisionVars) -> bool {
    let best = (1..=256).map(|v| xi_or_inf(&set(v), sc)).fold(f64::INFINITY, f64::min);
    best.is_finite() && xi_or_inf(&set(chosen), sc) == best
}

#[test]
fn criterion_02_block_solvers() {
    let mut rng = common::rng(2);
    let (mut int_fail, mut q_fail, mut worst_q) = (0, 0, 0.0f64);
    let mut count = 0;
    while count < 100 {
        let sc = common::random_scenario(&mut rng, 6, 6);
        let split = rng.random_range(1..=sc.n_layers());
        let mut dv = common::feasible_start(&sc, split);
        dv.batch = rng.random_range(1..=64);
        dv.period = rng.random_range(1..=8);
        if !xi_or_inf(&dv, &sc).is_finite() {
            dv.batch = 1;
            dv.period = 1;
        }
        if !xi_or_inf(&dv, &sc).is_finite() {
            continue;
        }
        count += 1;

        let p = solve_period(&sc, &dv, 256).unwrap();
        if !is_brute_argmin(&sc, p.value, |v| DecisionVars { period: v, ..dv }) {
            int_fail += 1;
        }
        let b = solve_batch(&sc, &dv, 256).unwrap();
        if !is_brute_argmin(&sc, b.value, |v| DecisionVars { batch: v, ..dv }) {
            int_fail += 1;
        }

        let s = solve_sensing(&sc, &dv).unwrap();
        let (lo, hi) = sc.q_range();
        let steps = ((hi - lo) / 1e-4).ceil() as usize;
        let grid = (0..=steps)
            .map(|i| (lo + i as f64 * 1e-4).min(hi))
            .map(|q| xi_or_inf(&DecisionVars { q_s: q, ..dv }, &sc))
            .fold(f64::INFINITY, f64::min);
        let gap = s.xi / grid - 1.0;
        worst_q = worst_q.max(gap);
        if gap > 5e-3 {
            q_fail += 1;
        }
    }
    report(
        2,
        "block solvers vs exhaustive search",
        int_fail == 0 && q_fail == 0,
        &format!("I/b mismatches {int_fail}, q_s over 0.5%: {q_fail}, worst q_s gap {worst_q:.2e}"),
    );
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_03_bcd_vs_grid() {
    let mut rng = common::rng(3);
    let (mut fails, mut non_monotone, mut worst) = (0, 0, f64::NEG_INFINITY);
    let mut count = 0;
    while count < 20 {
        let sc = common::random_scenario(&mut rng, 6, 5);
        let Some((_, grid)) = grid_search(&sc, &GridSpec::default()).unwrap() else { continue };
        count += 1;
        let (lo, hi) = sc.q_range();
        let init = DecisionVars {
            period: rng.random_range(1..=16),
            split: rng.random_range(1..=sc.n_layers()),
            batch: rng.random_range(1..=32),
            q_s: rng.random_range(lo..=hi),
        };
        let rep = bcd_optimize(&sc, &init, &BcdOptions::default()).unwrap();
        let gap = rep.best().xi / grid - 1.0;
        worst = worst.max(gap);
        if gap > 0.02 {
            fails += 1;
        }
        if rep.history.windows(2).any(|w| w[1].xi > w[0].xi * (1.0 + 1e-9)) {
            non_monotone += 1;
        }
    }
    report(
        3,
        "BCD within 2% of grid optimum",
        fails == 0 && non_monotone == 0,
        &format!("worst relative gap {worst:.2e}, over tolerance {fails}, non-monotone histories {non_monotone}"),
    );
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_04_placement() {
    let mut rng = common::rng(4);
    let env = EnvParams::default();
    let mut losses = 0;
    for _ in 0..50 {
        let target = Point3::new(rng.random_range(-300.0..300.0), rng.random_range(-300.0..300.0), 0.0);
        let server = Point3::new(rng.random_range(-300.0..300.0), rng.random_range(-300.0..300.0), 0.0);
        let altitude = rng.random_range(5.0..150.0);
        let theta = rng.random_range(1.0..89.0);
        let best = optimal_uav_position(&target, &server, altitude, theta).unwrap();
        let r_best = data_rate(&best.position, &server, &env).unwrap();
        let radius = altitude / f64::tan(theta.to_radians());
        for deg in 0..360 {
            let a = (deg as f64).to_radians();
            let p = Point3::new(target.x + radius * a.cos(), target.y + radius * a.sin(), altitude);
            if data_rate(&p, &server, &env).unwrap() > r_best * (1.0 + 1e-12) {
                losses += 1;
            }
        }
    }
    report(4, "placement beats every circle sample", losses == 0, &format!("{losses} samples beat the placement"));
}

// ---------------------------------------------------------------- 5

/// Centralised oracle: every UAV runs `e` local steps of SGD on the joined
/// model from the current average, then the results are averaged.
fn centralized_history(sc: &Scenario, data: &sfl_lab::engine::SynthDataset, cfg: &TrainConfig, b: usize, rounds: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut w = Mlp::new(&cfg.widths, &mut substream(seed, Stream::Init, 0, 0)).unwrap();
    let m = sc.n_uavs();
    let mut out = Vec::new();
    for t in 1..=rounds {
        let mut sum = w.zeros_like();
        for u in 0..m {
            let batch = data.sense(u, t, b, seed);
            let mut local = w.clone();
            for _ in 0..sc.compute.epochs {
                let (logits, cache) = local.forward(&batch.x);
                let (_, g_out) = softmax_cross_entropy(&logits, &batch.labels);
                let (grad, _) = local.backward(&cache, &g_out);
                local.axpy(-cfg.learning_rate, &grad);
            }
            sum.axpy(1.0 / m as f64, &local);
        }
        w = sum;
        out.push(w.flatten());
    }
    out
}

#[test]
fn criterion_05_equivalence_with_centralized_sgd() {
    let sc = toy_scenario();
    let cfg = TrainConfig::default();
    let seed = 11;
    let data = generate_dataset(&DataConfig { shared_pool: true, ..DataConfig::default() }, sc.n_uavs(), seed).unwrap();
    let mut worst = 0.0f64;
    for split in 1..sc.n_layers() {
        let dv = DecisionVars { period: 1, split, batch: 16, q_s: 1.0 };
        let rec = Recording { params: true, ..Recording::default() };
        let trace = run_training(&sc, &data, &cfg, &dv, 50, seed, rec).unwrap();
        let oracle = centralized_history(&sc, &data, &cfg, 16, 50, seed);
        for (a, o) in trace.param_history.iter().zip(&oracle) {
            for (x, y) in a.iter().zip(o) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    report(5, "split protocol equals centralised SGD", worst <= 1e-6, &format!("max parameter deviation {worst:.2e} over 50 rounds"));
}

// ---------------------------------------------------------------- 6

fn probe_net() -> Mlp {
    let mut net = Mlp::new(&[2, 2, 2], &mut common::rng(6)).unwrap();
    net.layers[0].weights = vec![0.7, -0.4, 0.3, 0.9];
    net.layers[0].bias = vec![0.2, 0.1];
    net.layers[1].weights = vec![1.1, -0.6, -0.8, 0.5];
    net.layers[1].bias = vec![0.05, -0.05];
    net
}

fn loss_of(net: &Mlp, batch: &Batch) -> f64 {
    softmax_cross_entropy(&net.forward(&batch.x).0, &batch.labels).0
}

#[test]
fn criterion_06_gradients_match_finite_differences() {
    let net = probe_net();
    let batch = Batch { x: Matrix::from_rows(&[vec![1.0, 0.5], vec![0.3, 1.2], vec![0.8, 0.2]]), labels: vec![0, 1, 1] };
    let (mut client, mut server) = net.split_at(1);
    let (smashed, cache) = client_forward(&client, &batch, 0, 1).unwrap();
    let out = server_step(&mut server, &smashed, 0.0, true).unwrap();
    let cg = client_backward(&mut client, &cache, &out.activation_grad, 0.0, 1).unwrap();
    let analytic = Mlp::joined(&cg, &out.grad).flatten();

    let h = 1e-4;
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let eval = |delta: f64| {
            let mut n = net.clone();
            *n.params_mut().nth(i).unwrap() += delta;
            loss_of(&n, &batch)
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    report(6, "client and server gradients vs finite differences", worst <= 1e-5, &format!("max relative error {worst:.2e} over {} parameters", analytic.len()));
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_07_bound_consistency() {
    let mut rng = common::rng(7);
    let opts = BoundOptions::default();
    let (mut over, mut non_monotone, mut checked) = (0, 0, 0);
    while checked < 100 {
        let n_layers = rng.random_range(1..=8);
        let m = rng.random_range(1..=8);
        let q = rng.random_range(0.5..=1.0);
        let cc = common::feasible_constants(&mut rng, n_layers, m, q);
        let split = rng.random_range(1..=n_layers);
        let (period, batch) = (rng.random_range(1..=4) as f64, rng.random_range(1..=64) as f64);
        let Ok(n) = n_min(&cc, m, q, period, split, batch, &opts) else { continue };
        checked += 1;
        let bound = theorem_bound(&cc, m, q, period, split, batch, n.ceil()).unwrap();
        if bound > cc.eps_target + 1e-9 {
            over += 1;
        }
        let grid = |i: u32, b: u32| n_min(&cc, m, q, i as f64, split, b as f64, &opts).unwrap_or(f64::INFINITY);
        for i in 1..=16u32 {
            for b in 1..=16u32 {
                let v = grid(i, b);
                if (i < 16 && grid(i + 1, b) < v) || (b < 16 && grid(i, b + 1) > v) {
                    non_monotone += 1;
                }
            }
        }
    }
    report(
        7,
        "bound at ceil(N_min) within target, N_min monotone",
        over == 0 && non_monotone == 0,
        &format!("bound over target {over}, monotonicity violations {non_monotone}"),
    );
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_08_client_drift_within_bound() {
    let sc = toy_scenario();
    let cfg = TrainConfig::default();
    let opts = EstimateOptions { safety_factor: 1.5, ..EstimateOptions::default() };
    let (mut violations, mut worst_ratio) = (0, 0.0f64);
    for seed in 1..=5u64 {
        let data = generate_dataset(&DataConfig::default(), sc.n_uavs(), seed).unwrap();
        for period in [1u32, 5, 20] {
            let dv = DecisionVars { period, split: 3, batch: 16, q_s: 0.9 };
            let rec = Recording { drift: true, probe: true, ..Recording::default() };
            let trace = run_training(&sc, &data, &cfg, &dv, 60, seed, rec).unwrap();
            let cc = estimate_constants(trace.probe.as_ref().unwrap(), &opts).unwrap();
            let d = lemma1_monitor(&trace, &cc).unwrap();
            if d.observed > d.bound || d.post_aggregation > 1e-20 {
                violations += 1;
            }
            if d.bound > 0.0 {
                worst_ratio = worst_ratio.max(d.observed / d.bound);
            }
        }
    }
    report(8, "client drift within its bound", violations == 0, &format!("{violations} violations in 15 runs, max observed/bound {worst_ratio:.3}"));
}

// ---------------------------------------------------------------- 9

fn rounds_to(trace: &TrainTrace, target: f64) -> usize {
    trace.rounds_to_target(target).unwrap_or(usize::MAX)
}

#[test]
fn criterion_09_trends() {
    let sc = toy_scenario();
    let cfg = TrainConfig::default();
    let rounds = cfg.rounds;
    let run = |data: &_, period: u32, batch: u32, seed: u64| {
        let dv = DecisionVars { period, split: 3, batch, q_s: 0.9 };
        run_training(&sc, data, &cfg, &dv, rounds, seed, Recording::default()).unwrap()
    };
    let (mut period_votes, mut batch_votes) = (0, 0);
    for seed in 1..=5u64 {
        let data = generate_dataset(&DataConfig::default(), sc.n_uavs(), seed).unwrap();
        let target = 0.9 * run(&data, 1, 64, seed).best_accuracy();
        let by_period: Vec<usize> = [1, 5, 20].iter().map(|&i| rounds_to(&run(&data, i, 16, seed), target)).collect();
        let by_batch: Vec<usize> = [2, 8, 32].iter().map(|&b| rounds_to(&run(&data, 1, b, seed), target)).collect();
        period_votes += by_period.windows(2).all(|w| w[0] <= w[1]) as u32;
        batch_votes += by_batch.windows(2).all(|w| w[0] >= w[1]) as u32;
    }

    let cycle = |period: u32, batch: u32| {
        let dv = DecisionVars { period, split: 3, batch, q_s: 0.9 };
        expected_cycle_delay(period, sc.compute.epochs, dv.q_s, &sc.delays(&dv).unwrap()).1
    };
    let delay_ok = (1..64).all(|i| cycle(i + 1, 16) > cycle(i, 16)) && (1..64).all(|b| cycle(1, b + 1) > cycle(1, b));

    report(
        9,
        "rounds-to-target trends and delay monotonicity",
        period_votes >= 3 && batch_votes >= 3 && delay_ok,
        &format!("I trend {period_votes}/5 seeds, b trend {batch_votes}/5 seeds, cycle delay increasing: {delay_ok}"),
    );
}

// ---------------------------------------------------------------- 10

const SMALL_CONFIG: &str = r#"{
  "seed": 3,
  "train": { "rounds": 20 },
  "estimate": { "rounds": 10 },
  "data": { "samples_per_uav": 100, "shared_pool": true },
  "constants": { "eta": 1e-6 },
  "sweep": { "variable": "I", "values": [1, 5], "seeds": 2 }
}"#;

fn run_cli(args: &[&str], config: &Path, out: &Path) -> Vec<(String, Vec<u8>)> {
    let status = Command::new(env!("CARGO_BIN_EXE_sfl-lab"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env_remove("SFL_SEED")
        .env_remove("SFL_OUT")
        .output()
        .unwrap();
    assert!(status.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&status.stderr));
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_10_cli_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, SMALL_CONFIG).unwrap();
    let commands: [&[&str]; 4] = [&["optimize", "--brute-force"], &["simulate", "--svg"], &["sweep", "--svg"], &["estimate-constants"]];
    let mut mismatched = Vec::new();
    for (k, args) in commands.iter().enumerate() {
        let a = run_cli(args, &config, &dir.path().join(format!("a{k}")));
        let b = run_cli(args, &config, &dir.path().join(format!("b{k}")));
        if a.is_empty() || a != b {
            mismatched.push(args[0]);
        }
    }
    report(10, "CLI outputs byte-identical across runs", mismatched.is_empty(), &format!("mismatched commands: {mismatched:?}"));
}
