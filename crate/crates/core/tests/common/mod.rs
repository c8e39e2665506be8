//! Random scenario generators shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sfl_lab::convergence::{BoundOptions, ConvergenceConstants};
use sfl_lab::delay::{ComputeParams, ModelProfile};
use sfl_lab::geometry::{logistic_link_prob, EnvParams, Point3, SensingParams};
use sfl_lab::optimizer::{DecisionVars, Deployment, Scenario};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Split `total` into `n` positive random shares.
fn shares(rng: &mut ChaCha8Rng, n: usize, total: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| total * x / s).collect()
}

/// Printed-form `eps'` per unit of `eps_target`, at sensing probability `q`.
fn eps_prime_unit(eta: f64, beta: f64, q: f64, m: usize) -> f64 {
    let any = 1.0 - (1.0 - q).powi(m as i32);
    let w = q / (4.0 * any * m as f64);
    eta * w * w - 4.0 * beta * eta * eta
}

/// Constants whose bound denominator is positive at `q_ref`, `I = 1`, `b = 1`
/// for every split: each loss term consumes a random fraction of `eps'(q_ref)`.
pub fn feasible_constants(rng: &mut ChaCha8Rng, n_layers: usize, m: usize, q_ref: f64) -> ConvergenceConstants {
    let mf = m as f64;
    let beta = log_uniform(rng, 0.2, 5.0);
    let any = 1.0 - (1.0 - q_ref).powi(m as i32);
    let w = q_ref / (4.0 * any * mf);
    // eps' > 0 requires eta < w^2 / (4 beta).
    let eta = rng.random_range(0.02..0.5) * w * w / (4.0 * beta);
    let eps_target = log_uniform(rng, 0.1, 2.0);
    let eps_prime = eps_target * eps_prime_unit(eta, beta, q_ref, m);

    let f: Vec<f64> = (0..3).map(|_| rng.random_range(0.02..0.3)).collect();
    let gamma1 = 16.0 * beta.powi(3) * eta.powi(4) + 4.0 * mf * beta * beta * eta.powi(3);
    let g_total = f[0] * eps_prime / gamma1;
    let sigma_total = f[1] * eps_prime * mf / (beta * eta * eta);
    // q^(2-M) grows with q when M = 1, so size it at the worse of q_ref and 1.
    let inv_q_pow = q_ref.powi(2 - m as i32).max(1.0);
    let per_lambda = 4.0 * beta * eta * eta * inv_q_pow / mf + eta + 2.0 * beta * eta * eta / (mf * mf);
    let lambda_total = f[2] * eps_prime / per_lambda;
    ConvergenceConstants {
        beta,
        eta,
        sigma_sq: shares(rng, n_layers, sigma_total),
        g_sq: shares(rng, n_layers, g_total),
        lambda_sq: shares(rng, m, lambda_total),
        vartheta: log_uniform(rng, 0.5, 5.0),
        eps_target,
    }
}

/// A random scenario with at most `max_layers` layers and `max_uavs` UAVs
/// whose bound is feasible near the top of its sensing range.
pub fn random_scenario(rng: &mut ChaCha8Rng, max_layers: usize, max_uavs: usize) -> Scenario {
    let n_layers = rng.random_range(1..=max_layers);
    let m = rng.random_range(1..=max_uavs);
    let env = EnvParams::default();
    let sensing = SensingParams {
        t_chirp: log_uniform(rng, 1e-6, 1e-4),
        n_chirps: rng.random_range(5..=50),
        theta0: rng.random_range(5.0..40.0),
    };
    let targets: Vec<Point3> = (0..m)
        .map(|_| Point3 { x: rng.random_range(-200.0..200.0), y: rng.random_range(-200.0..200.0), z: 0.0 })
        .collect();
    let server = Point3 { x: rng.random_range(-50.0..50.0), y: rng.random_range(-50.0..50.0), z: 0.0 };
    let deployment = Deployment { targets, server, altitude: rng.random_range(10.0..100.0) };
    let profile = ModelProfile {
        param_bits: (0..n_layers).map(|_| log_uniform(rng, 1e3, 1e6)).collect(),
        activation_bits: (0..n_layers).map(|_| log_uniform(rng, 1e2, 1e5)).collect(),
        fwd_flops: (0..n_layers).map(|_| log_uniform(rng, 1e4, 1e7)).collect(),
        bwd_flops: (0..n_layers).map(|_| log_uniform(rng, 2e4, 2e7)).collect(),
        shape_const: rng.random_range(0.5..2.0),
    };
    let compute = ComputeParams {
        f_m: log_uniform(rng, 1e8, 1e10),
        varpi: rng.random_range(1.0..8.0),
        epochs: rng.random_range(1..=3),
    };
    let q_hi = logistic_link_prob(90.0, &env);
    let q_lo = logistic_link_prob(sensing.theta0, &env);
    let q_ref = rng.random_range(q_lo.max(0.5)..=q_hi);
    let constants = feasible_constants(rng, n_layers, m, q_ref);
    Scenario { deployment, env, sensing, profile, compute, constants, bound: BoundOptions::default() }
}

/// A feasible point of `sc`: `I = b = 1` at the top of the sensing range.
pub fn feasible_start(sc: &Scenario, split: usize) -> DecisionVars {
    let (_, hi) = sc.q_range();
    DecisionVars { period: 1, split, batch: 1, q_s: hi }
}
