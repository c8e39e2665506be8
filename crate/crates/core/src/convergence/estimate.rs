//! Empirical estimates of the bound constants from a full-participation probe run.

use serde::{Deserialize, Serialize};

use super::ConvergenceConstants;
use crate::error::{Error, Result};

/// Gradient statistics gathered in one probe round.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProbeRound {
    /// Flattened parameters of the averaged model at the start of the round.
    pub params: Vec<f64>,
    /// Gradient of the global objective at `params`.
    pub full_grad: Vec<f64>,
    /// Global objective at `params`.
    pub loss: f64,
    /// `[uav][layer]` squared norm of the stochastic gradient.
    pub layer_grad_sq: Vec<Vec<f64>>,
    /// `[uav][layer]` variance of the mini-batch gradient (per-sample variance / b).
    pub layer_minibatch_var: Vec<Vec<f64>>,
    /// `[uav]` squared distance between the UAV gradient and the UAV-average gradient.
    pub heterogeneity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProbeTrace {
    pub batch: u32,
    pub rounds: Vec<ProbeRound>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateOptions {
    /// Multiplier applied to every estimated supremum.
    pub safety_factor: f64,
    /// Learning rate written into the constants (the probe's own rate).
    pub eta: f64,
    pub eps_target: f64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self { safety_factor: 1.5, eta: 0.05, eps_target: 1.0 }
    }
}

fn max_into(acc: &mut [f64], values: &[f64]) {
    for (a, v) in acc.iter_mut().zip(values) {
        *a = a.max(*v);
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn estimate_constants(trace: &ProbeTrace, opts: &EstimateOptions) -> Result<ConvergenceConstants> {
    let first = trace
        .rounds
        .first()
        .ok_or_else(|| Error::Estimation("empty probe trace".into()))?;
    let n_uavs = first.layer_grad_sq.len();
    let n_layers = first.layer_grad_sq.first().map_or(0, Vec::len);
    if n_uavs == 0 || n_layers == 0 {
        return Err(Error::Estimation("probe trace has no per-UAV statistics".into()));
    }

    let mut g_sq = vec![0.0; n_layers];
    let mut var = vec![0.0; n_layers];
    let mut lambda_sq = vec![0.0; n_uavs];
    let mut beta: Option<f64> = None;
    let mut best_loss = first.loss;

    for (i, round) in trace.rounds.iter().enumerate() {
        if round.layer_grad_sq.len() != n_uavs || round.heterogeneity.len() != n_uavs {
            return Err(Error::Estimation(format!("round {i}: inconsistent UAV count")));
        }
        for uav in &round.layer_grad_sq {
            max_into(&mut g_sq, uav);
        }
        for uav in &round.layer_minibatch_var {
            max_into(&mut var, uav);
        }
        max_into(&mut lambda_sq, &round.heterogeneity);
        best_loss = best_loss.min(round.loss);

        if i > 0 {
            let prev = &trace.rounds[i - 1];
            let step = dist(&round.params, &prev.params);
            if step > 0.0 {
                let ratio = dist(&round.full_grad, &prev.full_grad) / step;
                beta = Some(beta.map_or(ratio, |b| b.max(ratio)));
            }
        }
    }

    let beta = beta.ok_or_else(|| Error::Estimation("parameters never moved".into()))?;
    if !(beta > 0.0) {
        return Err(Error::Estimation("gradient never changed between iterates".into()));
    }
    let vartheta = first.loss - best_loss;
    if !(vartheta > 0.0) {
        return Err(Error::Estimation("loss never decreased below its initial value".into()));
    }

    let k = opts.safety_factor;
    let batch = trace.batch as f64;
    Ok(ConvergenceConstants {
        beta: k * beta,
        eta: opts.eta,
        sigma_sq: var.iter().map(|v| k * batch * v).collect(),
        g_sq: g_sq.iter().map(|g| k * g).collect(),
        lambda_sq: lambda_sq.iter().map(|l| k * l).collect(),
        vartheta: k * vartheta,
        eps_target: opts.eps_target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Gradient descent on `0.5 ||w||^2` with a single UAV.
    fn quadratic_trace(rounds: usize) -> ProbeTrace {
        let mut w = vec![3.0, -2.0, 1.5];
        let mut out = Vec::new();
        for _ in 0..rounds {
            let grad = w.clone();
            let sq: f64 = grad.iter().map(|g| g * g).sum();
            out.push(ProbeRound {
                params: w.clone(),
                full_grad: grad.clone(),
                loss: 0.5 * sq,
                layer_grad_sq: vec![vec![sq]],
                layer_minibatch_var: vec![vec![0.0]],
                heterogeneity: vec![0.0],
            });
            for (wi, gi) in w.iter_mut().zip(&grad) {
                *wi -= 0.1 * gi;
            }
        }
        ProbeTrace { batch: 1, rounds: out }
    }

    #[test]
    fn quadratic_smoothness_is_one() {
        let opts = EstimateOptions { safety_factor: 1.0, ..EstimateOptions::default() };
        let cc = estimate_constants(&quadratic_trace(60), &opts).unwrap();
        assert!((cc.beta - 1.0).abs() < 1e-6);
        assert!(cc.lambda_sq[0] < 1e-8);
        assert!((cc.g_sq[0] - (9.0 + 4.0 + 2.25)).abs() < 1e-12);
    }

    #[test]
    fn safety_factor_scales_everything() {
        let base = estimate_constants(
            &quadratic_trace(10),
            &EstimateOptions { safety_factor: 1.0, ..EstimateOptions::default() },
        )
        .unwrap();
        let inflated = estimate_constants(&quadratic_trace(10), &EstimateOptions::default()).unwrap();
        assert!((inflated.beta / base.beta - 1.5).abs() < 1e-12);
        assert!((inflated.vartheta / base.vartheta - 1.5).abs() < 1e-12);
        assert!((inflated.g_sq[0] / base.g_sq[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn frozen_parameters_rejected() {
        let mut trace = quadratic_trace(5);
        let p = trace.rounds[0].params.clone();
        for r in &mut trace.rounds {
            r.params = p.clone();
        }
        assert!(matches!(
            estimate_constants(&trace, &EstimateOptions::default()),
            Err(Error::Estimation(_))
        ));
        assert!(estimate_constants(&ProbeTrace::default(), &EstimateOptions::default()).is_err());
    }
}
