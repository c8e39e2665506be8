//! Convergence-bound calculus for split federated learning with Bernoulli
//! sensing participation.
//!
//! With a uniform per-round success probability `q_s` across `M` UAVs the
//! participation-conditioned weights collapse to closed forms ([`phi_m`],
//! [`kappa_m`]). [`bound_terms`] assembles the constants of the minimum-rounds
//! inequality, [`n_min`] solves it, and [`theorem_bound`] evaluates the
//! averaged squared-gradient bound after `N` rounds.

mod estimate;

pub use estimate::{estimate_constants, EstimateOptions, ProbeRound, ProbeTrace};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothness, learning rate, per-layer variance and second-moment bounds,
/// per-UAV heterogeneity bounds, initial optimality gap and target accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceConstants {
    pub beta: f64,
    pub eta: f64,
    /// Per-layer gradient variance bounds, one per network layer.
    pub sigma_sq: Vec<f64>,
    /// Per-layer second-moment bounds, one per network layer.
    pub g_sq: Vec<f64>,
    /// Per-UAV heterogeneity bounds.
    pub lambda_sq: Vec<f64>,
    /// Initial optimality gap `E[L(w0)] - E[L(w*)]`.
    pub vartheta: f64,
    /// Target mean squared gradient norm.
    pub eps_target: f64,
}

impl ConvergenceConstants {
    /// Uniform constants for `n_layers` layers and `n_uavs` UAVs.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        n_layers: usize,
        n_uavs: usize,
        beta: f64,
        eta: f64,
        sigma_sq: f64,
        g_sq: f64,
        lambda_sq: f64,
        vartheta: f64,
        eps_target: f64,
    ) -> Self {
        Self {
            beta,
            eta,
            sigma_sq: vec![sigma_sq; n_layers],
            g_sq: vec![g_sq; n_layers],
            lambda_sq: vec![lambda_sq; n_uavs],
            vartheta,
            eps_target,
        }
    }

    pub fn validate(&self, n_layers: usize, n_uavs: usize) -> Result<()> {
        let scalars = [
            ("constants.beta", self.beta),
            ("constants.eta", self.eta),
            ("constants.vartheta", self.vartheta),
            ("constants.eps_target", self.eps_target),
        ];
        for (key, v) in scalars {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be positive and finite"));
            }
        }
        if self.sigma_sq.len() != n_layers {
            return Err(Error::config("constants.sigma_sq", format!("expected {n_layers} layers")));
        }
        if self.g_sq.len() != n_layers {
            return Err(Error::config("constants.g_sq", format!("expected {n_layers} layers")));
        }
        if self.lambda_sq.len() != n_uavs {
            return Err(Error::config("constants.lambda_sq", format!("expected {n_uavs} UAVs")));
        }
        for (key, v) in [
            ("constants.sigma_sq", &self.sigma_sq),
            ("constants.g_sq", &self.g_sq),
            ("constants.lambda_sq", &self.lambda_sq),
        ] {
            if let Some(i) = v.iter().position(|x| !(*x >= 0.0 && x.is_finite())) {
                return Err(Error::config(format!("{key}[{i}]"), "must be non-negative and finite"));
            }
        }
        Ok(())
    }

    /// Sum of `G_l^2` over the client layers `1..=split`.
    pub fn client_g_sq(&self, split: usize) -> f64 {
        self.g_sq[..split.min(self.g_sq.len())].iter().sum()
    }

    pub fn sigma_sq_total(&self) -> f64 {
        self.sigma_sq.iter().sum()
    }

    pub fn lambda_sq_total(&self) -> f64 {
        self.lambda_sq.iter().sum()
    }
}

/// How the accuracy-scaled leading term `eps'` is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsPrimeForm {
    /// `eta eps (q / (4 [1-(1-q)^M] M))^2 - 4 eps beta eta^2`.
    #[default]
    Printed,
    /// `eta eps (sum phi)^2 / 2 - 4 eps beta eta^2`, the direct rearrangement
    /// of the gap bound.
    TheoremDerived,
}

/// How the sensing-weighted heterogeneity coefficient is formed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "form")]
pub enum HeterogeneityForm {
    /// `4 beta eta^2 sum(Lambda_m^2) / M`, which reproduces the gap-bound term
    /// `2 beta eta^2 sum kappa_m q^2 Lambda_m^2` once divided by `q^(M-2)`.
    #[default]
    Substituted,
    /// `8 U beta^2 gamma^2` with caller-supplied `U` and `gamma`.
    Literal { u: f64, gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundOptions {
    pub eps_prime: EpsPrimeForm,
    pub heterogeneity: HeterogeneityForm,
    /// Sensing probabilities below this are rejected as infeasible.
    pub q_floor: f64,
}

impl Default for BoundOptions {
    fn default() -> Self {
        Self {
            eps_prime: EpsPrimeForm::Printed,
            heterogeneity: HeterogeneityForm::Substituted,
            q_floor: 1e-3,
        }
    }
}

fn check_q(q_s: f64, m: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::Domain("at least one UAV required".into()));
    }
    if !(q_s > 0.0 && q_s <= 1.0) {
        return Err(Error::infeasible("sensing probability", format!("q_s = {q_s} outside (0, 1]")));
    }
    Ok(())
}

/// `1 - (1 - q)^M`, the probability that at least one UAV senses successfully.
fn any_success(q_s: f64, m: usize) -> f64 {
    -((m as f64) * (-q_s).ln_1p()).exp_m1()
}

/// Sum of the participation weights, `q / [1 - (1-q)^M]`.
pub fn phi_sum(q_s: f64, m: usize) -> Result<f64> {
    check_q(q_s, m)?;
    Ok(q_s / any_success(q_s, m))
}

/// Participation weight of one UAV under uniform sensing probability.
pub fn phi_m(q_s: f64, m: usize) -> Result<f64> {
    Ok(phi_sum(q_s, m)? / m as f64)
}

/// `2 / (M q^M)`; rejects `q_s` below `q_floor`.
pub fn kappa_m(q_s: f64, m: usize, q_floor: f64) -> Result<f64> {
    check_q(q_s, m)?;
    if q_s < q_floor {
        return Err(Error::infeasible(
            "sensing probability",
            format!("q_s = {q_s} below floor {q_floor}"),
        ));
    }
    Ok(2.0 / (m as f64 * q_s.powi(m as i32)))
}

/// Constants of the minimum-rounds inequality at a fixed `(M, q_s, L_c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub eps_prime: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    pub gamma4: f64,
    /// `sum_{l <= L_c} G_l^2`.
    pub client_g_sq: f64,
    /// `q_s^(M-2)`.
    pub q_pow: f64,
}

impl BoundTerms {
    /// Terms of the denominator that do not depend on the aggregation period or batch.
    pub fn fixed_part(&self) -> f64 {
        self.eps_prime - self.gamma3 / self.q_pow - self.gamma4
    }

    /// Coefficient of `I^2` in the denominator.
    pub fn drift_coeff(&self) -> f64 {
        self.gamma1 * self.client_g_sq
    }

    /// `eps' - Gamma1 sum G^2 I^2 - Gamma2 / b - Gamma3 / q^(M-2) - Gamma4`, with
    /// the period and batch relaxed to reals.
    pub fn denominator(&self, period: f64, batch: f64) -> f64 {
        self.fixed_part() - self.drift_coeff() * period * period - self.gamma2 / batch
    }

    pub fn is_feasible(&self, period: f64, batch: f64) -> bool {
        self.denominator(period, batch) > 0.0
    }
}

pub fn bound_terms(
    cc: &ConvergenceConstants,
    m: usize,
    q_s: f64,
    split: usize,
    opts: &BoundOptions,
) -> Result<BoundTerms> {
    check_q(q_s, m)?;
    let (beta, eta, eps) = (cc.beta, cc.eta, cc.eps_target);
    let mf = m as f64;
    let lambda = cc.lambda_sq_total();
    let eps_prime = match opts.eps_prime {
        EpsPrimeForm::Printed => {
            let w = q_s / (4.0 * any_success(q_s, m) * mf);
            eta * eps * w * w - 4.0 * eps * beta * eta * eta
        }
        EpsPrimeForm::TheoremDerived => {
            let s = phi_sum(q_s, m)?;
            0.5 * eta * eps * s * s - 4.0 * eps * beta * eta * eta
        }
    };
    let gamma3 = match opts.heterogeneity {
        HeterogeneityForm::Substituted => 4.0 * beta * eta * eta * lambda / mf,
        HeterogeneityForm::Literal { u, gamma } => 8.0 * u * beta * beta * gamma * gamma,
    };
    Ok(BoundTerms {
        eps_prime,
        gamma1: 16.0 * beta.powi(3) * eta.powi(4) + 4.0 * mf * beta * beta * eta.powi(3),
        gamma2: beta * eta * eta * cc.sigma_sq_total() / mf,
        gamma3,
        gamma4: eta * lambda + 2.0 * beta * eta * eta / (mf * mf) * lambda,
        client_g_sq: cc.client_g_sq(split),
        q_pow: q_s.powi(m as i32 - 2),
    })
}

/// Minimum number of rounds (real-valued) to reach `eps_target`.
///
/// Fails with [`Error::BoundInfeasible`] carrying the denominator when it is not positive.
pub fn n_min(
    cc: &ConvergenceConstants,
    m: usize,
    q_s: f64,
    period: f64,
    split: usize,
    batch: f64,
    opts: &BoundOptions,
) -> Result<f64> {
    let terms = bound_terms(cc, m, q_s, split, opts)?;
    let denominator = terms.denominator(period, batch);
    if !(denominator > 0.0) {
        return Err(Error::BoundInfeasible { denominator });
    }
    Ok(cc.vartheta / denominator)
}

/// Averaged squared-gradient bound after `rounds` rounds with uniform sensing probability.
pub fn theorem_bound(
    cc: &ConvergenceConstants,
    m: usize,
    q_s: f64,
    period: f64,
    split: usize,
    batch: f64,
    rounds: f64,
) -> Result<f64> {
    let s = phi_sum(q_s, m)?;
    let (beta, eta) = (cc.beta, cc.eta);
    let limit = s / (8.0 * beta);
    if !(eta > 0.0 && eta < limit) {
        return Err(Error::LearningRate { eta, limit });
    }
    let prefactor_den = eta * s * s - 8.0 * beta * eta * eta;
    if !(prefactor_den > 0.0) {
        return Err(Error::BoundInfeasible { denominator: prefactor_den });
    }
    let mf = m as f64;
    let lambda = cc.lambda_sq_total();
    let g = cc.client_g_sq(split);
    let kappa = 2.0 / (mf * q_s.powi(m as i32));
    let drift = period * period * g;
    let inner = cc.vartheta / rounds
        + beta * eta * eta * cc.sigma_sq_total() / (mf * batch)
        + 2.0 * beta * eta * eta / (mf * mf) * lambda
        + 16.0 * beta.powi(3) * eta.powi(4) * drift
        + 2.0 * beta * eta * eta * kappa * q_s * q_s * lambda
        + eta * lambda
        + 4.0 * mf * beta * beta * eta.powi(3) * drift;
    Ok(2.0 / prefactor_den * inner)
}
