//! Delay-to-accuracy objective and its block coordinate descent.
//!
//! For a decision `(I, L_c, b, q_s)` the objective is
//!
//! ```text
//! Xi = sum_m vartheta * T_m(I, L_c, u_m(q_s), b) / (I * denominator(I, L_c, b, q_s))
//! ```
//!
//! i.e. the number of aggregation cycles needed to reach the target accuracy
//! (`N_min / I`) times the summed expected cycle delay. UAV positions follow from
//! `q_s` through the closed-form placement.

mod bcd;
mod blocks;

pub use bcd::{bcd_optimize, BcdOptions, BcdReport, BcdStep, Block, Termination};
pub use blocks::{
    solve_batch, solve_period, solve_sensing, solve_split, BlockMethod, BlockSolution,
    SensingSolution,
};

use serde::{Deserialize, Serialize};

use crate::convergence::{bound_terms, phi_sum, BoundOptions, BoundTerms, ConvergenceConstants,
                         EpsPrimeForm, HeterogeneityForm};
use crate::delay::{ComputeParams, DelayBreakdown, ModelProfile};
use crate::error::{Error, Result};
use crate::geometry::{
    achievable_qs_range, data_rate, logistic_link_prob, optimal_uav_position, theta_from_qs,
    EnvParams, Placement, Point3, SensingParams,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Deployment {
    /// Ground targets, one per UAV.
    pub targets: Vec<Point3>,
    pub server: Point3,
    /// Common UAV altitude `H`.
    pub altitude: f64,
}

impl Deployment {
    /// `m` targets evenly spaced on a ring of `radius` around the origin.
    pub fn ring(m: usize, radius: f64, server: Point3, altitude: f64) -> Self {
        let targets = (0..m)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
                Point3::new(radius * a.cos(), radius * a.sin(), 0.0)
            })
            .collect();
        Self { targets, server, altitude }
    }

    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::config("deployment.targets", "at least one target required"));
        }
        if !(self.altitude > 0.0) {
            return Err(Error::config("deployment.altitude", "must be positive"));
        }
        if let Some(i) = self.targets.iter().position(|t| t.z != 0.0) {
            return Err(Error::config(format!("deployment.targets[{i}].z"), "targets lie on the ground"));
        }
        if !(self.server.z >= 0.0) {
            return Err(Error::config("deployment.server.z", "must be non-negative"));
        }
        Ok(())
    }
}

/// Decision variables: aggregation period `I`, split layer `L_c`, sensed batch
/// `b` and the common sensing probability `q_s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecisionVars {
    #[serde(rename = "I")]
    pub period: u32,
    #[serde(rename = "L_c")]
    pub split: usize,
    #[serde(rename = "b")]
    pub batch: u32,
    pub q_s: f64,
}

impl Default for DecisionVars {
    fn default() -> Self {
        Self { period: 5, split: 3, batch: 16, q_s: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub deployment: Deployment,
    pub env: EnvParams,
    pub sensing: SensingParams,
    pub profile: ModelProfile,
    pub compute: ComputeParams,
    pub constants: ConvergenceConstants,
    pub bound: BoundOptions,
}

/// Objective restricted to a fixed `(L_c, q_s)`, as a function of the relaxed
/// period and batch size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XiSlice {
    pub vartheta: f64,
    /// `e q_s sum_m (per-sample sensing + training + smashed upload)`.
    pub per_sample_cost: f64,
    /// `sum_m` client-model upload time.
    pub upload: f64,
    pub terms: BoundTerms,
}

impl XiSlice {
    fn numerator(&self, period: f64, batch: f64) -> f64 {
        period * batch * self.per_sample_cost + self.upload
    }

    pub fn value(&self, period: f64, batch: f64) -> f64 {
        let den = self.terms.denominator(period, batch);
        if !(den > 0.0) {
            return f64::INFINITY;
        }
        self.vartheta * self.numerator(period, batch) / (period * den)
    }

    /// Partial derivative in the relaxed period.
    pub fn d_period(&self, period: f64, batch: f64) -> f64 {
        let u = self.numerator(period, batch);
        let du = batch * self.per_sample_cost;
        let d0 = self.terms.fixed_part() - self.terms.gamma2 / batch;
        let g = self.terms.drift_coeff();
        let v = period * (d0 - g * period * period);
        let dv = d0 - 3.0 * g * period * period;
        self.vartheta * (du * v - u * dv) / (v * v)
    }

    /// Partial derivative in the relaxed batch size.
    pub fn d_batch(&self, period: f64, batch: f64) -> f64 {
        let u = self.numerator(period, batch);
        let du = period * self.per_sample_cost;
        let w = period * self.terms.denominator(period, batch);
        let dw = period * self.terms.gamma2 / (batch * batch);
        self.vartheta * (du * w - u * dw) / (w * w)
    }
}

impl Scenario {
    pub fn n_uavs(&self) -> usize {
        self.deployment.targets.len()
    }

    pub fn n_layers(&self) -> usize {
        self.profile.n_layers()
    }

    pub fn validate(&self) -> Result<()> {
        self.deployment.validate()?;
        self.env.validate()?;
        self.sensing.validate()?;
        self.profile.validate()?;
        self.compute.validate()?;
        self.constants.validate(self.n_layers(), self.n_uavs())
    }

    /// Sensing probabilities allowed by the minimum elevation and the 90 degree ceiling.
    pub fn q_range(&self) -> (f64, f64) {
        let (_, hi) = achievable_qs_range(&self.env);
        (logistic_link_prob(self.sensing.theta0, &self.env), hi)
    }

    pub fn positions(&self, q_s: f64) -> Result<Vec<Placement>> {
        let theta_s = theta_from_qs(q_s, &self.env)?;
        self.deployment
            .targets
            .iter()
            .map(|t| {
                optimal_uav_position(t, &self.deployment.server, self.deployment.altitude, theta_s)
            })
            .collect()
    }

    pub fn rates(&self, q_s: f64) -> Result<Vec<f64>> {
        self.positions(q_s)?
            .iter()
            .map(|p| data_rate(&p.position, &self.deployment.server, &self.env))
            .collect()
    }

    pub fn delays(&self, dv: &DecisionVars) -> Result<Vec<DelayBreakdown>> {
        self.rates(dv.q_s)?
            .into_iter()
            .map(|r| {
                DelayBreakdown::compute(dv.batch, dv.split, r, &self.sensing, &self.profile, &self.compute)
            })
            .collect()
    }

    /// Checks every structural constraint except the bound denominator.
    pub fn check_constraints(&self, dv: &DecisionVars) -> Result<()> {
        if dv.period < 1 {
            return Err(Error::infeasible("aggregation period", "I must be a positive integer"));
        }
        if dv.batch < 1 {
            return Err(Error::infeasible("batch size", "b must be a positive integer"));
        }
        if dv.split < 1 || dv.split > self.n_layers() {
            return Err(Error::infeasible(
                "split layer",
                format!("L_c = {} outside 1..={}", dv.split, self.n_layers()),
            ));
        }
        let (lo, hi) = self.q_range();
        let slack = 1e-12;
        if dv.q_s < lo * (1.0 - slack) {
            return Err(Error::infeasible(
                "minimum sensing elevation",
                format!("q_s = {} below {} required by theta0 = {}", dv.q_s, lo, self.sensing.theta0),
            ));
        }
        if dv.q_s > hi * (1.0 + slack) {
            return Err(Error::infeasible(
                "sensing probability",
                format!("q_s = {} above the overhead maximum {hi}", dv.q_s),
            ));
        }
        Ok(())
    }

    /// Objective pieces at a fixed `(L_c, q_s)`.
    pub fn slice(&self, split: usize, q_s: f64) -> Result<XiSlice> {
        let delays = self.delays(&DecisionVars { period: 1, split, batch: 1, q_s })?;
        let epochs = self.compute.epochs as f64;
        let per_sample: f64 = delays.iter().map(DelayBreakdown::per_epoch).sum();
        Ok(XiSlice {
            vartheta: self.constants.vartheta,
            per_sample_cost: epochs * q_s * per_sample,
            upload: delays.iter().map(|d| d.t_param).sum(),
            terms: bound_terms(&self.constants, self.n_uavs(), q_s, split, &self.bound)?,
        })
    }

    /// Derivative of the bound denominator with respect to `q_s`.
    pub fn d_denominator_dq(&self, q_s: f64) -> Result<f64> {
        let m = self.n_uavs();
        let mf = m as f64;
        let cc = &self.constants;
        let s = phi_sum(q_s, m)?;
        let fail = (1.0 - q_s).powi(m as i32);
        let any = 1.0 - fail;
        let fail_prev = (1.0 - q_s).powi(m as i32 - 1);
        let ds = (any - q_s * mf * fail_prev) / (any * any);
        let d_eps = match self.bound.eps_prime {
            EpsPrimeForm::Printed => 2.0 * cc.eta * cc.eps_target * s * ds / (16.0 * mf * mf),
            EpsPrimeForm::TheoremDerived => cc.eta * cc.eps_target * s * ds,
        };
        let gamma3 = match self.bound.heterogeneity {
            HeterogeneityForm::Substituted => 4.0 * cc.beta * cc.eta * cc.eta * cc.lambda_sq_total() / mf,
            HeterogeneityForm::Literal { u, gamma } => 8.0 * u * cc.beta * cc.beta * gamma * gamma,
        };
        // d/dq of -Gamma3 q^(2-M)
        let d_het = -gamma3 * (2.0 - mf) * q_s.powf(1.0 - mf);
        Ok(d_eps + d_het)
    }
}

/// The delay-to-accuracy objective in seconds.
pub fn objective_xi(dv: &DecisionVars, sc: &Scenario) -> Result<f64> {
    sc.check_constraints(dv)?;
    let slice = sc.slice(dv.split, dv.q_s)?;
    let denominator = slice.terms.denominator(dv.period as f64, dv.batch as f64);
    if !(denominator > 0.0) {
        return Err(Error::BoundInfeasible { denominator });
    }
    Ok(slice.value(dv.period as f64, dv.batch as f64))
}

/// Objective value with every infeasibility mapped to `+inf`.
pub fn xi_or_inf(dv: &DecisionVars, sc: &Scenario) -> f64 {
    objective_xi(dv, sc).unwrap_or(f64::INFINITY)
}

/// Exhaustive search bounds for [`grid_search`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub period_max: u32,
    pub batch_max: u32,
    /// `q_s` is sampled at multiples of this step inside the achievable range,
    /// plus both range endpoints.
    pub q_step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { period_max: 64, batch_max: 64, q_step: 1e-2 }
    }
}

/// Best grid point and its objective; `None` when no grid point is feasible.
pub fn grid_search(sc: &Scenario, spec: &GridSpec) -> Result<Option<(DecisionVars, f64)>> {
    sc.validate()?;
    let (lo, hi) = sc.q_range();
    let mut qs = vec![lo];
    let mut k = (lo / spec.q_step).floor() as i64 + 1;
    while (k as f64) * spec.q_step < hi {
        qs.push(k as f64 * spec.q_step);
        k += 1;
    }
    qs.push(hi);

    let mut best: Option<(DecisionVars, f64)> = None;
    for split in 1..=sc.n_layers() {
        for &q_s in &qs {
            let slice = sc.slice(split, q_s)?;
            for period in 1..=spec.period_max {
                for batch in 1..=spec.batch_max {
                    let xi = slice.value(period as f64, batch as f64);
                    if xi.is_finite() && best.as_ref().is_none_or(|(_, b)| xi < *b) {
                        best = Some((DecisionVars { period, split, batch, q_s }, xi));
                    }
                }
            }
        }
    }
    Ok(best)
}
