//! Block coordinate descent over `(I, b, L_c, q_s)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Placement;

use super::{objective_xi, solve_batch, solve_period, solve_sensing, solve_split, xi_or_inf,
            DecisionVars, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Period,
    Batch,
    Split,
    Sensing,
}

impl Block {
    pub fn label(&self) -> &'static str {
        match self {
            Block::Period => "I",
            Block::Batch => "b",
            Block::Split => "L_c",
            Block::Sensing => "q_s",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BcdOptions {
    pub max_iters: usize,
    /// Stop once a full sweep improves the objective by less than this fraction.
    pub tol: f64,
    pub order: Vec<Block>,
    pub period_max: u32,
    pub batch_max: u32,
}

impl Default for BcdOptions {
    fn default() -> Self {
        Self {
            max_iters: 50,
            tol: 1e-6,
            order: vec![Block::Period, Block::Batch, Block::Split, Block::Sensing],
            period_max: 256,
            batch_max: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
}

/// One accepted state: the initial point has `block == None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcdStep {
    pub iteration: usize,
    pub block: Option<Block>,
    pub dv: DecisionVars,
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcdReport {
    pub history: Vec<BcdStep>,
    pub termination: Termination,
    pub iterations: usize,
    /// Free-form notes from the sub-solvers (methods used, repairs).
    pub diagnostics: Vec<String>,
    pub positions: Vec<Placement>,
}

impl BcdReport {
    pub fn best(&self) -> &BcdStep {
        self.history.last().expect("history always holds the initial point")
    }
}

/// Makes an infeasible starting point feasible: aggregate every round, then
/// grow the batch, then raise the sensing probability to its maximum.
fn repair(sc: &Scenario, init: &DecisionVars, opts: &BcdOptions, notes: &mut Vec<String>) -> Result<DecisionVars> {
    let (lo, hi) = sc.q_range();
    let mut dv = *init;
    dv.split = dv.split.clamp(1, sc.n_layers());
    dv.q_s = dv.q_s.clamp(lo, hi);
    dv.period = dv.period.clamp(1, opts.period_max);
    dv.batch = dv.batch.clamp(1, opts.batch_max);
    if objective_xi(&dv, sc).is_ok() {
        return Ok(dv);
    }
    for q_s in [dv.q_s, hi] {
        dv.q_s = q_s;
        dv.period = 1;
        let mut batch = dv.batch;
        loop {
            dv.batch = batch;
            if objective_xi(&dv, sc).is_ok() {
                notes.push(format!("repaired start to I=1 b={} q_s={}", dv.batch, dv.q_s));
                return Ok(dv);
            }
            if batch >= opts.batch_max {
                break;
            }
            batch = (batch * 2).min(opts.batch_max);
        }
        // Other split layers may carry less second-moment mass.
        for split in 1..=sc.n_layers() {
            let cand = DecisionVars { split, ..dv };
            if objective_xi(&cand, sc).is_ok() {
                notes.push(format!("repaired start to L_c={split} b={} q_s={}", dv.batch, dv.q_s));
                return Ok(cand);
            }
        }
    }
    Err(Error::infeasible(
        "convergence bound",
        "no feasible starting point: the bound denominator stays non-positive at I=1, maximal b and q_s",
    ))
}

pub fn bcd_optimize(sc: &Scenario, init: &DecisionVars, opts: &BcdOptions) -> Result<BcdReport> {
    sc.validate()?;
    let mut diagnostics = Vec::new();
    let mut dv = repair(sc, init, opts, &mut diagnostics)?;
    let mut xi = objective_xi(&dv, sc)?;
    let mut history = vec![BcdStep { iteration: 0, block: None, dv, xi }];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    for it in 1..=opts.max_iters {
        iterations = it;
        let start = xi;
        for &block in &opts.order {
            let candidate = match block {
                Block::Period => solve_period(sc, &dv, opts.period_max).map(|s| {
                    diagnostics.push(format!("iter {it} I: {:?} -> {}", s.method, s.value));
                    DecisionVars { period: s.value, ..dv }
                }),
                Block::Batch => solve_batch(sc, &dv, opts.batch_max).map(|s| {
                    diagnostics.push(format!("iter {it} b: {:?} -> {}", s.method, s.value));
                    DecisionVars { batch: s.value, ..dv }
                }),
                Block::Split => solve_split(sc, &dv).map(|s| DecisionVars { split: s.value as usize, ..dv }),
                Block::Sensing => solve_sensing(sc, &dv).map(|s| {
                    diagnostics.push(format!("iter {it} q_s: {} SCA iterations", s.iterations));
                    DecisionVars { q_s: s.q_s, ..dv }
                }),
            };
            let candidate = match candidate {
                Ok(c) => c,
                Err(e) => {
                    diagnostics.push(format!("iter {it} {}: {e}", block.label()));
                    continue;
                }
            };
            let value = xi_or_inf(&candidate, sc);
            if value <= xi && candidate != dv {
                dv = candidate;
                xi = value;
                history.push(BcdStep { iteration: it, block: Some(block), dv, xi });
            }
        }
        if start - xi <= opts.tol * start.abs() {
            termination = Termination::Converged;
            break;
        }
    }
    Ok(BcdReport { history, termination, iterations, diagnostics, positions: sc.positions(dv.q_s)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::tests::scenario;

    fn init() -> DecisionVars {
        DecisionVars { period: 1, split: 1, batch: 8, q_s: 0.9 }
    }

    #[test]
    fn history_is_monotone() {
        let sc = scenario();
        let report = bcd_optimize(&sc, &init(), &BcdOptions::default()).unwrap();
        for w in report.history.windows(2) {
            assert!(w[1].xi <= w[0].xi * (1.0 + 1e-9));
        }
        assert_eq!(report.termination, Termination::Converged);
        assert_eq!(report.positions.len(), 5);
    }

    #[test]
    fn optimal_start_is_a_fixed_point() {
        let sc = scenario();
        let first = bcd_optimize(&sc, &init(), &BcdOptions::default()).unwrap();
        let again = bcd_optimize(&sc, &first.best().dv, &BcdOptions::default()).unwrap();
        assert_eq!(again.iterations, 1);
        assert_eq!(again.history.len(), 1);
        assert_eq!(again.best().xi, first.best().xi);
    }

    #[test]
    fn repairs_infeasible_start() {
        let sc = scenario();
        let bad = DecisionVars { period: 100_000, split: 6, batch: 1, q_s: 0.5 };
        let report = bcd_optimize(&sc, &bad, &BcdOptions::default()).unwrap();
        assert!(report.best().xi.is_finite());
        assert!(!report.diagnostics.is_empty());
    }

    #[test]
    fn hopeless_scenario_reports_infeasibility() {
        let mut sc = scenario();
        sc.constants.eta = 0.01;
        let err = bcd_optimize(&sc, &init(), &BcdOptions::default()).unwrap_err();
        assert!(err.is_infeasible());
    }

    #[test]
    fn delay_scaling_keeps_argmin() {
        let sc = scenario();
        let base = bcd_optimize(&sc, &init(), &BcdOptions::default()).unwrap();
        let mut scaled = sc.clone();
        let c = 4.0;
        scaled.sensing.t_chirp *= c;
        scaled.compute.f_m /= c;
        scaled.profile.shape_const *= c;
        for a in &mut scaled.profile.activation_bits {
            *a *= c;
        }
        let other = bcd_optimize(&scaled, &init(), &BcdOptions::default()).unwrap();
        assert_eq!(other.best().dv, base.best().dv);
        assert!((other.best().xi / base.best().xi - c).abs() < 1e-9);
    }
}
