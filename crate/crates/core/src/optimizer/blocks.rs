//! Single-block sub-solvers.
//!
//! The period and batch blocks relax the integer to a real, locate the
//! stationary point of the objective with safeguarded Newton inside a
//! sign-change bracket of the analytic derivative, and round to the better of
//! floor and ceiling. Without a bracket they fall back to enumeration. The split
//! block is enumerated. The sensing block runs successive convex approximation
//! with a linearised bound denominator.

use crate::error::{Error, Result};
use crate::geometry::Placement;
use crate::root::{newton_bisect, RootOptions};

use super::{xi_or_inf, DecisionVars, Scenario, XiSlice};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockMethod {
    /// Derivative already non-negative at the smallest feasible value.
    LowerBoundary,
    /// Stationary point found by Newton, then rounded.
    Newton,
    BruteForce,
    Traversal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockSolution {
    pub value: u32,
    pub xi: f64,
    /// Relaxed stationary point when one was located.
    pub stationary: Option<f64>,
    pub method: BlockMethod,
}

const SCAN_POINTS: usize = 64;

/// Minimises a unimodal-in-practice integer objective over `[lo, hi]`, all of
/// which are feasible.
fn solve_integer<F, D>(f: F, df: D, lo: u32, hi: u32) -> BlockSolution
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let brute = |f: &F| {
        let (mut best, mut best_xi) = (lo, f(lo as f64));
        for v in lo + 1..=hi {
            let xi = f(v as f64);
            if xi < best_xi {
                best = v;
                best_xi = xi;
            }
        }
        BlockSolution { value: best, xi: best_xi, stationary: None, method: BlockMethod::BruteForce }
    };
    if lo == hi {
        return BlockSolution { value: lo, xi: f(lo as f64), stationary: None, method: BlockMethod::Traversal };
    }
    let (a, b) = (lo as f64, hi as f64);
    if df(a) >= 0.0 {
        return BlockSolution { value: lo, xi: f(a), stationary: None, method: BlockMethod::LowerBoundary };
    }
    // Log-spaced sign-change scan of the derivative.
    let ratio = (b / a).ln() / (SCAN_POINTS - 1) as f64;
    let mut left = a;
    let mut bracket = None;
    for k in 1..SCAN_POINTS {
        let x = if k == SCAN_POINTS - 1 { b } else { a * (ratio * k as f64).exp() };
        let d = df(x);
        if d.is_nan() {
            break;
        }
        if d >= 0.0 {
            bracket = Some((left, x));
            break;
        }
        left = x;
    }
    let Some((l, r)) = bracket else {
        return brute(&f);
    };
    let Some(root) = newton_bisect(&df, |x| {
        let h = 1e-6 * x.max(1.0);
        (df(x + h) - df(x - h)) / (2.0 * h)
    }, l, r, RootOptions::default()) else {
        return brute(&f);
    };
    let x = root.x;
    let floor = (x.floor() as u32).clamp(lo, hi);
    let ceil = (x.ceil() as u32).clamp(lo, hi);
    let (f_floor, f_ceil) = (f(floor as f64), f(ceil as f64));
    let (value, xi) = if f_ceil < f_floor { (ceil, f_ceil) } else { (floor, f_floor) };
    BlockSolution { value, xi, stationary: Some(x), method: BlockMethod::Newton }
}

/// Optimal aggregation period `I` in `[1, period_max]` for fixed `(L_c, b, q_s)`.
pub fn solve_period(sc: &Scenario, dv: &DecisionVars, period_max: u32) -> Result<BlockSolution> {
    sc.check_constraints(&DecisionVars { period: 1, ..*dv })?;
    let slice = sc.slice(dv.split, dv.q_s)?;
    let batch = dv.batch as f64;
    let feasible = |i: u32| slice.terms.denominator(i as f64, batch) > 0.0;
    if !feasible(1) {
        return Err(Error::BoundInfeasible { denominator: slice.terms.denominator(1.0, batch) });
    }
    // Feasible periods form a prefix [1, hi].
    let g = slice.terms.drift_coeff();
    let mut hi = if g > 0.0 {
        let d0 = slice.terms.fixed_part() - slice.terms.gamma2 / batch;
        ((d0 / g).sqrt().floor().min(period_max as f64) as u32).max(1)
    } else {
        period_max
    };
    while hi > 1 && !feasible(hi) {
        hi -= 1;
    }
    while hi < period_max && feasible(hi + 1) {
        hi += 1;
    }
    let sol = solve_integer(
        |i| slice.value(i, batch),
        |i| slice.d_period(i, batch),
        1,
        hi,
    );
    Ok(sol)
}

/// Optimal batch size `b` in `[1, batch_max]` for fixed `(I, L_c, q_s)`.
pub fn solve_batch(sc: &Scenario, dv: &DecisionVars, batch_max: u32) -> Result<BlockSolution> {
    sc.check_constraints(&DecisionVars { batch: 1, ..*dv })?;
    let slice = sc.slice(dv.split, dv.q_s)?;
    let period = dv.period as f64;
    let feasible = |b: u32| slice.terms.denominator(period, b as f64) > 0.0;
    // Feasible batches form a suffix [lo, batch_max].
    let d1 = slice.terms.fixed_part() - slice.terms.drift_coeff() * period * period;
    if !(d1 > 0.0) || !feasible(batch_max) {
        return Err(Error::BoundInfeasible {
            denominator: slice.terms.denominator(period, batch_max as f64),
        });
    }
    let mut lo = if slice.terms.gamma2 > 0.0 {
        ((slice.terms.gamma2 / d1).floor().min(batch_max as f64) as u32).max(1)
    } else {
        1
    };
    while lo < batch_max && !feasible(lo) {
        lo += 1;
    }
    while lo > 1 && feasible(lo - 1) {
        lo -= 1;
    }
    Ok(solve_integer(
        |b| slice.value(period, b),
        |b| slice.d_batch(period, b),
        lo,
        batch_max,
    ))
}

/// Optimal split layer by traversal; ties go to the shallower split.
pub fn solve_split(sc: &Scenario, dv: &DecisionVars) -> Result<BlockSolution> {
    let mut best: Option<BlockSolution> = None;
    for split in 1..=sc.n_layers() {
        let xi = xi_or_inf(&DecisionVars { split, ..*dv }, sc);
        if xi.is_finite() && best.is_none_or(|b| xi < b.xi) {
            best = Some(BlockSolution {
                value: split as u32,
                xi,
                stationary: None,
                method: BlockMethod::Traversal,
            });
        }
    }
    best.ok_or_else(|| Error::infeasible("split layer", "no split layer admits a feasible bound"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingSolution {
    pub q_s: f64,
    pub xi: f64,
    pub positions: Vec<Placement>,
    pub iterations: usize,
}

const COARSE_POINTS: usize = 33;
const Q_TOL: f64 = 1e-5;

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    // Compare the interior estimate with both ends so boundary optima are exact.
    let mid = 0.5 * (a + b);
    [(mid, f(mid)), (a, f(a)), (b, f(b))]
        .into_iter()
        .fold((mid, f64::INFINITY), |acc, p| if p.1 < acc.1 { p } else { acc })
}

/// Optimal common sensing probability for fixed `(I, L_c, b)` and the matching UAV positions.
///
/// Each iteration keeps the delay numerator exact and replaces the bound
/// denominator by its tangent at the current iterate, minimises that surrogate
/// over a trust interval, and accepts the step only if the true objective
/// decreases. The first iterate is the best point of a coarse scan of the
/// feasible range.
pub fn solve_sensing(sc: &Scenario, dv: &DecisionVars) -> Result<SensingSolution> {
    let (lo, hi) = sc.q_range();
    if !(lo < hi) {
        return Err(Error::infeasible("minimum sensing elevation", "empty sensing-probability range"));
    }
    let xi = |q: f64| xi_or_inf(&DecisionVars { q_s: q, ..*dv }, sc);

    let (mut q, mut best) = (0..COARSE_POINTS)
        .map(|k| {
            let q = if k == COARSE_POINTS - 1 { hi } else { lo + (hi - lo) * k as f64 / (COARSE_POINTS - 1) as f64 };
            (q, xi(q))
        })
        .fold((lo, f64::INFINITY), |acc, p| if p.1 < acc.1 { p } else { acc });
    if !best.is_finite() {
        return Err(Error::infeasible(
            "convergence bound",
            "no sensing probability in range gives a positive bound denominator",
        ));
    }

    let period = dv.period as f64;
    let batch = dv.batch as f64;
    let mut radius = (hi - lo) / COARSE_POINTS as f64;
    let mut iterations = 0;
    while iterations < 200 {
        iterations += 1;
        let here = sc.slice(dv.split, q)?;
        let den0 = here.terms.denominator(period, batch);
        let slope = sc.d_denominator_dq(q)?;
        let surrogate = |x: f64| {
            let den = den0 + slope * (x - q);
            if !(den > 0.0) {
                return f64::INFINITY;
            }
            match sc.slice(dv.split, x) {
                Ok(XiSlice { vartheta, per_sample_cost, upload, .. }) => {
                    vartheta * (period * batch * per_sample_cost + upload) / (period * den)
                }
                Err(_) => f64::INFINITY,
            }
        };
        let (a, b) = ((q - radius).max(lo), (q + radius).min(hi));
        let (candidate, _) = golden_min(surrogate, a, b, 1e-10);
        let value = xi(candidate);
        if value < best {
            let step = (candidate - q).abs();
            q = candidate;
            best = value;
            if step < Q_TOL {
                break;
            }
            radius = (2.0 * step).max(radius);
        } else {
            radius *= 0.5;
            if radius < Q_TOL * 0.1 {
                break;
            }
        }
    }
    Ok(SensingSolution { q_s: q, xi: best, positions: sc.positions(q)?, iterations })
}
