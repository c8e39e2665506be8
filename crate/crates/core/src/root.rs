//! Safeguarded Newton iteration for scalar roots inside a sign-change bracket.
//!
//! Each step tries Newton from the current iterate and falls back to bisection
//! when the Newton point leaves the bracket or fails to halve the residual.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    pub x_tol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self { x_tol: 1e-12, max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub iterations: usize,
    pub newton_steps: usize,
}

/// Finds a root of `f` in `[lo, hi]`. `f(lo)` and `f(hi)` must differ in sign
/// (or one of them be zero); returns `None` otherwise.
pub fn newton_bisect<F, D>(f: F, df: D, lo: f64, hi: f64, opts: RootOptions) -> Option<Root>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let (mut a, mut b) = (lo.min(hi), lo.max(hi));
    let (fa, fb) = (f(a), f(b));
    if fa == 0.0 {
        return Some(Root { x: a, iterations: 0, newton_steps: 0 });
    }
    if fb == 0.0 {
        return Some(Root { x: b, iterations: 0, newton_steps: 0 });
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return None;
    }
    let a_negative = fa < 0.0;

    let mut x = 0.5 * (a + b);
    let mut fx = f(x);
    let mut newton_steps = 0;
    for it in 1..=opts.max_iter {
        if fx == 0.0 {
            return Some(Root { x, iterations: it, newton_steps });
        }
        // Shrink the bracket around x.
        if (fx < 0.0) == a_negative {
            a = x;
        } else {
            b = x;
        }
        if b - a <= opts.x_tol * (1.0 + x.abs()) {
            return Some(Root { x: 0.5 * (a + b), iterations: it, newton_steps });
        }

        let d = df(x);
        let newton = x - fx / d;
        let candidate = if d != 0.0 && d.is_finite() && newton > a && newton < b {
            let fn_ = f(newton);
            if fn_.abs() <= 0.5 * fx.abs() {
                newton_steps += 1;
                Some((newton, fn_))
            } else {
                None
            }
        } else {
            None
        };
        let (nx, nfx) = candidate.unwrap_or_else(|| {
            let mid = 0.5 * (a + b);
            (mid, f(mid))
        });
        if (nx - x).abs() <= opts.x_tol * (1.0 + nx.abs()) {
            return Some(Root { x: nx, iterations: it, newton_steps });
        }
        x = nx;
        fx = nfx;
    }
    Some(Root { x, iterations: opts.max_iter, newton_steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_two() {
        let r = newton_bisect(|x| x * x - 2.0, |x| 2.0 * x, 0.0, 2.0, RootOptions::default())
            .unwrap();
        assert!((r.x - 2f64.sqrt()).abs() < 1e-12);
        assert!(r.newton_steps > 0);
    }

    #[test]
    fn no_sign_change() {
        assert!(newton_bisect(|x| x * x + 1.0, |x| 2.0 * x, -1.0, 1.0, RootOptions::default())
            .is_none());
    }

    #[test]
    fn bad_derivative_falls_back_to_bisection() {
        // Derivative deliberately wrong: convergence comes from bisection alone.
        let r = newton_bisect(|x| x.powi(3) - 8.0, |_| 1e-30, 0.0, 5.0, RootOptions::default())
            .unwrap();
        assert!((r.x - 2.0).abs() < 1e-10);
    }

    #[test]
    fn endpoint_root() {
        let r = newton_bisect(|x| x - 1.0, |_| 1.0, 1.0, 3.0, RootOptions::default()).unwrap();
        assert_eq!(r.x, 1.0);
    }
}
