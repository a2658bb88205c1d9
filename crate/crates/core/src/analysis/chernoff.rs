//! Finite-size fluctuation analysis via multiplicative Chernoff tail bounds.

use crate::{Error, Result};

const MAX_ITER: usize = 200;

/// Upper-tail exponent: P[X ≥ k] ≤ exp(−(k−μ)²/(k+μ)) for μ ≤ k.
#[inline]
fn upper_tail_log(mu: f64, k: f64) -> f64 {
    -(k - mu).powi(2) / (k + mu)
}

/// Lower-tail exponent: P[X ≤ k] ≤ exp(−(μ−k)²/(2μ)) for μ ≥ k.
#[inline]
fn lower_tail_log(mu: f64, k: f64) -> f64 {
    -(mu - k).powi(2) / (2.0 * mu)
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
    // Invariant: f(lo) ≤ 0 ≤ f(hi).
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * (hi.abs() + 1.0) {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::NoConvergence(format!(
        "chernoff bisection stalled in [{lo}, {hi}]"
    )))
}

/// Expectation interval for an observed count, obtained by numerically
/// inverting the Chernoff tail bounds at failure probability `xi` per side.
///
/// The lower endpoint is the smallest mean whose upper tail at the
/// observation still exceeds `xi` (clamped at 0 when even a zero mean is not
/// excluded); the upper endpoint is the largest mean whose lower tail
/// exceeds `xi`.
pub fn chernoff_bounds(observed: f64, xi: f64) -> Result<(f64, f64)> {
    if !(observed >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "chernoff_bounds: negative observation {observed}"
        )));
    }
    if !(xi > 0.0 && xi < 1.0) {
        return Err(Error::InvalidInput(format!(
            "chernoff_bounds: failure probability {xi} outside (0, 1)"
        )));
    }
    let k = observed;
    let log_xi = xi.ln();

    // Lower bound: tail probability falls as μ decreases below k.
    let lower = if k == 0.0 || upper_tail_log(0.0, k) >= log_xi {
        0.0
    } else {
        // f increases with μ: f(0) < 0 ≤ f(k) = −log ξ... sign convention:
        // want root of upper_tail_log(μ) − log ξ, negative at μ→0.
        bisect(0.0, k, |mu| upper_tail_log(mu, k) - log_xi)?
    };

    // Upper bound: tail probability falls as μ grows above k; bracket by
    // doubling.
    let mut hi = k + 2.0 * (-log_xi) + 1.0;
    while lower_tail_log(hi, k) - log_xi > 0.0 {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::NoConvergence("chernoff upper bracket diverged".into()));
        }
    }
    // Here the function decreases in μ, so negate to keep the bisect invariant.
    let upper = bisect(k, hi, |mu| log_xi - lower_tail_log(mu, k))?;

    Ok((lower, upper))
}
