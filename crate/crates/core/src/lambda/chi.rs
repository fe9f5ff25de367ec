//! χ distribution numerics on top of the regularized incomplete gamma
//! functions: `P(χ_l ≤ x) = P(l/2, x²/2)`.

use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::error::{Error, Result};

const MAX_BISECTIONS: usize = 200;

fn check_dof(l: usize) -> Result<()> {
    if l == 0 {
        return Err(Error::Domain("χ degrees of freedom must be at least 1".into()));
    }
    Ok(())
}

/// `P(χ_l ≤ x)`.
pub fn chi_cdf(l: usize, x: f64) -> Result<f64> {
    check_dof(l)?;
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("χ CDF needs x ≥ 0, got {x}")));
    }
    Ok(cdf(l, x))
}

/// `P(χ_l > x)`, accurate in the upper tail.
pub fn chi_sf(l: usize, x: f64) -> Result<f64> {
    check_dof(l)?;
    if x.is_nan() || x < 0.0 {
        return Err(Error::Domain(format!("χ survival needs x ≥ 0, got {x}")));
    }
    Ok(sf(l, x))
}

pub(crate) fn cdf(l: usize, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else {
        gamma_lr(l as f64 / 2.0, x * x / 2.0)
    }
}

pub(crate) fn sf(l: usize, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x.is_infinite() {
        0.0
    } else {
        gamma_ur(l as f64 / 2.0, x * x / 2.0)
    }
}

/// Inverse of [`chi_cdf`] for `p ∈ [0, 1)`.
pub fn chi_quantile(l: usize, p: f64) -> Result<f64> {
    check_dof(l)?;
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!("χ quantile needs p in [0, 1), got {p}")));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p < 0.5 {
        Ok(solve_increasing(|x| cdf(l, x), p))
    } else {
        Ok(isf(l, 1.0 - p))
    }
}

/// Upper-tail quantile: the `x` with `P(χ_l > x) = alpha`, `alpha ∈ (0, 1]`.
pub(crate) fn isf(l: usize, alpha: f64) -> f64 {
    if alpha >= 1.0 {
        return 0.0;
    }
    solve_increasing(|x| -sf(l, x), -alpha)
}

/// Finds `x ≥ 0` with `f(x) = target` for a nondecreasing `f` with
/// `f(0) ≤ target`, by bracket expansion followed by bisection to full
/// floating-point resolution.
pub(crate) fn solve_increasing(f: impl Fn(f64) -> f64, target: f64) -> f64 {
    let mut lo = 0.0;
    let mut hi = 1.0;
    while f(hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return f64::INFINITY;
        }
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
