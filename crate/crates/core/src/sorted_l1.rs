//! The sorted-ℓ1 norm `J_λ(b) = Σ λ_i |b|_(i)`, its proximal operator, its
//! dual norm and the dual unit ball `C_λ`.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// A nonincreasing, nonnegative tuning sequence `λ_1 ≥ … ≥ λ_m ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSeq(Vec<f64>);

impl LambdaSeq {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidLambda(format!(
                "entry {} = {} is negative or non-finite",
                i + 1,
                values[i]
            )));
        }
        if let Some(i) = values.windows(2).position(|w| w[1] > w[0]) {
            return Err(Error::InvalidLambda(format!(
                "sequence increases at position {} ({} < {})",
                i + 2,
                values[i],
                values[i + 1]
            )));
        }
        Ok(LambdaSeq(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when at least one entry is strictly positive, i.e. `J_λ` is a norm.
    pub fn is_norm(&self) -> bool {
        self.0.first().is_some_and(|v| *v > 0.0)
    }

    /// Multiplies every entry by `factor ≥ 0`.
    pub fn scaled(&self, factor: f64) -> LambdaSeq {
        debug_assert!(factor >= 0.0);
        LambdaSeq(self.0.iter().map(|v| v * factor).collect())
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

fn check_len(lambda: &LambdaSeq, len: usize) -> Result<()> {
    if lambda.len() != len {
        return Err(Error::DimensionMismatch(format!(
            "lambda has length {}, vector has length {}",
            lambda.len(),
            len
        )));
    }
    Ok(())
}

/// Indices of `x` ordered by decreasing magnitude; ties keep their original order.
pub(crate) fn order_by_magnitude(x: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[b].abs().partial_cmp(&x[a].abs()).unwrap_or(Ordering::Equal));
    order
}

fn sorted_magnitudes(x: &[f64]) -> Vec<f64> {
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
    mags
}

/// Evaluates `J_λ(b)`.
pub fn eval_j(lambda: &LambdaSeq, b: &[f64]) -> Result<f64> {
    check_len(lambda, b.len())?;
    Ok(eval_j_unchecked(lambda.values(), b))
}

pub(crate) fn eval_j_unchecked(lambda: &[f64], b: &[f64]) -> f64 {
    sorted_magnitudes(b).iter().zip(lambda).map(|(m, l)| m * l).sum()
}

/// Proximal operator of the sorted-ℓ1 norm:
/// `argmin_b ½‖y − b‖² + J_λ(b)`.
///
/// Stack-based pool-adjacent-violators on `|y|_(i) − λ_i`: adjacent blocks
/// are averaged until the block values are nonincreasing, then clamped at
/// zero, unsorted and re-signed.
pub fn prox_sorted_l1(y: &[f64], lambda: &LambdaSeq) -> Result<Vec<f64>> {
    check_len(lambda, y.len())?;
    let mut out = vec![0.0; y.len()];
    prox_sorted_l1_into(y, lambda.values(), &mut out);
    Ok(out)
}

struct Block {
    start: usize,
    end: usize,
    sum: f64,
}

impl Block {
    fn value(&self) -> f64 {
        self.sum / (self.end - self.start) as f64
    }
}

pub(crate) fn prox_sorted_l1_into(y: &[f64], lambda: &[f64], out: &mut [f64]) {
    let order = order_by_magnitude(y);
    let mut stack: Vec<Block> = Vec::with_capacity(y.len());
    for (rank, &idx) in order.iter().enumerate() {
        stack.push(Block {
            start: rank,
            end: rank + 1,
            sum: y[idx].abs() - lambda[rank],
        });
        while stack.len() > 1 {
            let top = &stack[stack.len() - 1];
            let below = &stack[stack.len() - 2];
            if top.value() < below.value() {
                break;
            }
            let top = stack.pop().unwrap();
            let below = stack.last_mut().unwrap();
            below.end = top.end;
            below.sum += top.sum;
        }
    }
    for block in &stack {
        let v = block.value().max(0.0);
        for &idx in &order[block.start..block.end] {
            out[idx] = if v == 0.0 { 0.0 } else { v.copysign(y[idx]) };
        }
    }
}

/// Dual norm of `J_λ`: `max_k (Σ_{i≤k} |x|_(i)) / (Σ_{i≤k} λ_i)`.
pub fn dual_norm(lambda: &LambdaSeq, x: &[f64]) -> Result<f64> {
    check_len(lambda, x.len())?;
    if !lambda.is_norm() {
        return Err(Error::InvalidLambda(
            "dual norm needs at least one positive entry".into(),
        ));
    }
    Ok(dual_norm_unchecked(lambda.values(), x))
}

pub(crate) fn dual_norm_unchecked(lambda: &[f64], x: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    let mut best: f64 = 0.0;
    for (m, l) in sorted_magnitudes(x).iter().zip(lambda) {
        num += m;
        den += l;
        best = best.max(num / den);
    }
    best
}

/// Membership in `C_λ = {x : Σ_{i≤k} |x|_(i) ≤ Σ_{i≤k} λ_i, k = 1..m}`,
/// up to a relative slack `tol` on the dual norm.
pub fn in_c_lambda(lambda: &LambdaSeq, x: &[f64], tol: f64) -> bool {
    if lambda.len() != x.len() {
        return false;
    }
    if !lambda.is_norm() {
        return x.iter().all(|v| *v == 0.0);
    }
    dual_norm_unchecked(lambda.values(), x) <= 1.0 + tol
}
