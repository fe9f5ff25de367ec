//! Tuning sequences for Group SLOPE.
//!
//! * [`lambda_max`]: per level `i`, the largest weighted χ upper quantile
//!   over all groups. Controls the group FDR when groups are orthogonal.
//! * [`lambda_mean`]: inverts the mean of the scaled χ CDFs instead of
//!   taking the maximum, which is less conservative.
//! * [`lambda_corrected_equal`] / [`lambda_corrected_general`]: inflate the
//!   sequence for i.i.d. Gaussian designs, where the residual correlation of
//!   null groups with the fitted signal widens their null distribution.

mod chi;

use serde::Deserialize;

pub use chi::{chi_cdf, chi_quantile, chi_sf};

use crate::error::{Error, Result};
use crate::sorted_l1::LambdaSeq;

/// Group structure and target level for λ generation.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    ranks: Vec<usize>,
    weights: Vec<f64>,
    q: f64,
    n: Option<usize>,
}

impl GroupSpec {
    pub fn new(ranks: Vec<usize>, weights: Vec<f64>, q: f64) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::EmptyDesign);
        }
        if ranks.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} ranks but {} weights",
                ranks.len(),
                weights.len()
            )));
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::Domain(format!("target level q must lie in (0, 1), got {q}")));
        }
        if ranks.contains(&0) {
            return Err(Error::Domain("group ranks must be at least 1".into()));
        }
        if let Some(g) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidWeight {
                group: g + 1,
                value: weights[g],
            });
        }
        Ok(GroupSpec {
            ranks,
            weights,
            q,
            n: None,
        })
    }

    /// `m` groups of common rank `l` and weight `w`.
    pub fn homogeneous(m: usize, l: usize, w: f64, q: f64) -> Result<Self> {
        Self::new(vec![l; m], vec![w; m], q)
    }

    /// Sets the sample size needed by the Gaussian-design corrections.
    pub fn with_n(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    pub fn m(&self) -> usize {
        self.ranks.len()
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn n(&self) -> Option<usize> {
        self.n
    }

    /// Distinct `(rank, weight)` pairs with their multiplicities, in first-seen order.
    fn classes(&self) -> Vec<Class> {
        let mut out: Vec<Class> = Vec::new();
        for (&rank, &weight) in self.ranks.iter().zip(&self.weights) {
            match out.iter_mut().find(|c| c.rank == rank && c.weight == weight) {
                Some(c) => c.count += 1,
                None => out.push(Class { rank, weight, count: 1 }),
            }
        }
        out
    }

    fn required_n(&self) -> Result<usize> {
        self.n
            .ok_or_else(|| Error::Domain("sample size n is required for corrected sequences".into()))
    }
}

#[derive(Debug, Clone, Copy)]
struct Class {
    rank: usize,
    weight: f64,
    count: usize,
}

/// How per-group weights are derived from group ranks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// `w_i = √l_i`
    SqrtRank,
    /// `w_i = 1`
    Unit,
    /// `w_i = l_i`
    Rank,
}

impl WeightMode {
    pub fn weights(self, ranks: &[usize]) -> Vec<f64> {
        ranks
            .iter()
            .map(|&l| match self {
                WeightMode::SqrtRank => (l as f64).sqrt(),
                WeightMode::Unit => 1.0,
                WeightMode::Rank => l as f64,
            })
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            WeightMode::SqrtRank => "sqrt-rank",
            WeightMode::Unit => "unit",
            WeightMode::Rank => "rank",
        }
    }
}

impl std::str::FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sqrt-rank" => Ok(WeightMode::SqrtRank),
            "unit" => Ok(WeightMode::Unit),
            "rank" => Ok(WeightMode::Rank),
            other => Err(Error::Domain(format!(
                "unknown weights mode '{other}' (expected sqrt-rank, unit or rank)"
            ))),
        }
    }
}

/// Which λ construction to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaMethod {
    Max,
    Mean,
    CorrectedEqual,
    CorrectedGeneral,
}

impl LambdaMethod {
    pub fn generate(self, spec: &GroupSpec) -> Result<LambdaSeq> {
        match self {
            LambdaMethod::Max => lambda_max(spec),
            LambdaMethod::Mean => lambda_mean(spec),
            LambdaMethod::CorrectedEqual => lambda_corrected_equal(spec),
            LambdaMethod::CorrectedGeneral => lambda_corrected_general(spec),
        }
    }

    pub fn needs_n(self) -> bool {
        matches!(self, LambdaMethod::CorrectedEqual | LambdaMethod::CorrectedGeneral)
    }

    pub fn name(self) -> &'static str {
        match self {
            LambdaMethod::Max => "max",
            LambdaMethod::Mean => "mean",
            LambdaMethod::CorrectedEqual => "corrected-equal",
            LambdaMethod::CorrectedGeneral => "corrected-general",
        }
    }
}

impl std::str::FromStr for LambdaMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(LambdaMethod::Max),
            "mean" => Ok(LambdaMethod::Mean),
            "corrected-equal" => Ok(LambdaMethod::CorrectedEqual),
            "corrected-general" => Ok(LambdaMethod::CorrectedGeneral),
            other => Err(Error::Domain(format!(
                "unknown lambda method '{other}' (expected max, mean, corrected-equal or corrected-general)"
            ))),
        }
    }
}

/// Upper-tail level `q·i/m` for 1-based `i`.
fn level(q: f64, i: usize, m: usize) -> f64 {
    q * i as f64 / m as f64
}

/// `λ_i = max_j w_j⁻¹ F⁻¹_{χ_{l_j}}(1 − q·i/m)`.
pub fn lambda_max(spec: &GroupSpec) -> Result<LambdaSeq> {
    let m = spec.m();
    let classes = spec.classes();
    let values = (1..=m)
        .map(|i| {
            let alpha = level(spec.q, i, m);
            classes
                .iter()
                .map(|c| chi::isf(c.rank, alpha) / c.weight)
                .fold(0.0, f64::max)
        })
        .collect();
    LambdaSeq::new(values)
}

/// Solves `Σ_j count_j · P(χ_{l_j} > w_j x / s_j) = total` for `x`.
///
/// The left side is the mixture survival function scaled by `m`; `scales`
/// holds one `s_j` per class (all ones for the uncorrected mixture).
fn mixture_isf(classes: &[Class], scales: &[f64], total: f64) -> f64 {
    chi::solve_increasing(
        |x| {
            -classes
                .iter()
                .zip(scales)
                .map(|(c, s)| c.count as f64 * chi::sf(c.rank, c.weight * x / s))
                .sum::<f64>()
        },
        -total,
    )
}

fn is_homogeneous(classes: &[Class]) -> bool {
    classes.len() == 1
}

/// `λ^mean_r = F̄⁻¹(1 − q·r/m)` with `F̄(x) = m⁻¹ Σ_i F_{χ_{l_i}}(w_i x)`.
///
/// With one `(l, w)` class the mixture is a single scaled χ law and the
/// result is computed through [`lambda_max`], so the two coincide exactly.
pub fn lambda_mean(spec: &GroupSpec) -> Result<LambdaSeq> {
    let classes = spec.classes();
    if is_homogeneous(&classes) {
        return lambda_max(spec);
    }
    lambda_mean_mixture(spec)
}

/// [`lambda_mean`] without the homogeneous shortcut.
pub(crate) fn lambda_mean_mixture(spec: &GroupSpec) -> Result<LambdaSeq> {
    let classes = spec.classes();
    let ones = vec![1.0; classes.len()];
    let values = (1..=spec.m())
        .map(|r| mixture_isf(&classes, &ones, spec.q * r as f64))
        .collect();
    LambdaSeq::new(values)
}

/// Variance inflation `S = √((n − l·s)/n + w²‖λ^S‖²/(n − l·s − 1))` for `s`
/// already-selected groups. `None` once the denominators degenerate.
fn correction_scale(n: usize, rank: usize, weight: f64, s: usize, sum_sq: f64) -> Option<f64> {
    let n = n as f64;
    let used = (rank * s) as f64;
    let denom = n - used - 1.0;
    if denom <= 0.0 {
        return None;
    }
    let scale = ((n - used) / n + weight * weight * sum_sq / denom).sqrt();
    scale.is_finite().then_some(scale)
}

/// Runs the sequential correction: `first` is λ_1 and `next(i, ‖λ^S‖²)`
/// proposes λ*_i, or `None` when the correction is undefined. Once a
/// proposal exceeds its predecessor (or is undefined) the rest of the
/// sequence is held at the previous value.
fn sequential_correction(m: usize, first: f64, next: impl Fn(usize, f64) -> Option<f64>) -> Result<LambdaSeq> {
    let mut values = Vec::with_capacity(m);
    values.push(first);
    let mut sum_sq = first * first;
    for i in 2..=m {
        let prev = values[i - 2];
        match next(i, sum_sq) {
            Some(v) if v <= prev => {
                values.push(v);
                sum_sq += v * v;
            }
            _ => {
                values.resize(m, prev);
                break;
            }
        }
    }
    LambdaSeq::new(values)
}

/// Gaussian-design correction for groups of common rank `l` and weight `w`.
pub fn lambda_corrected_equal(spec: &GroupSpec) -> Result<LambdaSeq> {
    let n = spec.required_n()?;
    let classes = spec.classes();
    if !is_homogeneous(&classes) {
        return Err(Error::Domain(
            "corrected-equal needs a common rank and weight for all groups".into(),
        ));
    }
    let Class { rank, weight, .. } = classes[0];
    if n <= rank + 1 {
        return Err(Error::Domain(format!(
            "sample size n = {n} must exceed l + 1 = {}",
            rank + 1
        )));
    }
    let m = spec.m();
    let first = chi::isf(rank, level(spec.q, 1, m)) / weight;
    sequential_correction(m, first, |i, sum_sq| {
        let scale = correction_scale(n, rank, weight, i - 1, sum_sq)?;
        let v = scale / weight * chi::isf(rank, level(spec.q, i, m));
        v.is_finite().then_some(v)
    })
}

/// Gaussian-design correction for arbitrary ranks and weights.
///
/// Each λ*_i inverts `F̄_S(x) = m⁻¹ Σ_j F_{χ_{l_j}}(w_j x / S_j)`, the mean
/// CDF of the scaled laws `(S_j / w_j)·χ_{l_j}`.
pub fn lambda_corrected_general(spec: &GroupSpec) -> Result<LambdaSeq> {
    let n = spec.required_n()?;
    let classes = spec.classes();
    let max_rank = classes.iter().map(|c| c.rank).max().unwrap_or(1);
    if n <= max_rank + 1 {
        return Err(Error::Domain(format!(
            "sample size n = {n} must exceed the largest rank plus one ({})",
            max_rank + 1
        )));
    }
    let m = spec.m();
    let ones = vec![1.0; classes.len()];
    let first = mixture_isf(&classes, &ones, spec.q);
    sequential_correction(m, first, |i, sum_sq| {
        let scales = classes
            .iter()
            .map(|c| correction_scale(n, c.rank, c.weight, i - 1, sum_sq))
            .collect::<Option<Vec<f64>>>()?;
        let v = mixture_isf(&classes, &scales, spec.q * i as f64);
        v.is_finite().then_some(v)
    })
}

/// Signal magnitude `B(m, l) = √(4 ln m / (1 − m^{−2/l}) − l)`, an upper
/// bound proxy for the expected maximum of `m` independent `χ_l` variables
/// with the `l` noise degrees removed.
pub fn signal_strength(m: usize, l: usize) -> Result<f64> {
    if l == 0 {
        return Err(Error::Domain("rank l must be at least 1".into()));
    }
    let mf = m as f64;
    let radicand = 4.0 * mf.ln() / (1.0 - mf.powf(-2.0 / l as f64)) - l as f64;
    if radicand.is_nan() || radicand <= 0.0 {
        return Err(Error::Domain(format!(
            "signal strength undefined for m = {m}, l = {l} (nonpositive radicand)"
        )));
    }
    Ok(radicand.sqrt())
}
