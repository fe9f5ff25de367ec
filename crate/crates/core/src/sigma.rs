//! Noise-level estimation interleaved with Group SLOPE fits.
//!
//! Starting from the empty support, each round estimates
//! `σ̂² = RSS(S) / dof(S)` from a least-squares fit on the columns of the
//! current support `S`, refits with `σ̂`, and replaces `S` by the new
//! support until it stops changing.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::groups::{StandardizedDesign, DEFAULT_RANK_TOL};
use crate::linalg::jacobi_svd;
use crate::solver::{DenseSolver, GSlopeFit, SolverConfig};
use crate::sorted_l1::LambdaSeq;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaConfig {
    /// Include an intercept column in the least-squares fits.
    pub intercept: bool,
    /// Hard cap on estimation rounds.
    pub max_rounds: usize,
}

impl Default for SigmaConfig {
    fn default() -> Self {
        SigmaConfig {
            intercept: true,
            max_rounds: 100,
        }
    }
}

/// One estimation round: the support used for the residual and the
/// resulting σ̂.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaRound {
    pub support: Vec<usize>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaTrace {
    pub iterations: Vec<SigmaRound>,
    /// The refitted support equalled the support used for σ̂.
    pub converged: bool,
    /// A support reappeared after other supports; the round with the
    /// smallest σ̂ in the cycle was returned.
    pub cycle_detected: bool,
}

impl SigmaTrace {
    /// σ̂ of the returned fit.
    pub fn sigma(&self) -> Option<f64> {
        self.iterations.last().map(|r| r.sigma)
    }
}

/// Residual sum of squares of least squares on `columns` of `x` (plus an
/// intercept when requested) and its degrees of freedom `n − rank`.
///
/// Rank-deficient column sets are handled through the minimum-norm solution;
/// the rank is decided at [`DEFAULT_RANK_TOL`] relative to the largest
/// singular value.
pub fn ols_rss(y: &DVector<f64>, x: &DMatrix<f64>, columns: &[usize], with_intercept: bool) -> Result<(f64, usize)> {
    let n = y.len();
    if x.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "response has length {n}, design has {} rows",
            x.nrows()
        )));
    }
    if let Some(&j) = columns.iter().find(|&&j| j >= x.ncols()) {
        return Err(Error::DimensionMismatch(format!(
            "column {j} out of range for {} columns",
            x.ncols()
        )));
    }
    let width = columns.len() + usize::from(with_intercept);
    let mut basis = DMatrix::zeros(n, width);
    if with_intercept {
        basis.column_mut(0).fill(1.0);
    }
    for (k, &j) in columns.iter().enumerate() {
        basis.set_column(k + usize::from(with_intercept), &x.column(j));
    }
    let (rss, rank) = project_out(y, basis);
    if rank >= n {
        return Err(Error::DofExhausted { columns: rank, n });
    }
    Ok((rss, n - rank))
}

fn project_out(y: &DVector<f64>, basis: DMatrix<f64>) -> (f64, usize) {
    if basis.ncols() == 0 {
        return (y.norm_squared(), 0);
    }
    let svd = jacobi_svd(&basis);
    let u = svd.u;
    let top = svd.singular_values.max();
    let mut resid = y.clone();
    let mut rank = 0;
    for (k, s) in svd.singular_values.iter().enumerate() {
        if top > 0.0 && *s >= DEFAULT_RANK_TOL * top {
            let col = u.column(k);
            let coef = col.dot(y);
            resid.axpy(-coef, &col, 1.0);
            rank += 1;
        }
    }
    (resid.norm_squared(), rank)
}

/// Runs the estimation loop on a dense design.
pub fn estimate_sigma_gslope(
    y: &DVector<f64>,
    design: &StandardizedDesign,
    lambda: &LambdaSeq,
    solver: &SolverConfig,
    config: &SigmaConfig,
) -> Result<(GSlopeFit, SigmaTrace)> {
    let dense = DenseSolver::new(design, y, solver)?;
    let offsets = design.offsets();
    estimate_sigma_with(
        y.len(),
        config,
        |support| {
            let columns: Vec<usize> = support.iter().flat_map(|&g| offsets[g]..offsets[g + 1]).collect();
            ols_rss(y, design.x_tilde(), &columns, config.intercept)
        },
        |sigma| dense.fit(lambda, sigma),
        |fit| fit.selected.clone(),
    )
}

/// Generic loop: `rss(S)` gives `(RSS, dof)`, `fit(σ)` refits and
/// `support(fit)` reads the selected groups.
pub(crate) fn estimate_sigma_with<F>(
    n: usize,
    config: &SigmaConfig,
    mut rss: impl FnMut(&[usize]) -> Result<(f64, usize)>,
    mut fit: impl FnMut(f64) -> Result<F>,
    support: impl Fn(&F) -> Vec<usize>,
) -> Result<(F, SigmaTrace)> {
    if n < 2 {
        return Err(Error::Domain("σ estimation needs at least two observations".into()));
    }
    if config.max_rounds == 0 {
        return Err(Error::Domain("σ estimation needs at least one round".into()));
    }
    let mut rounds: Vec<SigmaRound> = Vec::new();
    let mut fits: Vec<F> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for _ in 0..config.max_rounds {
        let (ssr, dof) = rss(&current)?;
        if dof == 0 {
            return Err(Error::DofExhausted { columns: n, n });
        }
        let sigma = (ssr / dof as f64).sqrt();
        if sigma.is_nan() || sigma <= 0.0 {
            return Err(Error::Domain(
                "residual vanished; σ̂ = 0 cannot scale the penalty".into(),
            ));
        }
        let f = fit(sigma)?;
        let next = support(&f);
        rounds.push(SigmaRound {
            support: std::mem::take(&mut current),
            sigma,
        });
        fits.push(f);
        let last = rounds.len() - 1;
        if next == rounds[last].support {
            let f = fits.pop().expect("one fit per round");
            return Ok((
                f,
                SigmaTrace {
                    iterations: rounds,
                    converged: true,
                    cycle_detected: false,
                },
            ));
        }
        if let Some(start) = rounds.iter().position(|r| r.support == next) {
            let best = (start..=last)
                .min_by(|&a, &b| rounds[a].sigma.total_cmp(&rounds[b].sigma))
                .expect("nonempty cycle");
            rounds.truncate(best + 1);
            let f = fits.swap_remove(best);
            return Ok((
                f,
                SigmaTrace {
                    iterations: rounds,
                    converged: false,
                    cycle_detected: true,
                },
            ));
        }
        current = next;
    }
    let f = fits.pop().expect("at least one round ran");
    Ok((
        f,
        SigmaTrace {
            iterations: rounds,
            converged: false,
            cycle_detected: false,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::{standardize, GroupPartition};
    use crate::lambda::{lambda_corrected_general, GroupSpec, WeightMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
    }

    #[test]
    fn ols_rss_examples() {
        let y = DVector::from_vec(vec![1.0, 2.0, 4.0, 7.0]);
        let x = DMatrix::from_column_slice(4, 2, &[1.0, 2.0, 4.0, 7.0, 1.0, 0.0, 1.0, 0.0]);
        let (rss, dof) = ols_rss(&y, &x, &[], true).unwrap();
        assert!((rss - 21.0).abs() < 1e-12);
        assert_eq!(dof, 3);
        let (rss, dof) = ols_rss(&y, &x, &[0], true).unwrap();
        assert!(rss < 1e-24);
        assert_eq!(dof, 2);
        let (rss, dof) = ols_rss(&y, &x, &[], false).unwrap();
        assert_eq!((rss, dof), (70.0, 4));
        // duplicated column counts once
        let (_, dof) = ols_rss(&y, &x, &[1, 1], false).unwrap();
        assert_eq!(dof, 3);
        assert!(matches!(ols_rss(&y, &x, &[0, 1], true), Ok((_, 1))));
        let tiny = DMatrix::from_column_slice(2, 1, &[1.0, 3.0]);
        let err = ols_rss(&DVector::from_vec(vec![1.0, 2.0]), &tiny, &[0], true).unwrap_err();
        assert!(matches!(err, Error::DofExhausted { .. }));
    }

    fn setup(
        seed: u64,
        n: usize,
        m: usize,
        l: usize,
        strong: &[usize],
        noise: f64,
    ) -> (DVector<f64>, StandardizedDesign, LambdaSeq) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = normal_matrix(&mut rng, n, m * l, 1.0 / (n as f64).sqrt());
        let partition = GroupPartition::contiguous(&vec![l; m], None).unwrap();
        let design = standardize(&x, &partition, DEFAULT_RANK_TOL).unwrap();
        let mut y = normal_matrix(&mut rng, n, 1, noise).column(0).into_owned();
        for &g in strong {
            y += design.factors()[g].u.column(0) * 12.0;
        }
        let ranks = vec![l; m];
        let spec = GroupSpec::new(ranks.clone(), WeightMode::SqrtRank.weights(&ranks), 0.1)
            .unwrap()
            .with_n(n);
        (y, design, lambda_corrected_general(&spec).unwrap())
    }

    #[test]
    fn pure_noise_converges_on_empty_support() {
        let (y, design, lam) = setup(11, 200, 20, 3, &[], 1.0);
        let (fit, trace) = estimate_sigma_gslope(
            &y,
            &design,
            &lam.scaled(3.0),
            &SolverConfig::default(),
            &SigmaConfig::default(),
        )
        .unwrap();
        assert!(trace.converged && !trace.cycle_detected);
        assert_eq!(trace.iterations.len(), 1);
        assert!(fit.selected.is_empty());
        let mean = y.mean();
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
        assert!((trace.sigma().unwrap() - var.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn noiseless_strong_group_is_found() {
        let (mut y, design, lam) = setup(12, 150, 10, 2, &[3], 0.0);
        y += DVector::from_fn(150, |i, _| 1e-3 * ((i * 37 % 11) as f64 - 5.0));
        let (fit, trace) =
            estimate_sigma_gslope(&y, &design, &lam, &SolverConfig::default(), &SigmaConfig::default()).unwrap();
        assert!(trace.converged);
        assert_eq!(fit.selected, vec![3]);
        assert!(trace.sigma().unwrap() < 0.01);
        for pair in trace.iterations.windows(2) {
            assert_ne!(pair[0].support, pair[1].support);
        }
    }

    #[test]
    fn dof_exhaustion_is_reported() {
        let (rss, fit) = (
            |s: &[usize]| {
                if s.is_empty() {
                    Ok((4.0, 3))
                } else {
                    Err(Error::DofExhausted { columns: 3, n: 4 })
                }
            },
            |_sigma: f64| Ok(vec![0usize, 1, 2]),
        );
        let err = estimate_sigma_with(4, &SigmaConfig::default(), rss, fit, |s: &Vec<usize>| s.clone()).unwrap_err();
        assert!(matches!(err, Error::DofExhausted { .. }));
    }

    #[test]
    fn cycles_return_the_smallest_sigma() {
        // supports alternate {} -> {0} -> {0,1} -> {0} ...
        let rss = |s: &[usize]| Ok((10.0 - 3.0 * s.len() as f64, 10));
        let fit = |sigma: f64| {
            let support = if sigma > 0.9 {
                vec![0]
            } else if sigma > 0.75 {
                vec![0, 1]
            } else {
                vec![0]
            };
            Ok((sigma, support))
        };
        let (best, trace) = estimate_sigma_with(12, &SigmaConfig::default(), rss, fit, |f: &(f64, Vec<usize>)| {
            f.1.clone()
        })
        .unwrap();
        assert!(trace.cycle_detected && !trace.converged);
        assert!((best.0 - 0.4f64.sqrt()).abs() < 1e-12);
        assert_eq!(trace.sigma(), Some(best.0));
    }

    #[test]
    fn round_cap_stops_the_loop() {
        let mut calls = 0usize;
        let rss = |s: &[usize]| Ok((1.0 + s[..].first().copied().unwrap_or(0) as f64, 50));
        let fit = |_sigma: f64| {
            calls += 1;
            Ok(vec![calls])
        };
        let config = SigmaConfig {
            max_rounds: 5,
            ..SigmaConfig::default()
        };
        let (_, trace) = estimate_sigma_with(60, &config, rss, fit, |s: &Vec<usize>| s.clone()).unwrap();
        assert_eq!(trace.iterations.len(), 5);
        assert!(!trace.converged && !trace.cycle_detected);
    }
}
