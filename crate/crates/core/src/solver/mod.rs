//! Group SLOPE fitting.
//!
//! The problem `½‖y − Xb‖² + σ J_λ(W⟦b⟧_{X,I})` is solved on the standardized
//! design `X̃` with the weights absorbed into the columns (`A = X̃M`,
//! `M = diag(w_i⁻¹ I_{l_i})`), where the penalty becomes the unit-weight
//! grouped sorted-ℓ1 norm of `η = M⁻¹c`. Iterations stop when the residual
//! `μ = y − Aη` is dual feasible and the duality gap
//! `ρ(η) = (Aη)ᵀμ − σJ_λ(⟦η⟧)` is small relative to `½‖y‖²`.

mod fista;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::groups::{backmap, block_norms, GroupEffects, StandardizedDesign};
use crate::sorted_l1::{eval_j_unchecked, LambdaSeq};
use fista::{certificates, fista, prox_grouped_into, DenseOperator, DiagonalOperator, LinearOperator, Step};

/// How the step size `1/L` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `L = ‖A‖₂²` from power iteration; falls back to backtracking when
    /// the estimate does not settle within `iterations`.
    PowerIteration { iterations: usize, tol: f64 },
    /// Start from a rough estimate of `L` and double it whenever the
    /// quadratic upper bound fails.
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Bound on `|ρ|`, relative to `½‖y‖²`.
    pub gap_tol: f64,
    /// Bound on the dual infeasibility of the residual.
    pub infeas_tol: f64,
    pub max_iter: usize,
    pub step_rule: StepRule,
    /// Effects at or below this fraction of the largest effect are set to zero.
    pub selection_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gap_tol: 1e-6,
            infeas_tol: 1e-6,
            max_iter: 20_000,
            step_rule: StepRule::PowerIteration {
                iterations: 50,
                tol: 1e-8,
            },
            selection_threshold: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.gap_tol) || !positive(self.infeas_tol) {
            return Err(Error::Domain("solver tolerances must be positive".into()));
        }
        if !(self.selection_threshold.is_finite() && self.selection_threshold >= 0.0) {
            return Err(Error::Domain("selection threshold must be nonnegative".into()));
        }
        if let StepRule::PowerIteration { tol, .. } = self.step_rule {
            if !(tol.is_finite() && tol >= 0.0) {
                return Err(Error::Domain("power iteration tolerance must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// Noise level multiplying the penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma {
    Known(f64),
    /// Estimate σ alternately with the fit; see [`crate::sigma`].
    Estimate,
}

/// A fully specified Group SLOPE problem.
#[derive(Debug, Clone)]
pub struct GSlopeProblem {
    y: DVector<f64>,
    design: StandardizedDesign,
    lambda: LambdaSeq,
    sigma: Sigma,
}

impl GSlopeProblem {
    pub fn new(y: DVector<f64>, design: StandardizedDesign, lambda: LambdaSeq, sigma: Sigma) -> Result<Self> {
        check_inputs(&y, &design, &lambda)?;
        if let Sigma::Known(s) = sigma {
            check_sigma(s)?;
        }
        Ok(GSlopeProblem {
            y,
            design,
            lambda,
            sigma,
        })
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn design(&self) -> &StandardizedDesign {
        &self.design
    }

    pub fn lambda(&self) -> &LambdaSeq {
        &self.lambda
    }

    pub fn sigma(&self) -> Sigma {
        self.sigma
    }
}

fn check_inputs(y: &DVector<f64>, design: &StandardizedDesign, lambda: &LambdaSeq) -> Result<()> {
    check_response(y, design)?;
    check_lambda(lambda, design)
}

fn check_response(y: &DVector<f64>, design: &StandardizedDesign) -> Result<()> {
    if y.len() != design.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "response has length {}, design has {} rows",
            y.len(),
            design.n_rows()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response"));
    }
    Ok(())
}

fn check_lambda(lambda: &LambdaSeq, design: &StandardizedDesign) -> Result<()> {
    if lambda.len() != design.n_groups() {
        return Err(Error::DimensionMismatch(format!(
            "lambda has length {}, design has {} groups",
            lambda.len(),
            design.n_groups()
        )));
    }
    if !lambda.is_norm() {
        return Err(Error::InvalidLambda("the first entry must be positive".into()));
    }
    Ok(())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("sigma must be positive and finite, got {sigma}")))
    }
}

/// Result of a Group SLOPE fit.
#[derive(Debug, Clone, PartialEq)]
pub struct GSlopeFit {
    /// Coefficients in the original column order.
    pub beta: DVector<f64>,
    /// Standardized coefficients `c` on `X̃`.
    pub coefficients_std: DVector<f64>,
    pub effects: GroupEffects,
    /// Zero-based indices of groups with a nonzero effect.
    pub selected: Vec<usize>,
    pub iterations: usize,
    /// Signed gap `ρ` at the returned iterate.
    pub duality_gap: f64,
    pub infeasibility: f64,
    pub objective: f64,
    pub sigma_used: f64,
    /// False when `max_iter` was reached before both certificates held.
    pub converged: bool,
}

/// Grouped prox with unit weights: `argmin_x ½‖y − x‖² + t J_λ(⟦x⟧_Ĩ)`.
///
/// `offsets` holds the `m + 1` block boundaries of `Ĩ`.
pub fn prox_grouped(y_std: &[f64], lambda: &LambdaSeq, offsets: &[usize], t: f64) -> Result<Vec<f64>> {
    check_offsets(offsets, y_std.len(), lambda.len())?;
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Domain(format!("step size must be positive, got {t}")));
    }
    let scaled = lambda.scaled(t);
    let mut out = vec![0.0; y_std.len()];
    let mut scratch = vec![0.0; lambda.len()];
    prox_grouped_into(y_std, scaled.values(), offsets, &mut out, &mut scratch);
    Ok(out)
}

fn check_offsets(offsets: &[usize], len: usize, m: usize) -> Result<()> {
    let valid = offsets.len() == m + 1
        && offsets.first() == Some(&0)
        && offsets.last() == Some(&len)
        && offsets.windows(2).all(|w| w[0] < w[1]);
    if valid {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "offsets must split {len} entries into {m} nonempty blocks"
        )))
    }
}

/// Solves the problem. With [`Sigma::Estimate`] the noise level is
/// estimated first and the final fit of that loop is returned.
pub fn solve(problem: &GSlopeProblem, config: &SolverConfig) -> Result<GSlopeFit> {
    match problem.sigma {
        Sigma::Known(sigma) => DenseSolver::new(&problem.design, &problem.y, config)?.fit(&problem.lambda, sigma),
        Sigma::Estimate => crate::sigma::estimate_sigma_gslope(
            &problem.y,
            &problem.design,
            &problem.lambda,
            config,
            &crate::sigma::SigmaConfig::default(),
        )
        .map(|(fit, _)| fit),
    }
}

/// A design and response prepared for repeated fits with different λ or σ.
pub(crate) struct DenseSolver<'a> {
    design: &'a StandardizedDesign,
    y: &'a DVector<f64>,
    config: SolverConfig,
    op: DenseOperator,
    step: Step,
}

impl<'a> DenseSolver<'a> {
    pub(crate) fn new(design: &'a StandardizedDesign, y: &'a DVector<f64>, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        check_response(y, design)?;
        let op = DenseOperator::new(design.x_tilde(), design.offsets(), design.weights());
        let step = Step::resolve(&op, config.step_rule);
        Ok(DenseSolver {
            design,
            y,
            config: *config,
            op,
            step,
        })
    }

    pub(crate) fn fit(&self, lambda: &LambdaSeq, sigma: f64) -> Result<GSlopeFit> {
        check_lambda(lambda, self.design)?;
        check_sigma(sigma)?;
        let penalty = lambda.scaled(sigma);
        let offsets = self.design.offsets();
        let weights = self.design.weights();
        let run = fista(
            &self.op,
            self.y.as_slice(),
            penalty.values(),
            offsets,
            self.step,
            &self.config,
        );
        if run.eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("solver iterate"));
        }

        let mut eta = run.eta;
        let effects: Vec<f64> = block_norms(&eta, offsets)
            .iter()
            .zip(weights)
            .map(|(e, w)| e / w)
            .collect();
        let (effects, selected) = threshold(effects, self.config.selection_threshold);
        for (g, e) in effects.iter().enumerate() {
            if *e == 0.0 {
                eta[offsets[g]..offsets[g + 1]].fill(0.0);
            }
        }
        let mut fitted = vec![0.0; self.op.nrows()];
        self.op.apply(&eta, &mut fitted);
        let objective =
            0.5 * sq_dist(self.y.as_slice(), &fitted) + eval_j_unchecked(penalty.values(), &block_norms(&eta, offsets));

        let mut c = DVector::from_vec(eta);
        for (g, w) in weights.iter().enumerate() {
            c.rows_mut(offsets[g], offsets[g + 1] - offsets[g]).scale_mut(1.0 / w);
        }
        Ok(GSlopeFit {
            beta: backmap(&c, self.design)?,
            coefficients_std: c,
            effects: GroupEffects(effects),
            selected,
            iterations: run.iterations,
            duality_gap: run.gap,
            infeasibility: run.infeasibility,
            objective,
            sigma_used: sigma,
            converged: run.converged,
        })
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Zeroes effects at or below `rel` times the largest one.
fn threshold(mut effects: Vec<f64>, rel: f64) -> (Vec<f64>, Vec<usize>) {
    let top = effects.iter().copied().fold(0.0, f64::max);
    let cut = rel * top;
    let mut selected = Vec::new();
    for (g, e) in effects.iter_mut().enumerate() {
        if *e > cut && *e > 0.0 {
            selected.push(g);
        } else {
            *e = 0.0;
        }
    }
    (effects, selected)
}

fn absorbed_eta(design: &StandardizedDesign, eta: &[f64]) -> Result<()> {
    if eta.len() != design.n_std_columns() {
        return Err(Error::DimensionMismatch(format!(
            "vector has length {}, design has {} standardized columns",
            eta.len(),
            design.n_std_columns()
        )));
    }
    Ok(())
}

/// Signed duality gap `ρ(η) = (X̃Mη)ᵀ(y − X̃Mη) − σJ_λ(⟦η⟧_Ĩ)` in the
/// weight-absorbed variable `η`.
pub fn duality_gap(
    design: &StandardizedDesign,
    y: &DVector<f64>,
    eta: &[f64],
    lambda: &LambdaSeq,
    sigma: f64,
) -> Result<f64> {
    check_inputs(y, design, lambda)?;
    check_sigma(sigma)?;
    absorbed_eta(design, eta)?;
    let op = DenseOperator::new(design.x_tilde(), design.offsets(), design.weights());
    let mut fitted = vec![0.0; op.nrows()];
    op.apply(eta, &mut fitted);
    let mut at_mu = vec![0.0; op.ncols()];
    let resid: Vec<f64> = y.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    op.apply_t(&resid, &mut at_mu);
    let penalty = lambda.scaled(sigma);
    Ok(certificates(eta, &fitted, y.as_slice(), &at_mu, penalty.values(), design.offsets()).0)
}

/// `max{J^D_{σλ}(W⁻¹⟦X̃ᵀμ⟧_Ĩ) − 1, 0}`.
pub fn infeasibility(design: &StandardizedDesign, mu: &DVector<f64>, lambda: &LambdaSeq, sigma: f64) -> Result<f64> {
    check_inputs(mu, design, lambda)?;
    check_sigma(sigma)?;
    let op = DenseOperator::new(design.x_tilde(), design.offsets(), design.weights());
    let mut at_mu = vec![0.0; op.ncols()];
    op.apply_t(mu.as_slice(), &mut at_mu);
    let penalty = lambda.scaled(sigma);
    let zeros = vec![0.0; op.ncols()];
    let origin = vec![0.0; op.nrows()];
    Ok(certificates(&zeros, &origin, &origin, &at_mu, penalty.values(), design.offsets()).1)
}

/// Result of the diagonal SLOPE problem behind the orthogonal reduction.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalFit {
    /// Minimizer `c = W⟦b⟧`.
    pub c: Vec<f64>,
    /// `c_i / w_i`, thresholded like [`GSlopeFit::effects`].
    pub effects: Vec<f64>,
    pub selected: Vec<usize>,
    pub iterations: usize,
    pub duality_gap: f64,
    pub infeasibility: f64,
    pub converged: bool,
}

/// Minimizes `½Σ(d_i − c_i/w_i)² + σJ_λ(c)` for nonnegative data `d`.
pub fn solve_diagonal_slope(
    data: &[f64],
    weights: &[f64],
    lambda: &LambdaSeq,
    sigma: f64,
    config: &SolverConfig,
) -> Result<DiagonalFit> {
    config.validate()?;
    check_sigma(sigma)?;
    let m = data.len();
    if m == 0 {
        return Err(Error::EmptyDesign);
    }
    if weights.len() != m || lambda.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{m} data values, {} weights, {} lambdas",
            weights.len(),
            lambda.len()
        )));
    }
    if data.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(Error::Domain(
            "diagonal SLOPE data must be finite and nonnegative".into(),
        ));
    }
    if let Some(g) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidWeight {
            group: g + 1,
            value: weights[g],
        });
    }
    if !lambda.is_norm() {
        return Err(Error::InvalidLambda("the first entry must be positive".into()));
    }
    let op = DiagonalOperator::new(weights.iter().map(|w| 1.0 / w).collect());
    let step = Step::resolve(&op, config.step_rule);
    let offsets: Vec<usize> = (0..=m).collect();
    let penalty = lambda.scaled(sigma);
    let run = fista(&op, data, penalty.values(), &offsets, step, config);
    let raw: Vec<f64> = run.eta.iter().zip(weights).map(|(c, w)| c / w).collect();
    let (effects, selected) = threshold(raw, config.selection_threshold);
    let c = effects.iter().zip(weights).map(|(e, w)| e * w).collect();
    Ok(DiagonalFit {
        c,
        effects,
        selected,
        iterations: run.iterations,
        duality_gap: run.gap,
        infeasibility: run.infeasibility,
        converged: run.converged,
    })
}

/// Separable solution for designs whose groups are mutually orthogonal.
///
/// With `ỹ = X̃ᵀy` the problem reduces to diagonal SLOPE on the block norms
/// `d_i = ‖ỹ_{Ĩ_i}‖₂`; block `i` of the standardized solution is
/// `(c_i / (w_i d_i)) ỹ_{Ĩ_i}`. The reported certificates are those of the
/// reduced problem, which coincide with the full ones.
pub fn solve_orthogonal(
    y: &DVector<f64>,
    design: &StandardizedDesign,
    lambda: &LambdaSeq,
    sigma: f64,
    config: &SolverConfig,
) -> Result<GSlopeFit> {
    check_inputs(y, design, lambda)?;
    let coherence = design.cross_group_coherence();
    if coherence > 1e-8 {
        return Err(Error::NotOrthogonal(coherence));
    }
    let offsets = design.offsets();
    let y_std = design.x_tilde().tr_mul(y);
    let data = block_norms(y_std.as_slice(), offsets);
    let diag = solve_diagonal_slope(&data, design.weights(), lambda, sigma, config)?;

    let mut c = DVector::zeros(design.n_std_columns());
    for (g, (&e, &d)) in diag.effects.iter().zip(&data).enumerate() {
        if e > 0.0 {
            let len = offsets[g + 1] - offsets[g];
            c.rows_mut(offsets[g], len)
                .copy_from(&(y_std.rows(offsets[g], len) * (e / d)));
        }
    }
    let fitted = design.x_tilde() * &c;
    let objective = 0.5 * (y - fitted).norm_squared() + sigma * eval_j_unchecked(lambda.values(), &diag.c);
    Ok(GSlopeFit {
        beta: backmap(&c, design)?,
        coefficients_std: c,
        effects: GroupEffects(diag.effects),
        selected: diag.selected,
        iterations: diag.iterations,
        duality_gap: diag.duality_gap,
        infeasibility: diag.infeasibility,
        objective,
        sigma_used: sigma,
        converged: diag.converged,
    })
}
