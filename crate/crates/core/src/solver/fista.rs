//! Accelerated proximal gradient on `½‖y − Aη‖² + J_λ(⟦η⟧_Ĩ)` with unit
//! group weights, stopped by the duality gap and dual infeasibility of the
//! residual.

use nalgebra::DMatrix;

use super::{SolverConfig, StepRule};
use crate::groups::block_norms;
use crate::sorted_l1::{dual_norm_unchecked, eval_j_unchecked, prox_sorted_l1_into};

/// The design of a weight-absorbed problem.
pub(crate) trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `out = A x`
    fn apply(&self, x: &[f64], out: &mut [f64]);
    /// `out = Aᵀ r`
    fn apply_t(&self, r: &[f64], out: &mut [f64]);
    /// `‖A‖₂²` when it is known in closed form.
    fn exact_lipschitz(&self) -> Option<f64> {
        None
    }
}

/// Dense `X̃M`, stored with the weights already applied to its columns.
pub(crate) struct DenseOperator {
    a: DMatrix<f64>,
}

impl DenseOperator {
    pub(crate) fn new(x_tilde: &DMatrix<f64>, offsets: &[usize], weights: &[f64]) -> Self {
        let mut a = x_tilde.clone();
        for (g, w) in weights.iter().enumerate() {
            for j in offsets[g]..offsets[g + 1] {
                a.column_mut(j).scale_mut(1.0 / w);
            }
        }
        DenseOperator { a }
    }
}

impl LinearOperator for DenseOperator {
    fn nrows(&self) -> usize {
        self.a.nrows()
    }

    fn ncols(&self) -> usize {
        self.a.ncols()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (o, a) in out.iter_mut().zip(self.a.column(j).iter()) {
                    *o += a * xj;
                }
            }
        }
    }

    fn apply_t(&self, r: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.a.column(j).iter().zip(r).map(|(a, b)| a * b).sum();
        }
    }
}

/// `diag(d)`.
pub(crate) struct DiagonalOperator {
    d: Vec<f64>,
}

impl DiagonalOperator {
    pub(crate) fn new(d: Vec<f64>) -> Self {
        DiagonalOperator { d }
    }
}

impl LinearOperator for DiagonalOperator {
    fn nrows(&self) -> usize {
        self.d.len()
    }

    fn ncols(&self) -> usize {
        self.d.len()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for ((o, d), x) in out.iter_mut().zip(&self.d).zip(x) {
            *o = d * x;
        }
    }

    fn apply_t(&self, r: &[f64], out: &mut [f64]) {
        self.apply(r, out);
    }

    fn exact_lipschitz(&self) -> Option<f64> {
        Some(self.d.iter().map(|d| d * d).fold(0.0, f64::max))
    }
}

/// Power iteration on `AᵀA`. Returns the estimate and whether successive
/// estimates settled within `tol` (relative).
pub(crate) fn power_iteration(op: &dyn LinearOperator, iters: usize, tol: f64) -> (f64, bool) {
    let p = op.ncols();
    if p == 0 {
        return (0.0, true);
    }
    // deterministic, non-degenerate start
    let mut v: Vec<f64> = (0..p).map(|j| 1.0 + ((j * 7919) % 13) as f64 / 13.0).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut av = vec![0.0; op.nrows()];
    let mut w = vec![0.0; p];
    let mut estimate = 0.0;
    for _ in 0..iters {
        op.apply(&v, &mut av);
        op.apply_t(&av, &mut w);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return (0.0, true);
        }
        let settled = (norm - estimate).abs() <= tol * norm;
        estimate = norm;
        v.iter_mut().zip(&w).for_each(|(v, w)| *v = w / norm);
        if settled {
            return (estimate, true);
        }
    }
    (estimate, false)
}

/// Step-size policy resolved for one operator.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Step {
    pub lipschitz: f64,
    pub backtrack: bool,
}

impl Step {
    pub(crate) fn resolve(op: &dyn LinearOperator, rule: StepRule) -> Step {
        if let Some(l) = op.exact_lipschitz() {
            return Step {
                lipschitz: l,
                backtrack: false,
            };
        }
        match rule {
            StepRule::PowerIteration { iterations, tol } => {
                let (l, settled) = power_iteration(op, iterations, tol);
                Step {
                    lipschitz: l,
                    backtrack: !settled,
                }
            }
            StepRule::Backtracking => {
                let (l, _) = power_iteration(op, 5, 0.0);
                Step {
                    lipschitz: l,
                    backtrack: true,
                }
            }
        }
    }
}

pub(crate) struct FistaResult {
    pub eta: Vec<f64>,
    pub iterations: usize,
    pub gap: f64,
    pub infeasibility: f64,
    pub converged: bool,
}

/// Unit-weight grouped prox: block norms go through the sorted-ℓ1 prox
/// with `lambda`, blocks are rescaled to the new norms.
pub(crate) fn prox_grouped_into(v: &[f64], lambda: &[f64], offsets: &[usize], out: &mut [f64], scratch: &mut [f64]) {
    let norms = block_norms(v, offsets);
    prox_sorted_l1_into(&norms, lambda, scratch);
    for (g, w) in offsets.windows(2).enumerate() {
        if w[1] - w[0] == 1 {
            out[w[0]] = if scratch[g] == 0.0 {
                0.0
            } else {
                scratch[g].copysign(v[w[0]])
            };
            continue;
        }
        let scale = if norms[g] > 0.0 { scratch[g] / norms[g] } else { 0.0 };
        for j in w[0]..w[1] {
            out[j] = v[j] * scale;
        }
    }
}

/// `ρ(η)` and infeasibility of `μ = y − Aη`, given `Aη` and `Aᵀμ`.
pub(crate) fn certificates(
    eta: &[f64],
    a_eta: &[f64],
    y: &[f64],
    at_mu: &[f64],
    lambda: &[f64],
    offsets: &[usize],
) -> (f64, f64) {
    let fit_dot_resid: f64 = a_eta.iter().zip(y).map(|(f, y)| f * (y - f)).sum();
    let gap = fit_dot_resid - eval_j_unchecked(lambda, &block_norms(eta, offsets));
    let infeas = (dual_norm_unchecked(lambda, &block_norms(at_mu, offsets)) - 1.0).max(0.0);
    (gap, infeas)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn half_rss(y: &[f64], fit: &[f64]) -> f64 {
    0.5 * sq_dist(y, fit)
}

/// Minimizes `½‖y − Aη‖² + J_λ(⟦η⟧)` where `lambda` already includes σ.
pub(crate) fn fista(
    op: &dyn LinearOperator,
    y: &[f64],
    lambda: &[f64],
    offsets: &[usize],
    step: Step,
    config: &SolverConfig,
) -> FistaResult {
    let (n, p) = (op.nrows(), op.ncols());
    let m = offsets.len() - 1;
    let gap_scale = config.gap_tol * 0.5 * y.iter().map(|v| v * v).sum::<f64>();

    let mut x = vec![0.0; p];
    let mut x_prev = vec![0.0; p];
    let mut ax = vec![0.0; n];
    let mut ax_prev = vec![0.0; n];
    let mut g = vec![0.0; p];
    op.apply_t(y, &mut g);
    let mut g_prev = g.clone();

    let (gap, infeas) = certificates(&x, &ax, y, &g, lambda, offsets);
    if infeas <= config.infeas_tol && gap.abs() <= gap_scale {
        return FistaResult {
            eta: x,
            iterations: 0,
            gap,
            infeasibility: infeas,
            converged: true,
        };
    }

    let mut lip = if step.lipschitz > 0.0 { step.lipschitz } else { 1.0 };
    let mut t = 1.0f64;
    let mut z = vec![0.0; p];
    let mut az = vec![0.0; n];
    let mut gz = vec![0.0; p];
    let mut v = vec![0.0; p];
    let mut x_new = vec![0.0; p];
    let mut ax_new = vec![0.0; n];
    let mut resid = vec![0.0; n];
    let mut scaled = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    let mut last = (gap, infeas);

    for iter in 1..=config.max_iter {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        for j in 0..p {
            z[j] = x[j] + beta * (x[j] - x_prev[j]);
            gz[j] = g[j] + beta * (g[j] - g_prev[j]);
        }
        for i in 0..n {
            az[i] = ax[i] + beta * (ax[i] - ax_prev[i]);
        }
        let f_z = half_rss(y, &az);
        loop {
            for j in 0..p {
                v[j] = z[j] + gz[j] / lip;
            }
            for (s, l) in scaled.iter_mut().zip(lambda) {
                *s = l / lip;
            }
            prox_grouped_into(&v, &scaled, offsets, &mut x_new, &mut scratch);
            op.apply(&x_new, &mut ax_new);
            if !step.backtrack {
                break;
            }
            let lin: f64 = gz.iter().zip(x_new.iter().zip(&z)).map(|(g, (a, b))| g * (a - b)).sum();
            let bound = f_z - lin + 0.5 * lip * sq_dist(&x_new, &z);
            if half_rss(y, &ax_new) <= bound * (1.0 + 1e-12) + 1e-300 {
                break;
            }
            lip *= 2.0;
        }
        for i in 0..n {
            resid[i] = y[i] - ax_new[i];
        }
        std::mem::swap(&mut x_prev, &mut x);
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut ax_prev, &mut ax);
        std::mem::swap(&mut ax, &mut ax_new);
        std::mem::swap(&mut g_prev, &mut g);
        op.apply_t(&resid, &mut g);
        t = t_next;

        let (gap, infeas) = certificates(&x, &ax, y, &g, lambda, offsets);
        last = (gap, infeas);
        if infeas <= config.infeas_tol && gap.abs() <= gap_scale {
            return FistaResult {
                eta: x,
                iterations: iter,
                gap,
                infeasibility: infeas,
                converged: true,
            };
        }
    }
    FistaResult {
        eta: x,
        iterations: config.max_iter,
        gap: last.0,
        infeasibility: last.1,
        converged: false,
    }
}
