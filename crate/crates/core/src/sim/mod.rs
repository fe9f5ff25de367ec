//! Monte-Carlo estimation of group FDR and power.
//!
//! Every replicate draws its own design (Gaussian scenarios), relevant
//! group set and noise from a ChaCha8 stream keyed by the sparsity index
//! and replicate index, then fits every `q` of the scenario on the same
//! data. Replicates run on a rayon pool and are reduced in index order, so
//! reports do not depend on the worker count.

mod scenario;

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

pub use scenario::{DesignKind, EffectRule, Scenario, SigmaMode, SizeLaw};

use crate::error::{Error, Result};
use crate::groups::{standardize, GroupPartition, StandardizedDesign, DEFAULT_RANK_TOL};
use crate::lambda::GroupSpec;
use crate::sigma::{estimate_sigma_gslope, estimate_sigma_with, SigmaConfig};
use crate::solver::{solve_diagonal_slope, DenseSolver, SolverConfig};
use crate::sorted_l1::LambdaSeq;

/// RNG of one replicate: the master seed with stream `(k_index << 32) | replicate`.
pub fn replicate_rng(seed: u64, k_index: usize, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((k_index as u64) << 32) | replicate as u64);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws the design of a replicate. Identity scenarios return `I_p`.
pub fn gen_design(
    scenario: &Scenario,
    sizes: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<(DMatrix<f64>, GroupPartition)> {
    let weights = scenario.weights.weights(sizes);
    let partition = GroupPartition::contiguous(sizes, Some(weights))?;
    let p = partition.n_columns();
    let x = match scenario.design {
        DesignKind::Identity => DMatrix::identity(p, p),
        DesignKind::Gaussian { n, standardize } => {
            let scale = 1.0 / (n as f64).sqrt();
            let mut x = DMatrix::from_fn(n, p, |_, _| scale * normal(rng));
            if standardize {
                for mut col in x.column_iter_mut() {
                    let mean = col.mean();
                    col.add_scalar_mut(-mean);
                    let norm = col.norm();
                    if norm > 0.0 {
                        col /= norm;
                    }
                }
            }
            x
        }
    };
    Ok((x, partition))
}

/// Chooses `k` relevant groups uniformly and returns them (sorted) with
/// coefficients giving each a group effect equal to its target. Within a
/// group the signal points along the first standardized coordinate.
pub fn gen_signal(
    design: &StandardizedDesign,
    targets: &[f64],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(DVector<f64>, Vec<usize>)> {
    let m = design.n_groups();
    if k > m || targets.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "k = {k}, {} targets for {m} groups",
            targets.len()
        )));
    }
    let relevant = draw_relevant(m, k, rng);
    let mut c = DVector::zeros(design.n_std_columns());
    for &g in &relevant {
        c[design.offsets()[g]] = targets[g];
    }
    Ok((crate::groups::backmap(&c, design)?, relevant))
}

fn draw_relevant(m: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut relevant = sample(rng, m, k).into_vec();
    relevant.sort_unstable();
    relevant
}

/// Selection counts of one fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Score {
    /// Selected groups.
    pub rg: usize,
    /// Selected groups that are truly null.
    pub vg: usize,
    pub true_positives: usize,
}

impl Score {
    /// `Vg / max(Rg, 1)`.
    pub fn fdp(&self) -> f64 {
        self.vg as f64 / self.rg.max(1) as f64
    }

    /// `TP / k`, zero when `k = 0`.
    pub fn power(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.true_positives as f64 / k as f64
        }
    }
}

/// Scores a selected set against the truly relevant groups.
pub fn score(selected: &[usize], relevant: &[usize]) -> Score {
    let true_positives = selected.iter().filter(|g| relevant.contains(g)).count();
    Score {
        rg: selected.len(),
        vg: selected.len() - true_positives,
        true_positives,
    }
}

/// Execution options of [`run_scenario`].
#[derive(Default)]
pub struct RunOptions<'a> {
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
    pub solver: SolverConfig,
    /// Called with `(finished, total)` replicate counts.
    pub progress: Option<&'a (dyn Fn(usize, usize) + Sync)>,
}

/// Shortest representation that parses back to the same `f64`, in
/// exponent form outside `[1e-5, 1e16)`.
pub fn format_float(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-5..1e16).contains(&a) || !a.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// One `(q, k)` cell of a report.
#[derive(Debug, Clone, PartialEq)]
pub struct SimRow {
    pub q: f64,
    pub k: usize,
    pub gfdr: f64,
    pub gfdr_se: f64,
    pub power: f64,
    pub power_se: f64,
    pub mean_rg: f64,
    /// Replicates that contributed.
    pub replicates: usize,
    /// `q (m − k) / m`.
    pub q_bound: f64,
    /// Replicates excluded because the fit failed or did not converge.
    pub failures: usize,
}

/// Share of one group size among the selected truly relevant groups.
#[derive(Debug, Clone, PartialEq)]
pub struct StrgRow {
    pub q: f64,
    pub k: usize,
    pub size: usize,
    pub fraction: f64,
    pub fraction_se: f64,
    /// Replicates with at least one true positive.
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimReport {
    pub name: String,
    pub rows: Vec<SimRow>,
    /// Present when group sizes vary.
    pub strg: Option<Vec<StrgRow>>,
    pub warnings: Vec<String>,
}

impl SimReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("q,k,gfdr,gfdr_se,power,power_se,mean_rg,replicates,q_bound,failures\n");
        for r in &self.rows {
            let f = format_float;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                f(r.q),
                r.k,
                f(r.gfdr),
                f(r.gfdr_se),
                f(r.power),
                f(r.power_se),
                f(r.mean_rg),
                r.replicates,
                f(r.q_bound),
                r.failures
            );
        }
        out
    }

    pub fn strg_csv(&self) -> Option<String> {
        let rows = self.strg.as_ref()?;
        let mut out = String::from("q,k,size,fraction,fraction_se,replicates\n");
        for r in rows {
            let f = format_float;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                f(r.q),
                r.k,
                r.size,
                f(r.fraction),
                f(r.fraction_se),
                r.replicates
            );
        }
        Some(out)
    }
}

/// Per-replicate score and selected truly relevant groups for each `q`;
/// `None` marks a failed fit.
type Outcome = Vec<Option<(Score, Vec<usize>)>>;

struct Context<'a> {
    scenario: &'a Scenario,
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    weights: Vec<f64>,
    targets: Vec<f64>,
    lambdas: Vec<LambdaSeq>,
    solver: SolverConfig,
}

impl Context<'_> {
    fn replicate(&self, k_index: usize, replicate: usize) -> Outcome {
        let k = self.scenario.k[k_index];
        let mut rng = replicate_rng(self.scenario.seed, k_index, replicate);
        let outcome = match self.scenario.design {
            DesignKind::Identity => self.identity_replicate(k, &mut rng),
            DesignKind::Gaussian { .. } => self.gaussian_replicate(k, &mut rng),
        };
        outcome.unwrap_or_else(|_| vec![None; self.lambdas.len()])
    }

    fn identity_replicate(&self, k: usize, rng: &mut ChaCha8Rng) -> Result<Outcome> {
        let m = self.sizes.len();
        let relevant = draw_relevant(m, k, rng);
        let mut y: Vec<f64> = (0..self.offsets[m]).map(|_| normal(rng)).collect();
        for &g in &relevant {
            y[self.offsets[g]] += self.targets[g];
        }
        let data: Vec<f64> = crate::groups::block_norms(&y, &self.offsets);
        let fit =
            |lambda: &LambdaSeq, sigma: f64| solve_diagonal_slope(&data, &self.weights, lambda, sigma, &self.solver);
        let outcome = self
            .lambdas
            .iter()
            .map(|lambda| {
                let fit = match self.scenario.sigma {
                    SigmaMode::Known => fit(lambda, 1.0),
                    SigmaMode::Estimated => estimate_sigma_with(
                        y.len(),
                        &SigmaConfig::default(),
                        |support| Ok(identity_rss(&y, &self.offsets, support)),
                        |sigma| fit(lambda, sigma),
                        |f| f.selected.clone(),
                    )
                    .map(|(f, _)| f),
                };
                fit.ok().filter(|f| f.converged).map(|f| scored(&f.selected, &relevant))
            })
            .collect();
        Ok(outcome)
    }

    fn gaussian_replicate(&self, k: usize, rng: &mut ChaCha8Rng) -> Result<Outcome> {
        let (x, partition) = gen_design(self.scenario, &self.sizes, rng)?;
        let design = standardize(&x, &partition, DEFAULT_RANK_TOL)?;
        drop(x);
        let relevant = draw_relevant(self.sizes.len(), k, rng);
        let n = design.n_rows();
        let mut y = DVector::from_fn(n, |_, _| normal(rng));
        for &g in &relevant {
            y.axpy(self.targets[g], &design.factors()[g].u.column(0), 1.0);
        }
        let dense = DenseSolver::new(&design, &y, &self.solver)?;
        let outcome = self
            .lambdas
            .iter()
            .map(|lambda| {
                let fit = match self.scenario.sigma {
                    SigmaMode::Known => dense.fit(lambda, 1.0),
                    SigmaMode::Estimated => {
                        estimate_sigma_gslope(&y, &design, lambda, &self.solver, &SigmaConfig::default())
                            .map(|(f, _)| f)
                    }
                };
                fit.ok().filter(|f| f.converged).map(|f| scored(&f.selected, &relevant))
            })
            .collect();
        Ok(outcome)
    }
}

fn scored(selected: &[usize], relevant: &[usize]) -> (Score, Vec<usize>) {
    let hits = selected.iter().copied().filter(|g| relevant.contains(g)).collect();
    (score(selected, relevant), hits)
}

/// RSS and dof of `y` regressed on an intercept and the identity columns
/// of the groups in `support`.
fn identity_rss(y: &[f64], offsets: &[usize], support: &[usize]) -> (f64, usize) {
    let mut free = Vec::new();
    let mut used = 0;
    for g in 0..offsets.len() - 1 {
        if support.contains(&g) {
            used += offsets[g + 1] - offsets[g];
        } else {
            free.extend_from_slice(&y[offsets[g]..offsets[g + 1]]);
        }
    }
    if free.is_empty() {
        return (0.0, 0);
    }
    let mean = free.iter().sum::<f64>() / free.len() as f64;
    let rss = free.iter().map(|v| (v - mean) * (v - mean)).sum();
    (rss, y.len() - used - 1)
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let r = values.len();
    if r == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / r as f64;
    if r == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1) as f64;
    (mean, (var / r as f64).sqrt())
}

/// Runs every replicate of the scenario and aggregates the report.
pub fn run_scenario(scenario: &Scenario, options: &RunOptions) -> Result<SimReport> {
    scenario.validate()?;
    options.solver.validate()?;
    let sizes = scenario.group_sizes();
    let n = scenario.n_rows(&sizes);
    let weights = scenario.weights.weights(&sizes);
    let mut offsets = vec![0];
    for s in &sizes {
        offsets.push(offsets.last().unwrap() + s);
    }
    let lambdas = scenario
        .q
        .iter()
        .map(|&q| {
            scenario
                .lambda
                .generate(&GroupSpec::new(sizes.clone(), weights.clone(), q)?.with_n(n))
        })
        .collect::<Result<Vec<_>>>()?;
    let ctx = Context {
        scenario,
        targets: scenario.target_effects(&sizes)?,
        sizes,
        offsets,
        weights,
        lambdas,
        solver: options.solver,
    };

    let reps = scenario.replicates;
    let jobs: Vec<(usize, usize)> = (0..scenario.k.len())
        .flat_map(|ki| (0..reps).map(move |r| (ki, r)))
        .collect();
    let done = AtomicUsize::new(0);
    let total = jobs.len();
    let work = || -> Vec<Outcome> {
        jobs.par_iter()
            .map(|&(ki, r)| {
                let out = ctx.replicate(ki, r);
                let finished = done.fetch_add(1, Ordering::Relaxed) + 1;
                if let Some(progress) = options.progress {
                    progress(finished, total);
                }
                out
            })
            .collect()
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = options.threads {
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Scenario(format!("cannot start worker pool: {e}")))?;
    let outcomes = pool.install(work);

    Ok(aggregate(&ctx, &outcomes))
}

fn aggregate(ctx: &Context, outcomes: &[Outcome]) -> SimReport {
    let scenario = ctx.scenario;
    let reps = scenario.replicates;
    let m = ctx.sizes.len();
    let mut distinct: Vec<usize> = ctx.sizes.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let varied = distinct.len() > 1;

    let mut rows = Vec::new();
    let mut strg = Vec::new();
    let mut warnings = Vec::new();
    for (qi, &q) in scenario.q.iter().enumerate() {
        for (ki, &k) in scenario.k.iter().enumerate() {
            let cell: Vec<&(Score, Vec<usize>)> = outcomes[ki * reps..(ki + 1) * reps]
                .iter()
                .filter_map(|o| o[qi].as_ref())
                .collect();
            let fdp: Vec<f64> = cell.iter().map(|(s, _)| s.fdp()).collect();
            let power: Vec<f64> = cell.iter().map(|(s, _)| s.power(k)).collect();
            let rg: Vec<f64> = cell.iter().map(|(s, _)| s.rg as f64).collect();
            let (gfdr, gfdr_se) = mean_se(&fdp);
            let (power, power_se) = mean_se(&power);
            let (mean_rg, _) = mean_se(&rg);
            let used = cell.len();
            if used < 2 {
                warnings.push(format!(
                    "q = {q}, k = {k}: {used} usable replicate(s); standard errors are not meaningful"
                ));
            }
            rows.push(SimRow {
                q,
                k,
                gfdr,
                gfdr_se,
                power,
                power_se,
                mean_rg,
                replicates: used,
                q_bound: q * (m - k) as f64 / m as f64,
                failures: reps - used,
            });
            if varied {
                strg.extend(composition(ctx, q, k, outcomes, ki, qi, &distinct));
            }
        }
    }
    SimReport {
        name: scenario.name.clone(),
        rows,
        strg: varied.then_some(strg),
        warnings,
    }
}

fn composition(
    ctx: &Context,
    q: f64,
    k: usize,
    outcomes: &[Outcome],
    ki: usize,
    qi: usize,
    distinct: &[usize],
) -> Vec<StrgRow> {
    let reps = ctx.scenario.replicates;
    let mut per_size: Vec<Vec<f64>> = vec![Vec::new(); distinct.len()];
    for outcome in &outcomes[ki * reps..(ki + 1) * reps] {
        let Some((_, hits)) = &outcome[qi] else { continue };
        if hits.is_empty() {
            continue;
        }
        let mut counts = vec![0usize; distinct.len()];
        for &g in hits {
            counts[distinct.binary_search(&ctx.sizes[g]).expect("size listed")] += 1;
        }
        for (bucket, c) in per_size.iter_mut().zip(counts) {
            bucket.push(c as f64 / hits.len() as f64);
        }
    }
    distinct
        .iter()
        .zip(per_size)
        .map(|(&size, values)| {
            let (fraction, fraction_se) = mean_se(&values);
            StrgRow {
                q,
                k,
                size,
                fraction,
                fraction_se,
                replicates: values.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests;
