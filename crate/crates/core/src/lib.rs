//! Group SLOPE: adaptive group selection in linear regression through a
//! sorted-ℓ1 penalty on group effects.
//!
//! The crate is organised around the fitting pipeline:
//!
//! * [`groups`]: partitions, per-group standardization `X_{I_i} = U_i R_i`,
//!   group effects and back-mapping to coefficients.
//! * [`sorted_l1`]: the sorted-ℓ1 norm, its proximal operator and dual norm.
//! * [`lambda`]: tuning sequences and χ-distribution numerics.
//! * [`solver`]: accelerated proximal gradient with duality-gap stopping.
//! * [`sigma`]: iterative noise-level estimation.
//! * [`sim`]: Monte-Carlo estimation of group FDR and power.

pub mod error;
pub mod groups;
pub mod lambda;
mod linalg;
pub mod sigma;
pub mod sim;
pub mod solver;
pub mod sorted_l1;

pub use error::{Error, Result};
pub use groups::{
    backmap, build_partition, group_effects, standardize, GroupEffects, GroupPartition, StandardizedDesign,
};
pub use lambda::{signal_strength, GroupSpec, LambdaMethod, WeightMode};
pub use sigma::{estimate_sigma_gslope, ols_rss, SigmaConfig, SigmaTrace};
pub use sim::{run_scenario, RunOptions, Scenario, SimReport};
pub use solver::{
    prox_grouped, solve, solve_diagonal_slope, solve_orthogonal, GSlopeFit, GSlopeProblem, Sigma, SolverConfig,
    StepRule,
};
pub use sorted_l1::{dual_norm, eval_j, prox_sorted_l1, LambdaSeq};
