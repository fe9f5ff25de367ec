//! Scenario files.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::lambda::{signal_strength, LambdaMethod, WeightMode};

/// Design family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DesignKind {
    /// `X = I_p`, so `n = p`.
    Identity,
    /// i.i.d. `N(0, 1/n)` entries, optionally centred and scaled to unit
    /// column norms.
    Gaussian { n: usize, standardize: bool },
}

/// How group sizes are chosen.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum SizeLaw {
    /// Group `i` gets `sizes[i mod len]`.
    Fixed(Vec<usize>),
    /// Independent `Bin(trials, prob)` draws; zero draws are redrawn.
    Binomial { trials: u64, prob: f64 },
}

/// Target magnitude `‖X_{I_i}β_{I_i}‖₂` of a relevant group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectRule {
    /// `a√l_i` with `a` chosen so that `Σ a√l_i = Σ B(m, l_i)`.
    SqrtRank,
    /// `B(m, l_i)`.
    Constant,
    /// `m⁻¹ Σ_j B(m, l_j)` for every group.
    MeanStrength,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaMode {
    /// σ = 1 is passed to the solver.
    Known,
    /// σ is estimated alongside each fit.
    Estimated,
}

/// A validated Monte-Carlo scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub design: DesignKind,
    pub m: usize,
    pub group_sizes: SizeLaw,
    pub weights: WeightMode,
    pub k: Vec<usize>,
    pub q: Vec<f64>,
    pub lambda: LambdaMethod,
    pub sigma: SigmaMode,
    pub effect: EffectRule,
    pub replicates: usize,
    pub seed: u64,
    /// Multiplier applied to `m` and `n` by [`Scenario::full_size`].
    pub full_size_factor: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDesign {
    kind: String,
    n: Option<usize>,
    standardize: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    design: RawDesign,
    m: usize,
    group_sizes: SizeLaw,
    #[serde(default = "default_weights")]
    weights: WeightMode,
    k: Vec<usize>,
    q: Vec<f64>,
    lambda: LambdaMethod,
    #[serde(default = "default_sigma")]
    sigma: SigmaMode,
    #[serde(default = "default_effect")]
    effect: EffectRule,
    replicates: usize,
    seed: u64,
    #[serde(default = "default_factor")]
    full_size_factor: usize,
}

fn default_weights() -> WeightMode {
    WeightMode::SqrtRank
}

fn default_sigma() -> SigmaMode {
    SigmaMode::Known
}

fn default_effect() -> EffectRule {
    EffectRule::SqrtRank
}

fn default_factor() -> usize {
    5
}

impl Scenario {
    /// Parses and validates a TOML scenario.
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        let design = match raw.design.kind.as_str() {
            "identity" => {
                if raw.design.n.is_some() || raw.design.standardize.is_some() {
                    return Err(Error::Scenario("design: identity takes no n or standardize".into()));
                }
                DesignKind::Identity
            }
            "gaussian" => DesignKind::Gaussian {
                n: raw
                    .design
                    .n
                    .ok_or_else(|| Error::Scenario("design.n is required for a gaussian design".into()))?,
                standardize: raw.design.standardize.unwrap_or(false),
            },
            other => {
                return Err(Error::Scenario(format!(
                    "design.kind: unknown design kind '{other}' (expected identity or gaussian)"
                )))
            }
        };
        let scenario = Scenario {
            name: raw.name.unwrap_or_else(|| "scenario".into()),
            design,
            m: raw.m,
            group_sizes: raw.group_sizes,
            weights: raw.weights,
            k: raw.k,
            q: raw.q,
            lambda: raw.lambda,
            sigma: raw.sigma,
            effect: raw.effect,
            replicates: raw.replicates,
            seed: raw.seed,
            full_size_factor: raw.full_size_factor,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Scenario(msg));
        if self.m < 2 {
            return fail("m must be at least 2".into());
        }
        if self.replicates == 0 {
            return fail("replicates must be at least 1".into());
        }
        if self.k.is_empty() || self.q.is_empty() {
            return fail("k and q must list at least one value".into());
        }
        if let Some(k) = self.k.iter().find(|&&k| k > self.m) {
            return fail(format!("k = {k} exceeds m = {}", self.m));
        }
        if let Some(q) = self.q.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
            return fail(format!("q = {q} must lie in (0, 1)"));
        }
        if self.full_size_factor == 0 {
            return fail("full_size_factor must be positive".into());
        }
        match &self.group_sizes {
            SizeLaw::Fixed(sizes) if sizes.is_empty() || sizes.contains(&0) => {
                return fail("group_sizes.fixed must list positive sizes".into())
            }
            SizeLaw::Binomial { trials, prob } if *trials == 0 || !(*prob > 0.0 && *prob <= 1.0) => {
                return fail("group_sizes.binomial needs trials ≥ 1 and prob in (0, 1]".into())
            }
            _ => {}
        }
        if let DesignKind::Gaussian { n, .. } = self.design {
            if n < 2 {
                return fail("design.n must be at least 2".into());
            }
            let largest = self.group_sizes().into_iter().max().unwrap_or(0);
            if largest > n {
                return fail(format!("group of size {largest} cannot have full rank with n = {n}"));
            }
        }
        Ok(())
    }

    /// Scales `m` and a Gaussian `n` by `full_size_factor`.
    pub fn full_size(mut self) -> Self {
        self.m *= self.full_size_factor;
        if let DesignKind::Gaussian { n, standardize } = self.design {
            self.design = DesignKind::Gaussian {
                n: n * self.full_size_factor,
                standardize,
            };
        }
        self
    }

    /// Group sizes, fixed for the whole scenario. Binomial draws use a
    /// stream of the master seed reserved for this purpose.
    pub fn group_sizes(&self) -> Vec<usize> {
        match &self.group_sizes {
            SizeLaw::Fixed(sizes) => (0..self.m).map(|i| sizes[i % sizes.len()]).collect(),
            SizeLaw::Binomial { trials, prob } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(u64::MAX);
                let law = Binomial::new(*trials, *prob).expect("validated binomial parameters");
                (0..self.m)
                    .map(|_| loop {
                        let draw = law.sample(&mut rng) as usize;
                        if draw > 0 {
                            break draw;
                        }
                    })
                    .collect()
            }
        }
    }

    /// Number of rows of the design for the given sizes.
    pub fn n_rows(&self, sizes: &[usize]) -> usize {
        match self.design {
            DesignKind::Identity => sizes.iter().sum(),
            DesignKind::Gaussian { n, .. } => n,
        }
    }

    /// Target effect of every group, relevant or not.
    pub fn target_effects(&self, ranks: &[usize]) -> Result<Vec<f64>> {
        let m = ranks.len();
        let strengths = ranks
            .iter()
            .map(|&l| signal_strength(m, l))
            .collect::<Result<Vec<f64>>>()?;
        Ok(match self.effect {
            EffectRule::Constant => strengths,
            EffectRule::MeanStrength => vec![strengths.iter().sum::<f64>() / m as f64; m],
            EffectRule::SqrtRank => {
                let roots: Vec<f64> = ranks.iter().map(|&l| (l as f64).sqrt()).collect();
                let a = strengths.iter().sum::<f64>() / roots.iter().sum::<f64>();
                roots.iter().map(|r| a * r).collect()
            }
        })
    }
}
