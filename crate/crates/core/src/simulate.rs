//! Synthetic rankers for size and power studies.
//!
//! Each query draws `j` candidates with latent expected quality `mu` and a
//! group flag; the ranker sorts by `mu - tau * group`, so `tau = 0` is the
//! unbiased ranker and `tau > 0` penalizes group 1. Realized outcomes are
//! noisy around `mu` and can pick up a multiplicative display effect
//! `(1 + gamma)^rank`. [`run_size_power`] wraps the whole pipeline — simulate,
//! estimate the adjacent family, run the least-favorable joint test — and
//! reports rejection frequencies over replications.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::inference::{self, InferenceError};
use crate::model::{self, Dataset, Entry, ModelError, QueryRecord};
use crate::moments::{self, Adjustment, ConditioningMode, MomentError};
use crate::rng::{child_seed, substream, tag};

/// Group label for the non-penalized group.
pub const GROUP0: &str = "0";
/// Group label for the group penalized when `tau > 0`.
pub const GROUP1: &str = "1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// Law of the latent expected quality `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityLaw {
    Uniform01,
    Normal { mean: f64, sd: f64 },
}

/// How realized outcomes scatter around `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeNoise {
    /// `Y ~ Bernoulli(mu)`; requires qualities in `[0, 1]`.
    Bernoulli,
    /// `Y = mu + Normal(0, sd)`.
    AdditiveNormal { sd: f64 },
}

/// Parameters of the synthetic data-generating process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    /// Candidates per query (`J`).
    pub candidates_per_query: usize,
    /// Number of queries (`Q`).
    pub queries: usize,
    /// Probability a candidate belongs to group 1.
    pub group1_probability: f64,
    pub quality: QualityLaw,
    /// Penalty the ranker applies to group-1 candidates.
    pub tau: f64,
    /// Display effect: the outcome realized at rank `r` is multiplied by
    /// `(1 + gamma)^r`. Zero disables it.
    pub gamma: f64,
    pub noise: OutcomeNoise,
    pub seed: u64,
}

impl SimConfig {
    /// A 2-group Bernoulli design with uniform qualities and no display
    /// effect.
    pub fn uniform_bernoulli(j: usize, q: usize, tau: f64, seed: u64) -> Self {
        SimConfig {
            candidates_per_query: j,
            queries: q,
            group1_probability: 0.5,
            quality: QualityLaw::Uniform01,
            tau,
            gamma: 0.0,
            noise: OutcomeNoise::Bernoulli,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let err = |msg: String| Err(SimError::InvalidConfig(msg));
        if self.candidates_per_query < 2 {
            return err(format!(
                "need at least 2 candidates per query, got {}",
                self.candidates_per_query
            ));
        }
        if self.queries < 1 {
            return err("need at least one query".into());
        }
        if !(self.group1_probability > 0.0 && self.group1_probability < 1.0) {
            return err(format!(
                "group probability must lie strictly inside (0, 1), got {}",
                self.group1_probability
            ));
        }
        if !self.tau.is_finite() || self.tau < 0.0 {
            return err(format!("tau must be a finite nonnegative real, got {}", self.tau));
        }
        if !self.gamma.is_finite() || self.gamma <= -1.0 {
            return err(format!("gamma must satisfy gamma > -1, got {}", self.gamma));
        }
        match (self.noise, self.quality) {
            (OutcomeNoise::Bernoulli, QualityLaw::Uniform01) => {}
            (OutcomeNoise::Bernoulli, _) => {
                return err("Bernoulli outcomes require Uniform01 qualities".into());
            }
            (OutcomeNoise::AdditiveNormal { sd }, _) if !(sd.is_finite() && sd >= 0.0) => {
                return err(format!("noise sd must be finite and nonnegative, got {sd}"));
            }
            _ => {}
        }
        if let QualityLaw::Normal { mean, sd } = self.quality {
            if !mean.is_finite() || !(sd.is_finite() && sd > 0.0) {
                return err(format!("invalid quality law Normal({mean}, {sd})"));
            }
        }
        Ok(())
    }
}

/// Simulates a dataset and returns the latent qualities in rank order
/// alongside (one vector per query).
pub fn simulate_dataset_with_latents(
    config: &SimConfig,
) -> Result<(Dataset, Vec<Vec<f64>>), SimError> {
    config.validate()?;
    let mut queries = Vec::with_capacity(config.queries);
    let mut latents = Vec::with_capacity(config.queries);
    for qi in 0..config.queries {
        let j = config.candidates_per_query;
        let mut mus = Vec::with_capacity(j);
        let mut groups = Vec::with_capacity(j);
        let mut outcomes = Vec::with_capacity(j);
        for cand in 0..j {
            let mut rng = substream(config.seed, &[tag::SIM_CANDIDATE, qi as u64, cand as u64]);
            let mu = match config.quality {
                QualityLaw::Uniform01 => rng.random::<f64>(),
                QualityLaw::Normal { mean, sd } => {
                    mean + sd * rng.sample::<f64, _>(StandardNormal)
                }
            };
            let group1 = rng.random::<f64>() < config.group1_probability;
            let outcome = match config.noise {
                OutcomeNoise::Bernoulli => {
                    if rng.random::<f64>() < mu {
                        1.0
                    } else {
                        0.0
                    }
                }
                OutcomeNoise::AdditiveNormal { sd } => {
                    mu + sd * rng.sample::<f64, _>(StandardNormal)
                }
            };
            mus.push(mu);
            groups.push(group1);
            outcomes.push(outcome);
        }
        let scores: Vec<f64> = mus
            .iter()
            .zip(&groups)
            .map(|(mu, g1)| mu - if *g1 { config.tau } else { 0.0 })
            .collect();
        let order = model::optimal_ranking(&scores);
        let entries: Vec<Entry> = order
            .iter()
            .map(|&i| {
                Entry::new(if groups[i] { GROUP1 } else { GROUP0 }, outcomes[i])
            })
            .collect();
        let mut query = QueryRecord::new(format!("q{qi}"), entries)?;
        if config.gamma != 0.0 {
            query = model::position_adjust(&query, config.gamma)?;
        }
        queries.push(query);
        latents.push(order.iter().map(|&i| mus[i]).collect());
    }
    Ok((Dataset::new(queries), latents))
}

/// Simulates a dataset; deterministic given the seed.
pub fn simulate_dataset(config: &SimConfig) -> Result<Dataset, SimError> {
    Ok(simulate_dataset_with_latents(config)?.0)
}

/// Rejection frequency of the joint test for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerRow {
    pub config: SimConfig,
    pub reps: usize,
    pub rejections: usize,
    pub rejection_rate: f64,
    /// Binomial standard error of the rejection rate.
    pub mc_se: f64,
}

/// Settings of the audit applied to each simulated dataset.
#[derive(Debug, Clone, Copy)]
pub struct HarnessTest {
    pub alpha: f64,
    pub mc_reps: usize,
    pub min_n: usize,
    /// Display-convention position multiplier handed to the audit
    /// (`0` = no adjustment); converted internally to the swap-comparison
    /// factor.
    pub display_gamma: f64,
}

impl Default for HarnessTest {
    fn default() -> Self {
        HarnessTest {
            alpha: 0.05,
            mc_reps: 2_000,
            min_n: 30,
            display_gamma: 0.0,
        }
    }
}

/// Runs the adjacent-pair least-favorable joint test on `reps` fresh
/// datasets per configuration and tabulates rejection rates.
///
/// Replication `r` of configuration `i` draws its dataset from a child seed
/// of `(seed, i, r)` and is independent of every other replication, so the
/// table is reproducible under any parallelism.
pub fn run_size_power(
    config_grid: &[SimConfig],
    test: HarnessTest,
    reps: usize,
    seed: u64,
) -> Result<Vec<PowerRow>, SimError> {
    let adjustment = Adjustment::for_display_gamma(test.display_gamma, false)?;
    let mut rows = Vec::with_capacity(config_grid.len());
    for (ci, config) in config_grid.iter().enumerate() {
        config.validate()?;
        let rejections: usize = (0..reps)
            .into_par_iter()
            .map(|r| -> Result<usize, SimError> {
                let rep_seed = child_seed(seed, tag::REPLICATION, (ci * reps + r) as u64);
                let mut rep_config = *config;
                rep_config.seed = rep_seed;
                let dataset = simulate_dataset(&rep_config)?;
                let specs = moments::build_adjacent_family(
                    &dataset,
                    ConditioningMode::Pair,
                    adjustment,
                    None,
                );
                let estimates = moments::estimate_family(&dataset, &specs)?;
                let testable = inference::filter_testable(&estimates, test.min_n);
                let result =
                    inference::joint_test_lf(&testable, test.alpha, test.mc_reps, rep_seed)?;
                Ok(result.reject as usize)
            })
            .try_reduce(|| 0, |a, b| Ok(a + b))?;
        let rate = rejections as f64 / reps as f64;
        rows.push(PowerRow {
            config: *config,
            reps,
            rejections,
            rejection_rate: rate,
            mc_se: (rate * (1.0 - rate) / reps as f64).sqrt(),
        });
    }
    Ok(rows)
}

/// Rejection rate of a fixed small penalty as the list length grows.
///
/// Adjacent latent-quality gaps shrink as the list grows, so a penalty that
/// is invisible at `J = 2` becomes detectable for long lists. The design
/// concentrates qualities (`Normal(0.5, 0.15)`) so that central-rank gaps
/// fall below the penalty once `J` is large, and keeps outcome noise small
/// enough not to drown the contrast.
pub fn inframarginality_experiment(
    j_grid: &[usize],
    tau_small: f64,
    q: usize,
    test: HarnessTest,
    reps: usize,
    seed: u64,
) -> Result<Vec<PowerRow>, SimError> {
    if !tau_small.is_finite() || tau_small <= 0.0 {
        return Err(SimError::InvalidConfig(format!(
            "inframarginality experiment needs tau > 0, got {tau_small}"
        )));
    }
    let grid: Vec<SimConfig> = j_grid
        .iter()
        .map(|&j| SimConfig {
            candidates_per_query: j,
            queries: q,
            group1_probability: 0.5,
            quality: QualityLaw::Normal {
                mean: 0.5,
                sd: 0.15,
            },
            tau: tau_small,
            gamma: 0.0,
            noise: OutcomeNoise::AdditiveNormal { sd: 0.1 },
            seed: 0,
        })
        .collect();
    run_size_power(&grid, test, reps, seed)
}
