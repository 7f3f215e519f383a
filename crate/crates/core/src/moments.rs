//! Moment families implied by unbiased ranking, and their estimation.
//!
//! For ranks `a < b` and a group condition, unbiased ranking implies
//! `E[Y_a - Y_b | condition] >= 0`: swapping the two candidates whenever the
//! condition holds would otherwise raise the objective. Adjacent ranks
//! suffice, because the inequality for `(a, c)` is the sum of the inequalities
//! for the steps in between. [`build_adjacent_family`] enumerates the
//! adjacent-rank family and [`estimate_moment`] turns one member into sample
//! means, standard errors, and the per-query contributions later used for
//! joint inference.

use std::collections::{BTreeMap, BTreeSet};

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{self, Dataset, ModelError, QueryRecord, WeightScheme};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentError {
    #[error("moment ranks ({high}, {low}) are invalid: need 1 <= high < low")]
    InvalidRanks { high: usize, low: usize },
    #[error("moment rank {rank} exceeds the dataset's maximum list length {max_len}")]
    RankOutOfRange { rank: usize, max_len: usize },
    #[error("full-pattern condition of length {pattern} cannot cover rank {rank}")]
    PatternTooShort { pattern: usize, rank: usize },
    #[error("adjustment factor must satisfy gamma > -1, got {0}")]
    InvalidGamma(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The group condition attached to a rank comparison.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Conditioning {
    /// Condition only on the groups of the two compared ranks.
    Pair { high: String, low: String },
    /// Condition on the entire group vector of the query.
    FullPattern(Vec<String>),
}

impl Conditioning {
    /// Short label for report buckets: `FM` for single-character pair labels,
    /// `F>M` otherwise, and the comma-joined vector for full patterns.
    pub fn label(&self) -> String {
        match self {
            Conditioning::Pair { high, low } => {
                if high.chars().count() == 1 && low.chars().count() == 1 {
                    format!("{high}{low}")
                } else {
                    format!("{high}>{low}")
                }
            }
            Conditioning::FullPattern(pattern) => pattern.iter().join(","),
        }
    }
}

/// Outcome adjustments applied before a comparison.
///
/// `gamma` is the swap-comparison factor: the contribution for ranks
/// `(a, b)` is `Y_a - (1 + gamma) * Y_b`, comparing the outcome the
/// lower-ranked candidate would have realized in the higher slot. Zero means
/// outcomes do not depend on position. `normalized` divides each query's
/// outcomes by its IDCG first (queries with zero IDCG are dropped).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Adjustment {
    pub gamma: f64,
    pub normalized: bool,
}

impl Default for Adjustment {
    fn default() -> Self {
        Adjustment {
            gamma: 0.0,
            normalized: false,
        }
    }
}

impl Adjustment {
    pub fn none() -> Self {
        Adjustment::default()
    }

    /// Converts a display-side position multiplier into the swap-comparison
    /// factor.
    ///
    /// The simulator and the CLI describe position effects by the display
    /// multiplier `g`: the outcome observed at rank `r` is `(1 + g)^r` times
    /// the outcome the candidate would realize rank-free. Undoing that
    /// multiplier in the adjacent comparison requires the factor
    /// `1 / (1 + g)` on the lower-ranked outcome, i.e. a swap-comparison
    /// factor of `-g / (1 + g)`.
    pub fn for_display_gamma(g: f64, normalized: bool) -> Result<Self, MomentError> {
        if !g.is_finite() || g <= -1.0 {
            return Err(MomentError::InvalidGamma(g));
        }
        let gamma = if g == 0.0 { 0.0 } else { -g / (1.0 + g) };
        Ok(Adjustment { gamma, normalized })
    }
}

/// One moment inequality: ranks, group condition, optional feature stratum,
/// and outcome adjustment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSpec {
    pub high_rank: usize,
    pub low_rank: usize,
    pub conditioning: Conditioning,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stratum: Option<BTreeMap<String, String>>,
    pub adjustment: Adjustment,
}

impl MomentSpec {
    fn validate(&self, max_len: usize) -> Result<(), MomentError> {
        if self.high_rank < 1 || self.high_rank >= self.low_rank {
            return Err(MomentError::InvalidRanks {
                high: self.high_rank,
                low: self.low_rank,
            });
        }
        if self.low_rank > max_len {
            return Err(MomentError::RankOutOfRange {
                rank: self.low_rank,
                max_len,
            });
        }
        if let Conditioning::FullPattern(pattern) = &self.conditioning {
            if pattern.len() < self.low_rank {
                return Err(MomentError::PatternTooShort {
                    pattern: pattern.len(),
                    rank: self.low_rank,
                });
            }
        }
        if !self.adjustment.gamma.is_finite() || self.adjustment.gamma <= -1.0 {
            return Err(MomentError::InvalidGamma(self.adjustment.gamma));
        }
        Ok(())
    }

    fn matches(&self, query: &QueryRecord) -> bool {
        let cond = match &self.conditioning {
            Conditioning::Pair { high, low } => {
                query.group_at(self.high_rank) == Some(high.as_str())
                    && query.group_at(self.low_rank) == Some(low.as_str())
            }
            Conditioning::FullPattern(pattern) => {
                query.len() == pattern.len()
                    && query
                        .entries()
                        .iter()
                        .zip(pattern)
                        .all(|(e, g)| e.group == *g)
            }
        };
        if !cond {
            return false;
        }
        match &self.stratum {
            None => true,
            Some(stratum) => [self.high_rank, self.low_rank].iter().all(|&rank| {
                let features = &query.entries()[rank - 1].features;
                stratum
                    .iter()
                    .all(|(k, v)| features.get(k).map(String::as_str) == Some(v.as_str()))
            }),
        }
    }
}

/// Sample moment for one [`MomentSpec`].
///
/// A query is *usable* when it is long enough to exhibit the rank pair (and
/// survives normalization); `contributions` holds one slot per dataset query
/// with `None` for unusable ones. The unconditional view averages
/// `(Y_a - (1+gamma) Y_b) * 1[condition]` over usable queries; the
/// conditional view averages the same difference over matched queries only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub spec: MomentSpec,
    pub n_matched: usize,
    pub n_total: usize,
    pub mean_unconditional: f64,
    pub mean_conditional: Option<f64>,
    pub se_unconditional: Option<f64>,
    pub se_conditional: Option<f64>,
    #[serde(skip)]
    pub contributions: Vec<Option<f64>>,
}

impl MomentEstimate {
    /// True when the condition matched no usable query.
    pub fn is_empty(&self) -> bool {
        self.n_matched == 0
    }
}

/// Which group condition `build_adjacent_family` attaches to each rank pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditioningMode {
    Pair,
    FullPattern,
}

/// Enumerates the adjacent-rank moment family for a dataset.
///
/// One spec per rank pair `(a, a+1)` with `a < max_len`, crossed with every
/// ordered group pair (`Pair` mode) or every group vector over the observed
/// query lengths (`FullPattern` mode; exponential in list length, intended
/// for short lists), crossed with every observed value combination of
/// `strata_keys` when given. Specs whose condition never occurs are retained;
/// they estimate to `n_matched = 0`.
pub fn build_adjacent_family(
    dataset: &Dataset,
    mode: ConditioningMode,
    adjustment: Adjustment,
    strata_keys: Option<&[String]>,
) -> Vec<MomentSpec> {
    let strata = observed_strata(dataset, strata_keys);
    let mut specs = Vec::new();
    let conditions: Vec<(usize, Conditioning)> = match mode {
        ConditioningMode::Pair => {
            let alphabet: Vec<&String> = dataset.group_alphabet().iter().collect();
            (1..dataset.max_len())
                .cartesian_product(alphabet.iter().cartesian_product(alphabet.iter()))
                .map(|(a, (high, low))| {
                    (
                        a,
                        Conditioning::Pair {
                            high: (*high).clone(),
                            low: (*low).clone(),
                        },
                    )
                })
                .collect()
        }
        ConditioningMode::FullPattern => {
            let alphabet: Vec<&String> = dataset.group_alphabet().iter().collect();
            let lengths: BTreeSet<usize> = dataset.queries().iter().map(|q| q.len()).collect();
            let mut out = Vec::new();
            for len in lengths {
                for pattern in std::iter::repeat_n(alphabet.iter(), len).multi_cartesian_product()
                {
                    let pattern: Vec<String> =
                        pattern.into_iter().map(|g| (**g).clone()).collect();
                    for a in 1..len {
                        out.push((a, Conditioning::FullPattern(pattern.clone())));
                    }
                }
            }
            out
        }
    };
    for (a, conditioning) in conditions {
        for stratum in &strata {
            specs.push(MomentSpec {
                high_rank: a,
                low_rank: a + 1,
                conditioning: conditioning.clone(),
                stratum: stratum.clone(),
                adjustment,
            });
        }
    }
    specs
}

/// Distinct value combinations of `keys` observed on any entry; `vec![None]`
/// when no stratification is requested.
fn observed_strata(
    dataset: &Dataset,
    strata_keys: Option<&[String]>,
) -> Vec<Option<BTreeMap<String, String>>> {
    let Some(keys) = strata_keys else {
        return vec![None];
    };
    if keys.is_empty() {
        return vec![None];
    }
    let mut combos = BTreeSet::new();
    for q in dataset.queries() {
        for e in q.entries() {
            let combo: Option<BTreeMap<String, String>> = keys
                .iter()
                .map(|k| e.features.get(k).map(|v| (k.clone(), v.clone())))
                .collect();
            if let Some(c) = combo {
                combos.insert(c);
            }
        }
    }
    if combos.is_empty() {
        return vec![None];
    }
    combos.into_iter().map(Some).collect()
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, Option<f64>) {
    if n == 0 {
        return (0.0, None);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let ss = values.map(|v| (v - mean) * (v - mean)).sum::<f64>();
    let sd = (ss / (n - 1) as f64).sqrt();
    (mean, Some(sd / (n as f64).sqrt()))
}

/// Estimates one moment over a dataset.
///
/// Queries shorter than the low rank are unusable and excluded from
/// `n_total`; a zero-match condition yields `n_matched = 0` with an undefined
/// conditional mean, not an error.
pub fn estimate_moment(
    dataset: &Dataset,
    spec: &MomentSpec,
) -> Result<MomentEstimate, MomentError> {
    spec.validate(dataset.max_len())?;
    let weights = WeightScheme::ndcg();
    let one_plus_gamma = 1.0 + spec.adjustment.gamma;

    let mut contributions: Vec<Option<f64>> = Vec::with_capacity(dataset.len());
    let mut matched: Vec<f64> = Vec::new();
    for query in dataset.queries() {
        if query.len() < spec.low_rank {
            contributions.push(None);
            continue;
        }
        let normalized_query;
        let query = if spec.adjustment.normalized {
            match model::ndcg_normalize(query, &weights)? {
                Some(nq) => {
                    normalized_query = nq;
                    &normalized_query
                }
                None => {
                    contributions.push(None);
                    continue;
                }
            }
        } else {
            query
        };
        if spec.matches(query) {
            let y_high = query.outcome_at(spec.high_rank).expect("rank checked");
            let y_low = query.outcome_at(spec.low_rank).expect("rank checked");
            let c = y_high - one_plus_gamma * y_low;
            matched.push(c);
            contributions.push(Some(c));
        } else {
            contributions.push(Some(0.0));
        }
    }

    let n_total = contributions.iter().flatten().count();
    let n_matched = matched.len();
    let (mean_unconditional, se_unconditional) =
        mean_and_se(contributions.iter().copied().flatten(), n_total);
    let (mean_conditional, se_conditional) = if n_matched == 0 {
        (None, None)
    } else {
        let (m, se) = mean_and_se(matched.iter().copied(), n_matched);
        (Some(m), se)
    };

    Ok(MomentEstimate {
        spec: spec.clone(),
        n_matched,
        n_total,
        mean_unconditional,
        mean_conditional,
        se_unconditional,
        se_conditional,
        contributions,
    })
}

/// Estimates every spec in the family. Order of the output matches the input;
/// the computation itself may run in parallel.
pub fn estimate_family(
    dataset: &Dataset,
    specs: &[MomentSpec],
) -> Result<Vec<MomentEstimate>, MomentError> {
    specs
        .par_iter()
        .map(|spec| estimate_moment(dataset, spec))
        .collect()
}

/// Conditional means for ranks `(a,b)`, `(b,c)` and `(a,c)` under one full
/// group pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct TelescopeTriple {
    pub step_ab: Option<f64>,
    pub step_bc: Option<f64>,
    pub span_ac: Option<f64>,
    pub n_matched: usize,
}

/// Conditional means of the raw rank differences under `G = pattern`.
///
/// All three means run over the same matched queries, so
/// `span_ac = step_ab + step_bc` exactly up to rounding.
pub fn telescope_check(
    dataset: &Dataset,
    pattern: &[String],
    ranks: (usize, usize, usize),
) -> Result<TelescopeTriple, MomentError> {
    let (a, b, c) = ranks;
    if a < 1 || a >= b || b >= c {
        return Err(MomentError::InvalidRanks { high: a, low: c });
    }
    if pattern.len() < c {
        return Err(MomentError::PatternTooShort {
            pattern: pattern.len(),
            rank: c,
        });
    }
    let spec = MomentSpec {
        high_rank: a,
        low_rank: c,
        conditioning: Conditioning::FullPattern(pattern.to_vec()),
        stratum: None,
        adjustment: Adjustment::none(),
    };
    spec.validate(dataset.max_len())?;

    let mut sums = [0.0f64; 3];
    let mut n_matched = 0;
    for query in dataset.queries() {
        if spec.matches(query) {
            let ya = query.outcome_at(a).expect("rank checked");
            let yb = query.outcome_at(b).expect("rank checked");
            let yc = query.outcome_at(c).expect("rank checked");
            sums[0] += ya - yb;
            sums[1] += yb - yc;
            sums[2] += ya - yc;
            n_matched += 1;
        }
    }
    let mean = |s: f64| {
        if n_matched == 0 {
            None
        } else {
            Some(s / n_matched as f64)
        }
    };
    Ok(TelescopeTriple {
        step_ab: mean(sums[0]),
        step_bc: mean(sums[1]),
        span_ac: mean(sums[2]),
        n_matched,
    })
}
