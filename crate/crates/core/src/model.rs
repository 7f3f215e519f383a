//! Domain types for ranked-list data and the ranking objective.
//!
//! A [`QueryRecord`] is one ranked list: rank 1 is best, and each rank holds
//! a group label, a realized outcome, and optional discrete features. A
//! [`WeightScheme`] is the strictly decreasing positive weight sequence of
//! the Ranker's objective; [`dcg`]/[`idcg`]/[`objective_value`] evaluate it,
//! and [`optimal_ranking`] is the sort rule an unbiased Ranker follows.

use std::collections::{BTreeMap, BTreeSet};

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("rank must be at least 1")]
    InvalidRank,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("query {query_id} has no candidates")]
    EmptyQuery { query_id: String },
    #[error("query {query_id} has a non-finite outcome at rank {rank}")]
    NonFiniteOutcome { query_id: String, rank: usize },
    #[error("query {query_id} has a negative outcome at rank {rank}; NDCG normalization requires nonnegative outcomes")]
    NegativeOutcome { query_id: String, rank: usize },
    #[error("position effect factor must satisfy gamma > -1, got {0}")]
    InvalidGamma(f64),
    #[error("sequence of length {len} exceeds the {weights} explicit weights")]
    TooFewWeights { len: usize, weights: usize },
}

/// One candidate slot in a ranked list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub group: String,
    pub outcome: f64,
    /// Observed discrete features, if any.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub features: BTreeMap<String, String>,
}

impl Entry {
    pub fn new(group: impl Into<String>, outcome: f64) -> Self {
        Entry {
            group: group.into(),
            outcome,
            features: BTreeMap::new(),
        }
    }
}

/// One ranked list. Entries are stored in rank order: `entries[0]` is rank 1.
///
/// Immutable after construction; all outcomes are finite and there is at
/// least one entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    query_id: String,
    entries: Vec<Entry>,
}

impl QueryRecord {
    pub fn new(query_id: impl Into<String>, entries: Vec<Entry>) -> Result<Self, ModelError> {
        let query_id = query_id.into();
        if entries.is_empty() {
            return Err(ModelError::EmptyQuery { query_id });
        }
        for (i, e) in entries.iter().enumerate() {
            if !e.outcome.is_finite() {
                return Err(ModelError::NonFiniteOutcome {
                    query_id,
                    rank: i + 1,
                });
            }
        }
        Ok(QueryRecord { query_id, entries })
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Number of candidates `J_q`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Outcome of the candidate at `rank` (1-based).
    pub fn outcome_at(&self, rank: usize) -> Option<f64> {
        self.entries.get(rank.checked_sub(1)?).map(|e| e.outcome)
    }

    /// Group label of the candidate at `rank` (1-based).
    pub fn group_at(&self, rank: usize) -> Option<&str> {
        self.entries
            .get(rank.checked_sub(1)?)
            .map(|e| e.group.as_str())
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.outcome).collect()
    }

    pub fn groups(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.group.as_str()).collect()
    }

    fn with_outcomes(&self, outcomes: Vec<f64>) -> QueryRecord {
        let entries = self
            .entries
            .iter()
            .zip(outcomes)
            .map(|(e, outcome)| Entry {
                group: e.group.clone(),
                outcome,
                features: e.features.clone(),
            })
            .collect();
        QueryRecord {
            query_id: self.query_id.clone(),
            entries,
        }
    }
}

/// A collection of queries plus derived summary facts.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    queries: Vec<QueryRecord>,
    group_alphabet: BTreeSet<String>,
    max_len: usize,
}

impl Dataset {
    pub fn new(queries: Vec<QueryRecord>) -> Self {
        let mut group_alphabet = BTreeSet::new();
        let mut max_len = 0;
        for q in &queries {
            max_len = max_len.max(q.len());
            for e in q.entries() {
                if !group_alphabet.contains(&e.group) {
                    group_alphabet.insert(e.group.clone());
                }
            }
        }
        Dataset {
            queries,
            group_alphabet,
            max_len,
        }
    }

    pub fn queries(&self) -> &[QueryRecord] {
        &self.queries
    }

    pub fn group_alphabet(&self) -> &BTreeSet<String> {
        &self.group_alphabet
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }
}

/// The NDCG discount for `rank` (1-based): `1 / log2(rank + 1)`.
pub fn ndcg_weight(rank: usize) -> Result<f64, ModelError> {
    if rank < 1 {
        return Err(ModelError::InvalidRank);
    }
    Ok(1.0 / ((rank as f64) + 1.0).log2())
}

/// A strictly decreasing sequence of positive rank weights.
///
/// `Ndcg` and `Geometric` extend to any length; `Explicit` is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WeightScheme {
    /// `w_r = 1 / log2(r + 1)`.
    Ndcg,
    /// `w_r = 1 / (1 + gamma)^r`, requiring `gamma > 0` so the weights
    /// decrease.
    Geometric(f64),
    /// A caller-supplied weight vector.
    Explicit(Vec<f64>),
}

impl WeightScheme {
    pub fn ndcg() -> Self {
        WeightScheme::Ndcg
    }

    pub fn geometric(gamma: f64) -> Result<Self, ModelError> {
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(ModelError::InvalidWeights(format!(
                "geometric weights 1/(1+gamma)^r decrease only for gamma > 0, got {gamma}"
            )));
        }
        Ok(WeightScheme::Geometric(gamma))
    }

    pub fn explicit(weights: Vec<f64>) -> Result<Self, ModelError> {
        if weights.is_empty() {
            return Err(ModelError::InvalidWeights("empty weight vector".into()));
        }
        for (i, w) in weights.iter().enumerate() {
            if !w.is_finite() || *w <= 0.0 {
                return Err(ModelError::InvalidWeights(format!(
                    "weight {w} at rank {} is not positive",
                    i + 1
                )));
            }
            if i > 0 && weights[i - 1] <= *w {
                return Err(ModelError::InvalidWeights(format!(
                    "weights must strictly decrease, but w_{} <= w_{}",
                    i,
                    i + 1
                )));
            }
        }
        Ok(WeightScheme::Explicit(weights))
    }

    /// Weight for `rank` (1-based).
    pub fn weight(&self, rank: usize) -> Result<f64, ModelError> {
        if rank < 1 {
            return Err(ModelError::InvalidRank);
        }
        match self {
            WeightScheme::Ndcg => ndcg_weight(rank),
            WeightScheme::Geometric(gamma) => Ok((1.0 + gamma).powi(-(rank as i32))),
            WeightScheme::Explicit(ws) => {
                ws.get(rank - 1).copied().ok_or(ModelError::TooFewWeights {
                    len: rank,
                    weights: ws.len(),
                })
            }
        }
    }

    /// The first `len` weights.
    pub fn weights(&self, len: usize) -> Result<Vec<f64>, ModelError> {
        (1..=len).map(|r| self.weight(r)).collect()
    }
}

/// Weighted sum of outcomes in the order given.
pub fn dcg(outcomes_by_rank: &[f64], weights: &WeightScheme) -> Result<f64, ModelError> {
    let ws = weights.weights(outcomes_by_rank.len())?;
    Ok(outcomes_by_rank
        .iter()
        .zip(&ws)
        .map(|(y, w)| w * y)
        .sum())
}

/// The ideal (perfectly sorted) value of [`dcg`] for the outcome multiset.
pub fn idcg(outcomes: &[f64], weights: &WeightScheme) -> Result<f64, ModelError> {
    let mut sorted = outcomes.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    dcg(&sorted, weights)
}

/// Divides every outcome in the query by the query's IDCG.
///
/// Returns `Ok(None)` when the IDCG is zero (all outcomes zero); such
/// queries carry no normalized information and are skipped by callers.
/// Negative outcomes are a domain error.
pub fn ndcg_normalize(
    query: &QueryRecord,
    weights: &WeightScheme,
) -> Result<Option<QueryRecord>, ModelError> {
    for (i, e) in query.entries().iter().enumerate() {
        if e.outcome < 0.0 {
            return Err(ModelError::NegativeOutcome {
                query_id: query.query_id().to_string(),
                rank: i + 1,
            });
        }
    }
    let denom = idcg(&query.outcomes(), weights)?;
    if denom == 0.0 {
        return Ok(None);
    }
    let outcomes = query.outcomes().iter().map(|y| y / denom).collect();
    Ok(Some(query.with_outcomes(outcomes)))
}

/// Multiplies the outcome at rank `r` by `(1 + gamma)^r`.
///
/// With `gamma` the per-step display effect (one position later changes the
/// outcome by the factor `1/(1+gamma)`), this recovers rank-free outcomes
/// from observed ones.
pub fn position_adjust(query: &QueryRecord, gamma: f64) -> Result<QueryRecord, ModelError> {
    if !gamma.is_finite() || gamma <= -1.0 {
        return Err(ModelError::InvalidGamma(gamma));
    }
    let outcomes = query
        .outcomes()
        .iter()
        .enumerate()
        .map(|(i, y)| (1.0 + gamma).powi((i + 1) as i32) * y)
        .collect();
    Ok(query.with_outcomes(outcomes))
}

/// The realized objective `sum_r w_r * Y_{(r)}` of a ranked list.
pub fn objective_value(query: &QueryRecord, weights: &WeightScheme) -> Result<f64, ModelError> {
    dcg(&query.outcomes(), weights)
}

/// The ranking an unbiased Ranker produces: candidate indices sorted by
/// descending expected outcome, ties broken by original index.
///
/// `result[r - 1]` is the 0-based index of the candidate placed at rank `r`.
pub fn optimal_ranking(expected_outcomes: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..expected_outcomes.len()).collect();
    order.sort_by(|&i, &j| {
        expected_outcomes[j]
            .total_cmp(&expected_outcomes[i])
            .then(i.cmp(&j))
    });
    order
}

/// Exhaustive-search maximum of the objective over all orderings.
///
/// Independent check of [`optimal_ranking`]; factorial cost, so only
/// sensible for short lists.
pub fn max_objective_exhaustive(
    outcomes: &[f64],
    weights: &WeightScheme,
) -> Result<f64, ModelError> {
    assert!(outcomes.len() <= 9, "exhaustive search is factorial");
    let ws = weights.weights(outcomes.len())?;
    let mut best = f64::NEG_INFINITY;
    for perm in (0..outcomes.len()).permutations(outcomes.len()) {
        let value: f64 = perm
            .iter()
            .zip(&ws)
            .map(|(&i, w)| w * outcomes[i])
            .sum();
        best = best.max(value);
    }
    if outcomes.is_empty() {
        best = 0.0;
    }
    Ok(best)
}

/// NDCG-normalizes every query, dropping zero-IDCG queries.
///
/// Returns the surviving dataset and the number of skipped queries.
pub fn ndcg_normalize_dataset(
    dataset: &Dataset,
    weights: &WeightScheme,
) -> Result<(Dataset, usize), ModelError> {
    let mut kept = Vec::with_capacity(dataset.len());
    let mut skipped = 0;
    for q in dataset.queries() {
        match ndcg_normalize(q, weights)? {
            Some(nq) => kept.push(nq),
            None => skipped += 1,
        }
    }
    Ok((Dataset::new(kept), skipped))
}
