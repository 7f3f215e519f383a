//! Executable sharpness check for the adjacent-rank inequalities.
//!
//! Over a finite-support distribution of (group pattern, outcome vector)
//! pairs, the inequalities `E[Y_a - Y_{a+1} | G = g] >= 0` are not just
//! necessary for unbiased ranking — they are all an auditor can ever test.
//! [`construct_information_structure`] makes that converse concrete: when
//! [`check_inequalities`] finds no violation, it builds a latent signal per
//! observed pattern (distributed like the pattern given its unordered
//! multiset, with outcomes distributed like the data) under which the
//! observed ranking is optimal for *every* strictly decreasing positive
//! weight sequence, and verifies that the construction reproduces the input
//! law exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::model::Dataset;

/// Tolerance for violations in the input distribution.
const INPUT_TOL: f64 = 1e-12;
/// Tolerance for the certificate's numerical verification.
const VERIFY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RationalizeError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One atom of the observed law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportPoint {
    pub pattern: Vec<String>,
    pub outcomes: Vec<f64>,
    pub probability: f64,
}

/// A finite-support distribution of rank-indexed (group, outcome) data.
///
/// Duplicate (pattern, outcomes) atoms are merged at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalRankDistribution {
    support: Vec<SupportPoint>,
    list_len: usize,
}

impl EmpiricalRankDistribution {
    pub fn new(points: Vec<SupportPoint>) -> Result<Self, RationalizeError> {
        let invalid = |msg: String| Err(RationalizeError::InvalidDistribution(msg));
        if points.is_empty() {
            return invalid("empty support".into());
        }
        let list_len = points[0].pattern.len();
        if list_len == 0 {
            return invalid("support points must rank at least one candidate".into());
        }
        let mut total = 0.0;
        for (i, p) in points.iter().enumerate() {
            if p.pattern.len() != list_len || p.outcomes.len() != list_len {
                return invalid(format!(
                    "support point {i} has length {} / {} but the first point has length {list_len}",
                    p.pattern.len(),
                    p.outcomes.len()
                ));
            }
            if !(p.probability.is_finite() && p.probability >= 0.0) {
                return invalid(format!("support point {i} has probability {}", p.probability));
            }
            if p.outcomes.iter().any(|y| !y.is_finite()) {
                return invalid(format!("support point {i} has a non-finite outcome"));
            }
            total += p.probability;
        }
        if (total - 1.0).abs() > INPUT_TOL {
            return invalid(format!("probabilities sum to {total}, not 1"));
        }
        // Merge exact duplicates.
        let mut merged: BTreeMap<(Vec<String>, Vec<u64>), SupportPoint> = BTreeMap::new();
        for p in points {
            let key = (
                p.pattern.clone(),
                p.outcomes.iter().map(|y| y.to_bits()).collect(),
            );
            merged
                .entry(key)
                .and_modify(|existing| existing.probability += p.probability)
                .or_insert(p);
        }
        Ok(EmpiricalRankDistribution {
            support: merged.into_values().collect(),
            list_len,
        })
    }

    /// The exact empirical law of a dataset whose queries all share one
    /// length; each query contributes mass `1/Q`.
    pub fn from_dataset(dataset: &Dataset) -> Result<Self, RationalizeError> {
        if dataset.is_empty() {
            return Err(RationalizeError::InvalidDistribution("empty dataset".into()));
        }
        let q = dataset.len() as f64;
        let points = dataset
            .queries()
            .iter()
            .map(|query| {
                if query.len() != dataset.max_len() {
                    return Err(RationalizeError::InvalidDistribution(format!(
                        "query {} has length {}, expected uniform length {}",
                        query.query_id(),
                        query.len(),
                        dataset.max_len()
                    )));
                }
                Ok(SupportPoint {
                    pattern: query.groups().iter().map(|g| g.to_string()).collect(),
                    outcomes: query.outcomes(),
                    probability: 1.0 / q,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        EmpiricalRankDistribution::new(points)
    }

    pub fn support(&self) -> &[SupportPoint] {
        &self.support
    }

    pub fn list_len(&self) -> usize {
        self.list_len
    }

    /// Pattern probabilities and conditional outcome means by rank.
    fn pattern_summaries(&self) -> BTreeMap<Vec<String>, (f64, Vec<f64>)> {
        let mut out: BTreeMap<Vec<String>, (f64, Vec<f64>)> = BTreeMap::new();
        for p in &self.support {
            let entry = out
                .entry(p.pattern.clone())
                .or_insert_with(|| (0.0, vec![0.0; self.list_len]));
            entry.0 += p.probability;
            for (acc, y) in entry.1.iter_mut().zip(&p.outcomes) {
                *acc += p.probability * y;
            }
        }
        for (mass, sums) in out.values_mut() {
            if *mass > 0.0 {
                for s in sums.iter_mut() {
                    *s /= *mass;
                }
            }
        }
        out.retain(|_, (mass, _)| *mass > 0.0);
        out
    }
}

/// One failed inequality: `E[Y_a - Y_{a+1} | G = pattern] = value < 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub pattern: Vec<String>,
    pub high_rank: usize,
    pub value: f64,
}

/// Evaluates every adjacent-rank inequality on every positive-probability
/// pattern; returns the failures.
pub fn check_inequalities(dist: &EmpiricalRankDistribution) -> Vec<Violation> {
    let mut violations = Vec::new();
    for (pattern, (_, means)) in dist.pattern_summaries() {
        for a in 1..dist.list_len() {
            let value = means[a - 1] - means[a];
            if value < -INPUT_TOL {
                violations.push(Violation {
                    pattern: pattern.clone(),
                    high_rank: a,
                    value,
                });
            }
        }
    }
    violations
}

/// The latent signal constructed for one observed pattern.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Signal {
    /// Signals are one-to-one with observed patterns.
    pub pattern: Vec<String>,
    /// Probability of this signal given the unordered group multiset.
    pub prob_given_multiset: f64,
    /// Outcome law under the signal: `(outcome vector, probability)`.
    pub conditional_outcomes: Vec<(Vec<f64>, f64)>,
    /// `E[Y_r | signal]` by rank; nonincreasing when the construction works.
    pub conditional_means: Vec<f64>,
}

/// Numerical checks backing a `Rationalized` verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verification {
    /// Smallest adjacent conditional-mean gap across signals (>= -1e-10).
    pub min_adjacent_gap: f64,
    /// Largest absolute error between the implied and input laws.
    pub max_probability_error: f64,
    pub means_monotone: bool,
    pub reproduces_input: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum RationalizationCertificate {
    Rationalized {
        signals: Vec<Signal>,
        verification: Verification,
    },
    Violated {
        violations: Vec<Violation>,
    },
}

impl RationalizationCertificate {
    pub fn is_rationalized(&self) -> bool {
        matches!(self, RationalizationCertificate::Rationalized { .. })
    }
}

/// Builds and verifies the rationalizing information structure, or reports
/// the witnessing violations.
///
/// The construction gives the decision-maker a signal equal to the observed
/// pattern: the signal's probability given the unordered multiset matches the
/// pattern's, and outcomes under the signal are distributed as in the data.
/// Ranking by the signal's conditional means then reproduces the observed
/// ranking, and because sorting by conditional means is optimal for any
/// strictly decreasing positive weights, no weight scheme is consulted.
pub fn construct_information_structure(
    dist: &EmpiricalRankDistribution,
) -> RationalizationCertificate {
    let violations = check_inequalities(dist);
    if !violations.is_empty() {
        return RationalizationCertificate::Violated { violations };
    }

    let summaries = dist.pattern_summaries();
    // Mass of each unordered multiset class.
    let mut multiset_mass: BTreeMap<Vec<String>, f64> = BTreeMap::new();
    for (pattern, (mass, _)) in &summaries {
        let mut key = pattern.clone();
        key.sort();
        *multiset_mass.entry(key).or_insert(0.0) += mass;
    }

    let mut signals = Vec::new();
    let mut min_gap = f64::INFINITY;
    let mut max_err: f64 = 0.0;
    for (pattern, (mass, means)) in &summaries {
        let mut key = pattern.clone();
        key.sort();
        let class_mass = multiset_mass[&key];
        let conditional_outcomes: Vec<(Vec<f64>, f64)> = dist
            .support()
            .iter()
            .filter(|p| &p.pattern == pattern && p.probability > 0.0)
            .map(|p| (p.outcomes.clone(), p.probability / mass))
            .collect();

        for a in 0..means.len().saturating_sub(1) {
            min_gap = min_gap.min(means[a] - means[a + 1]);
        }
        // Implied joint law: P({g}) * P(signal | {g}) * P(y | signal)
        // must reproduce each input atom's probability.
        for (outcomes, cond_prob) in &conditional_outcomes {
            let implied = class_mass * (mass / class_mass) * cond_prob;
            let input = dist
                .support()
                .iter()
                .find(|p| &p.pattern == pattern && &p.outcomes == outcomes)
                .map(|p| p.probability)
                .unwrap_or(0.0);
            max_err = max_err.max((implied - input).abs());
        }

        signals.push(Signal {
            pattern: pattern.clone(),
            prob_given_multiset: mass / class_mass,
            conditional_outcomes,
            conditional_means: means.clone(),
        });
    }
    if !min_gap.is_finite() {
        min_gap = 0.0; // single-rank lists have no adjacent pair
    }

    let verification = Verification {
        min_adjacent_gap: min_gap,
        max_probability_error: max_err,
        means_monotone: min_gap >= -VERIFY_TOL,
        reproduces_input: max_err <= VERIFY_TOL,
    };
    debug_assert!(verification.means_monotone && verification.reproduces_input);
    RationalizationCertificate::Rationalized {
        signals,
        verification,
    }
}

/// Parses the distribution text format: one atom per line,
/// `probability | group pattern | outcome vector`, with `#` comments.
///
/// ```text
/// # two equally likely lists
/// 0.5 | F M | 1 0
/// 0.5 | F M | 0 1
/// ```
pub fn parse_distribution(text: &str) -> Result<EmpiricalRankDistribution, RationalizeError> {
    let mut points = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse = |message: String| RationalizeError::Parse {
            line: i + 1,
            message,
        };
        let fields: Vec<&str> = line.split('|').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse(format!(
                "expected `probability | groups | outcomes`, got {} fields",
                fields.len()
            )));
        }
        let probability: f64 = fields[0]
            .parse()
            .map_err(|e| parse(format!("bad probability {:?}: {e}", fields[0])))?;
        let pattern: Vec<String> = fields[1].split_whitespace().map(String::from).collect();
        let outcomes: Vec<f64> = fields[2]
            .split_whitespace()
            .map(|t| t.parse().map_err(|e| parse(format!("bad outcome {t:?}: {e}"))))
            .collect::<Result<_, _>>()?;
        if pattern.is_empty() {
            return Err(parse("empty group pattern".into()));
        }
        points.push(SupportPoint {
            pattern,
            outcomes,
            probability,
        });
    }
    EmpiricalRankDistribution::new(points)
}

/// Renders a certificate as structured text.
pub fn render_certificate(certificate: &RationalizationCertificate) -> String {
    let mut out = String::new();
    match certificate {
        RationalizationCertificate::Violated { violations } => {
            writeln!(out, "status: violated").unwrap();
            writeln!(out, "violations: {}", violations.len()).unwrap();
            for v in violations {
                writeln!(
                    out,
                    "  pattern = {}; ranks ({}, {}): E[Y_{} - Y_{} | G] = {}",
                    v.pattern.join(" "),
                    v.high_rank,
                    v.high_rank + 1,
                    v.high_rank,
                    v.high_rank + 1,
                    v.value
                )
                .unwrap();
            }
        }
        RationalizationCertificate::Rationalized {
            signals,
            verification,
        } => {
            writeln!(out, "status: rationalized").unwrap();
            writeln!(out, "signals: {}", signals.len()).unwrap();
            for (i, s) in signals.iter().enumerate() {
                writeln!(
                    out,
                    "signal {}: pattern = {}; P(signal | multiset) = {}",
                    i + 1,
                    s.pattern.join(" "),
                    s.prob_given_multiset
                )
                .unwrap();
                writeln!(
                    out,
                    "  E[Y_r | signal] = {}",
                    s.conditional_means
                        .iter()
                        .map(|m| m.to_string())
                        .collect::<Vec<_>>()
                        .join(" ")
                )
                .unwrap();
                for (y, p) in &s.conditional_outcomes {
                    writeln!(
                        out,
                        "  p = {p}; y = {}",
                        y.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
                    )
                    .unwrap();
                }
            }
            writeln!(
                out,
                "verification: means monotone = {} (min adjacent gap {}); reproduces input = {} (max error {})",
                verification.means_monotone,
                verification.min_adjacent_gap,
                verification.reproduces_input,
                verification.max_probability_error
            )
            .unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(pattern: &[&str], outcomes: &[f64], probability: f64) -> SupportPoint {
        SupportPoint {
            pattern: pattern.iter().map(|s| s.to_string()).collect(),
            outcomes: outcomes.to_vec(),
            probability,
        }
    }

    #[test]
    fn decreasing_outcomes_have_no_violations() {
        let d =
            EmpiricalRankDistribution::new(vec![point(&["F", "M", "M"], &[3.0, 2.0, 1.0], 1.0)])
                .unwrap();
        assert!(check_inequalities(&d).is_empty());
        assert!(construct_information_structure(&d).is_rationalized());
    }

    #[test]
    fn increasing_outcomes_violate() {
        let d = EmpiricalRankDistribution::new(vec![point(&["F", "M"], &[0.0, 1.0], 1.0)]).unwrap();
        let violations = check_inequalities(&d);
        assert_eq!(violations.len(), 1);
        assert_eq!(violations[0].high_rank, 1);
        assert_eq!(violations[0].value, -1.0);
        let cert = construct_information_structure(&d);
        assert!(!cert.is_rationalized());
    }

    #[test]
    fn binding_two_point_case_rationalizes() {
        let d = EmpiricalRankDistribution::new(vec![
            point(&["F", "M"], &[1.0, 0.0], 0.5),
            point(&["F", "M"], &[0.0, 1.0], 0.5),
        ])
        .unwrap();
        assert!(check_inequalities(&d).is_empty());
        match construct_information_structure(&d) {
            RationalizationCertificate::Rationalized {
                signals,
                verification,
            } => {
                assert_eq!(signals.len(), 1);
                assert_eq!(signals[0].conditional_means, vec![0.5, 0.5]);
                assert_eq!(signals[0].prob_given_multiset, 1.0);
                assert!(verification.means_monotone);
                assert!(verification.reproduces_input);
            }
            other => panic!("expected rationalization, got {other:?}"),
        }
    }

    #[test]
    fn multiset_probabilities_split_between_orderings() {
        // Same multiset {F, M}, two orderings with unequal mass.
        let d = EmpiricalRankDistribution::new(vec![
            point(&["F", "M"], &[1.0, 0.0], 0.75),
            point(&["M", "F"], &[2.0, 1.0], 0.25),
        ])
        .unwrap();
        match construct_information_structure(&d) {
            RationalizationCertificate::Rationalized { signals, .. } => {
                let probs: Vec<f64> = signals.iter().map(|s| s.prob_given_multiset).collect();
                assert_eq!(probs, vec![0.75, 0.25]);
            }
            other => panic!("expected rationalization, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_atoms_merge() {
        let d = EmpiricalRankDistribution::new(vec![
            point(&["F"], &[1.0], 0.5),
            point(&["F"], &[1.0], 0.5),
        ])
        .unwrap();
        assert_eq!(d.support().len(), 1);
        assert_eq!(d.support()[0].probability, 1.0);
    }

    #[test]
    fn invalid_distributions_are_rejected() {
        assert!(EmpiricalRankDistribution::new(vec![]).is_err());
        assert!(
            EmpiricalRankDistribution::new(vec![point(&["F", "M"], &[1.0, 0.0], 0.9)]).is_err()
        );
        assert!(EmpiricalRankDistribution::new(vec![
            point(&["F", "M"], &[1.0, 0.0], 0.5),
            point(&["F"], &[1.0], 0.5),
        ])
        .is_err());
        assert!(
            EmpiricalRankDistribution::new(vec![point(&["F"], &[f64::NAN], 1.0)]).is_err()
        );
    }

    #[test]
    fn text_format_round_trip() {
        let text = "# comment\n0.5 | F M | 1 0\n0.5 | F M | 0 1 # binding pair\n";
        let d = parse_distribution(text).unwrap();
        assert_eq!(d.support().len(), 2);
        assert_eq!(d.list_len(), 2);
        let cert = construct_information_structure(&d);
        let rendered = render_certificate(&cert);
        assert!(rendered.starts_with("status: rationalized"));

        let bad = parse_distribution("0.5 | F M\n");
        assert!(matches!(bad, Err(RationalizeError::Parse { line: 1, .. })));
    }

    #[test]
    fn noise_free_unbiased_simulation_rationalizes() {
        use crate::simulate::{simulate_dataset, OutcomeNoise, SimConfig};
        let mut config = SimConfig::uniform_bernoulli(3, 50, 0.0, 21);
        config.noise = OutcomeNoise::AdditiveNormal { sd: 0.0 };
        let dataset = simulate_dataset(&config).unwrap();
        let d = EmpiricalRankDistribution::from_dataset(&dataset).unwrap();
        assert!(check_inequalities(&d).is_empty());
        assert!(construct_information_structure(&d).is_rationalized());
    }
}
