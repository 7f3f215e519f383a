//! Pointwise and joint tests of the moment inequalities.
//!
//! Each moment is tested one-sided against `H0: mean >= 0`; small p-values
//! signal a violation. The joint test uses the max of the studentized
//! violation statistics with least-favorable critical values: the reference
//! distribution assumes every moment has mean exactly zero, simulated from a
//! multivariate normal with the estimated contribution correlations. A
//! Bonferroni aggregation of the pointwise p-values is available as a
//! conservative cross-check.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::moments::{Conditioning, MomentEstimate, MomentSpec};
use crate::rng::{substream, tag};

/// 0.975 quantile of the standard normal, for two-sided 95% intervals.
const Z_975: f64 = 1.959963984540054;

/// Eigenvalues of the estimated correlation matrix are floored here before
/// factorization; group-pair indicators make near-singularity routine.
const EIGENVALUE_FLOOR: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("no testable moments (all were filtered by the minimum-sample rule or had zero variance)")]
    NoTestableMoments,
    #[error("subset tests require pair conditioning")]
    RequiresPairConditioning,
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// One-sided t-test of a single moment.
///
/// Undefined (all-`None`) when fewer than two queries matched. With zero
/// sample variance the p-value degenerates by convention: 1 when the mean is
/// positive (no evidence of violation), 0 when negative, 0.5 at zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointwiseResult {
    pub spec: MomentSpec,
    pub n_matched: usize,
    pub t_stat: Option<f64>,
    pub p_value: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
}

pub fn pointwise_test(estimate: &MomentEstimate) -> PointwiseResult {
    let undefined = PointwiseResult {
        spec: estimate.spec.clone(),
        n_matched: estimate.n_matched,
        t_stat: None,
        p_value: None,
        ci_lower: None,
        ci_upper: None,
    };
    let (Some(mean), Some(se)) = (estimate.mean_conditional, estimate.se_conditional) else {
        return undefined;
    };
    if se == 0.0 {
        let p = if mean > 0.0 {
            1.0
        } else if mean < 0.0 {
            0.0
        } else {
            0.5
        };
        return PointwiseResult {
            p_value: Some(p),
            ci_lower: Some(mean),
            ci_upper: Some(mean),
            ..undefined
        };
    }
    let t = mean / se;
    PointwiseResult {
        spec: estimate.spec.clone(),
        n_matched: estimate.n_matched,
        t_stat: Some(t),
        p_value: Some(norm_cdf(t)),
        ci_lower: Some(mean - Z_975 * se),
        ci_upper: Some(mean + Z_975 * se),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JointMethod {
    LeastFavorable,
    Bonferroni,
}

/// Joint test over a moment family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointResult {
    /// Which moments entered: `all` or a group-pair label.
    pub subset: String,
    /// Number of moments tested after filtering.
    pub k: usize,
    /// Max over moments of `-sqrt(n) * mean_unconditional / sd`.
    pub t_stat: f64,
    /// `(alpha, critical value)` pairs from the same Monte Carlo draws;
    /// empty for Bonferroni.
    pub critical_values: Vec<(f64, f64)>,
    pub p_value: f64,
    pub method: JointMethod,
    pub mc_reps: usize,
    pub seed: u64,
    /// Whether `t_stat` exceeds the critical value at the requested level.
    pub reject: bool,
    /// Moments dropped for having zero sample variance.
    pub dropped_zero_variance: usize,
}

/// Applies the minimum-sample rule: moments whose condition matched fewer
/// than `min_n` queries (never fewer than two) are excluded from joint
/// testing but remain reportable.
pub fn filter_testable(estimates: &[MomentEstimate], min_n: usize) -> Vec<&MomentEstimate> {
    let floor = min_n.max(2);
    estimates.iter().filter(|e| e.n_matched >= floor).collect()
}

/// The studentized violation statistic `-mean / se`, large when the moment
/// looks negative.
fn violation_stat(estimate: &MomentEstimate) -> Option<f64> {
    match estimate.se_unconditional {
        Some(se) if se > 0.0 => Some(-estimate.mean_unconditional / se),
        _ => None,
    }
}

/// Pairwise-complete sample correlation of two contribution vectors.
fn pairwise_correlation(a: &[Option<f64>], b: &[Option<f64>]) -> f64 {
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .zip(b)
        .filter_map(|(x, y)| Some(((*x)?, (*y)?)))
        .collect();
    let n = pairs.len();
    if n < 2 {
        return 0.0;
    }
    let (mx, my) = pairs
        .iter()
        .fold((0.0, 0.0), |(sx, sy), (x, y)| (sx + x, sy + y));
    let (mx, my) = (mx / n as f64, my / n as f64);
    let (mut cxy, mut cxx, mut cyy) = (0.0, 0.0, 0.0);
    for (x, y) in &pairs {
        cxy += (x - mx) * (y - my);
        cxx += (x - mx) * (x - mx);
        cyy += (y - my) * (y - my);
    }
    if cxx == 0.0 || cyy == 0.0 {
        return 0.0;
    }
    (cxy / (cxx * cyy).sqrt()).clamp(-1.0, 1.0)
}

fn correlation_matrix(estimates: &[&MomentEstimate]) -> DMatrix<f64> {
    let k = estimates.len();
    let mut omega = DMatrix::identity(k, k);
    for i in 0..k {
        for j in (i + 1)..k {
            let rho =
                pairwise_correlation(&estimates[i].contributions, &estimates[j].contributions);
            omega[(i, j)] = rho;
            omega[(j, i)] = rho;
        }
    }
    omega
}

/// Symmetric square-root factor of the correlation matrix with eigenvalues
/// floored for near-singular inputs.
fn floored_factor(omega: DMatrix<f64>) -> DMatrix<f64> {
    let eigen = omega.symmetric_eigen();
    let scaled = DMatrix::from_diagonal(&eigen.eigenvalues.map(|v| v.max(EIGENVALUE_FLOOR).sqrt()));
    eigen.eigenvectors * scaled
}

/// Simulated maxima of a mean-zero multivariate normal with the given factor.
/// Draw `i` comes from the substream keyed by `(seed, i)`, so the result is
/// independent of evaluation order.
fn simulate_maxima(factor: &DMatrix<f64>, mc_reps: usize, seed: u64) -> Vec<f64> {
    let k = factor.nrows();
    (0..mc_reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, &[tag::MC_DRAW, i as u64]);
            let z = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
            let x = factor * z;
            x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// The `(1 - alpha)` empirical quantile (order-statistic convention).
fn empirical_quantile(sorted: &[f64], alpha: f64) -> f64 {
    let n = sorted.len();
    let k = (((1.0 - alpha) * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

fn critical_alphas(alpha: f64) -> Vec<f64> {
    let mut alphas = vec![0.01, 0.05, 0.10];
    if !alphas.iter().any(|a| (a - alpha).abs() < 1e-12) {
        alphas.push(alpha);
    }
    alphas.sort_by(f64::total_cmp);
    alphas
}

/// Least-favorable joint test.
///
/// The statistic is the max studentized violation over the testable moments;
/// critical values and the Monte Carlo p-value `(1 + hits) / (mc_reps + 1)`
/// come from `mc_reps` draws of a mean-zero normal vector with the estimated
/// contribution correlations. Moments with zero sample variance are dropped
/// (counted in the result); an empty family is an error.
pub fn joint_test_lf(
    estimates: &[&MomentEstimate],
    alpha: f64,
    mc_reps: usize,
    seed: u64,
) -> Result<JointResult, InferenceError> {
    joint_test_lf_labeled("all", estimates, alpha, mc_reps, seed)
}

fn joint_test_lf_labeled(
    subset: &str,
    estimates: &[&MomentEstimate],
    alpha: f64,
    mc_reps: usize,
    seed: u64,
) -> Result<JointResult, InferenceError> {
    let mut testable = Vec::new();
    let mut stats = Vec::new();
    let mut dropped = 0;
    for e in estimates {
        match violation_stat(e) {
            Some(v) => {
                testable.push(*e);
                stats.push(v);
            }
            None => dropped += 1,
        }
    }
    if testable.is_empty() {
        return Err(InferenceError::NoTestableMoments);
    }
    let t_stat = stats.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let factor = floored_factor(correlation_matrix(&testable));
    let mut maxima = simulate_maxima(&factor, mc_reps, seed);
    let hits = maxima.iter().filter(|m| **m >= t_stat).count();
    let p_value = (1 + hits) as f64 / (mc_reps + 1) as f64;
    maxima.sort_by(f64::total_cmp);
    let critical_values: Vec<(f64, f64)> = critical_alphas(alpha)
        .into_iter()
        .map(|a| (a, empirical_quantile(&maxima, a)))
        .collect();
    let c_alpha = critical_values
        .iter()
        .find(|(a, _)| (a - alpha).abs() < 1e-12)
        .map(|(_, c)| *c)
        .expect("requested alpha present");

    Ok(JointResult {
        subset: subset.to_string(),
        k: testable.len(),
        t_stat,
        critical_values,
        p_value,
        method: JointMethod::LeastFavorable,
        mc_reps,
        seed,
        reject: t_stat > c_alpha,
        dropped_zero_variance: dropped,
    })
}

/// Bonferroni aggregation: `p = min(1, K * min pointwise p)`.
pub fn joint_test_bonferroni(
    estimates: &[&MomentEstimate],
    alpha: f64,
    seed: u64,
) -> Result<JointResult, InferenceError> {
    joint_test_bonferroni_labeled("all", estimates, alpha, seed)
}

fn joint_test_bonferroni_labeled(
    subset: &str,
    estimates: &[&MomentEstimate],
    alpha: f64,
    seed: u64,
) -> Result<JointResult, InferenceError> {
    let mut testable = Vec::new();
    let mut dropped = 0;
    let mut min_p = f64::INFINITY;
    let mut t_stat = f64::NEG_INFINITY;
    for e in estimates {
        let (Some(p), Some(v)) = (pointwise_test(e).p_value, violation_stat(e)) else {
            dropped += 1;
            continue;
        };
        testable.push(*e);
        min_p = min_p.min(p);
        t_stat = t_stat.max(v);
    }
    if testable.is_empty() {
        return Err(InferenceError::NoTestableMoments);
    }
    let p_value = (testable.len() as f64 * min_p).min(1.0);
    Ok(JointResult {
        subset: subset.to_string(),
        k: testable.len(),
        t_stat,
        critical_values: Vec::new(),
        p_value,
        method: JointMethod::Bonferroni,
        mc_reps: 0,
        seed,
        reject: p_value <= alpha,
        dropped_zero_variance: dropped,
    })
}

/// Joint tests per group-pair configuration plus one over all moments.
///
/// Requires pair conditioning. Input estimates should already have passed the
/// minimum-sample rule ([`filter_testable`]); subsets that end up empty are
/// omitted.
pub fn subset_joint_tests(
    estimates: &[&MomentEstimate],
    alpha: f64,
    mc_reps: usize,
    seed: u64,
    method: JointMethod,
) -> Result<Vec<JointResult>, InferenceError> {
    if estimates
        .iter()
        .any(|e| !matches!(e.spec.conditioning, Conditioning::Pair { .. }))
    {
        return Err(InferenceError::RequiresPairConditioning);
    }
    if estimates.is_empty() {
        return Err(InferenceError::NoTestableMoments);
    }
    let run = |label: &str, subset: &[&MomentEstimate]| match method {
        JointMethod::LeastFavorable => {
            joint_test_lf_labeled(label, subset, alpha, mc_reps, seed)
        }
        JointMethod::Bonferroni => joint_test_bonferroni_labeled(label, subset, alpha, seed),
    };

    let mut results = vec![run("all", estimates)?];
    let mut labels: Vec<String> = estimates
        .iter()
        .map(|e| e.spec.conditioning.label())
        .collect();
    labels.sort();
    labels.dedup();
    for label in labels {
        let subset: Vec<&MomentEstimate> = estimates
            .iter()
            .copied()
            .filter(|e| e.spec.conditioning.label() == label)
            .collect();
        match run(&label, &subset) {
            Ok(r) => results.push(r),
            Err(InferenceError::NoTestableMoments) => {} // omitted with warning upstream
            Err(e) => return Err(e),
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::Adjustment;
    use approx::assert_abs_diff_eq;

    /// Builds an estimate directly from its contribution vector, every query
    /// matched.
    fn estimate_from(contributions: Vec<f64>) -> MomentEstimate {
        let n = contributions.len();
        let mean = contributions.iter().sum::<f64>() / n as f64;
        let ss: f64 = contributions.iter().map(|c| (c - mean) * (c - mean)).sum();
        let se = if n < 2 {
            None
        } else {
            Some((ss / (n - 1) as f64).sqrt() / (n as f64).sqrt())
        };
        MomentEstimate {
            spec: MomentSpec {
                high_rank: 1,
                low_rank: 2,
                conditioning: Conditioning::Pair {
                    high: "g".into(),
                    low: "g".into(),
                },
                stratum: None,
                adjustment: Adjustment::none(),
            },
            n_matched: n,
            n_total: n,
            mean_unconditional: mean,
            mean_conditional: Some(mean),
            se_unconditional: se,
            se_conditional: se,
            contributions: contributions.into_iter().map(Some).collect(),
        }
    }

    #[test]
    fn pointwise_hand_examples() {
        let r = pointwise_test(&estimate_from(vec![1.0, -1.0, 1.0, -1.0]));
        assert_abs_diff_eq!(r.t_stat.unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.p_value.unwrap(), 0.5, epsilon = 1e-12);

        let r = pointwise_test(&estimate_from(vec![-1.0, -1.0, -1.0, -1.0]));
        assert_eq!(r.p_value, Some(0.0));
        assert_eq!(r.t_stat, None);

        let r = pointwise_test(&estimate_from(vec![2.0, 0.0, 2.0, 0.0]));
        assert_abs_diff_eq!(r.t_stat.unwrap(), 1.7320508075688772, epsilon = 1e-12);
        assert_abs_diff_eq!(r.p_value.unwrap(), 0.95835, epsilon = 1e-4);
        assert_abs_diff_eq!(
            r.ci_lower.unwrap(),
            1.0 - Z_975 * 0.5773502691896258,
            epsilon = 1e-12
        );
    }

    #[test]
    fn pointwise_degenerate_conventions() {
        let r = pointwise_test(&estimate_from(vec![2.0, 2.0, 2.0]));
        assert_eq!(r.p_value, Some(1.0));
        let r = pointwise_test(&estimate_from(vec![0.0, 0.0, 0.0]));
        assert_eq!(r.p_value, Some(0.5));
        let r = pointwise_test(&estimate_from(vec![5.0]));
        assert_eq!(r.p_value, None);
    }

    #[test]
    fn bonferroni_examples() {
        // K = 1 equals the pointwise p.
        let e = estimate_from(vec![2.0, 0.0, 2.0, 0.0]);
        let point = pointwise_test(&e).p_value.unwrap();
        let joint = joint_test_bonferroni(&[&e], 0.05, 0).unwrap();
        assert_abs_diff_eq!(joint.p_value, point, epsilon = 1e-12);

        // Clamping.
        let es: Vec<MomentEstimate> = (0..10)
            .map(|i| estimate_from(vec![1.0 + i as f64, -1.0, 1.0, -1.0, 0.5]))
            .collect();
        let refs: Vec<&MomentEstimate> = es.iter().collect();
        let joint = joint_test_bonferroni(&refs, 0.05, 0).unwrap();
        assert!(joint.p_value <= 1.0);
    }

    #[test]
    fn lf_single_moment_matches_pointwise() {
        // Mildly negative mean so both tests sit mid-distribution.
        let contributions: Vec<f64> = (0..200)
            .map(|i| if i % 2 == 0 { 0.9 } else { -1.0 })
            .collect();
        let e = estimate_from(contributions);
        let point = pointwise_test(&e).p_value.unwrap();
        let joint = joint_test_lf(&[&e], 0.05, 40_000, 7).unwrap();
        let mc_se = (point * (1.0 - point) / 40_000.0).sqrt();
        assert!(
            (joint.p_value - point).abs() <= 2.0 * mc_se + 1e-4,
            "joint {} vs pointwise {}",
            joint.p_value,
            point
        );
    }

    #[test]
    fn lf_tail_behavior() {
        // Strong violations: v stats around +8.
        let neg: Vec<f64> = (0..400)
            .map(|i| -0.4 + if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let e1 = estimate_from(neg.clone());
        let e2 = estimate_from(neg);
        let joint = joint_test_lf(&[&e1, &e2], 0.05, 5_000, 11).unwrap();
        assert!(joint.t_stat > 5.0);
        assert!(joint.p_value < 0.001, "p = {}", joint.p_value);
        assert!(joint.reject);

        // Strongly satisfied moments: v stats around -8.
        let pos: Vec<f64> = (0..400)
            .map(|i| 0.4 + if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let e1 = estimate_from(pos.clone());
        let e2 = estimate_from(pos);
        let joint = joint_test_lf(&[&e1, &e2], 0.05, 5_000, 11).unwrap();
        assert!(joint.p_value > 0.99, "p = {}", joint.p_value);
        assert!(!joint.reject);
    }

    #[test]
    fn lf_is_deterministic() {
        let e1 = estimate_from(vec![1.0, -1.0, 0.5, -0.5, 0.2, -0.2]);
        let e2 = estimate_from(vec![0.3, -0.4, 0.5, -0.6, 0.7, -0.8]);
        let a = joint_test_lf(&[&e1, &e2], 0.05, 2_000, 42).unwrap();
        let b = joint_test_lf(&[&e1, &e2], 0.05, 2_000, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lf_monotone_in_contribution_shift() {
        let base = vec![0.4, -0.6, 0.1, -0.3, 0.5, -0.2, 0.0, 0.3];
        let shifted: Vec<f64> = base.iter().map(|c| c + 0.25).collect();
        let other = estimate_from(vec![1.0, -1.0, 0.5, -0.5, 0.25, -0.25, 0.75, -0.75]);
        let e_base = estimate_from(base);
        let e_shift = estimate_from(shifted);
        let r_base = joint_test_lf(&[&e_base, &other], 0.05, 2_000, 9).unwrap();
        let r_shift = joint_test_lf(&[&e_shift, &other], 0.05, 2_000, 9).unwrap();
        assert!(r_shift.t_stat <= r_base.t_stat + 1e-12);
        assert!(r_shift.p_value >= r_base.p_value - 1e-12);
    }

    #[test]
    fn zero_variance_moments_are_dropped() {
        let flat = estimate_from(vec![1.0, 1.0, 1.0, 1.0]);
        let live = estimate_from(vec![1.0, -1.0, 0.5, -0.5]);
        let joint = joint_test_lf(&[&flat, &live], 0.05, 1_000, 3).unwrap();
        assert_eq!(joint.k, 1);
        assert_eq!(joint.dropped_zero_variance, 1);

        let err = joint_test_lf(&[&flat], 0.05, 1_000, 3);
        assert_eq!(err, Err(InferenceError::NoTestableMoments));
    }

    #[test]
    fn filter_testable_applies_min_n() {
        let small = estimate_from(vec![1.0, -1.0]);
        let big = estimate_from(vec![1.0; 40]);
        let estimates = vec![small, big];
        let kept = filter_testable(&estimates, 30);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].n_matched, 40);
    }

    #[test]
    fn subset_tests_mirror_pair_labels() {
        let mut estimates = Vec::new();
        for (high, low) in [("F", "F"), ("F", "M"), ("M", "F"), ("M", "M")] {
            let mut e = estimate_from(vec![0.5, -0.5, 0.25, -0.25, 0.4, -0.4]);
            e.spec.conditioning = Conditioning::Pair {
                high: high.into(),
                low: low.into(),
            };
            estimates.push(e);
        }
        let refs: Vec<&MomentEstimate> = estimates.iter().collect();
        let results =
            subset_joint_tests(&refs, 0.05, 500, 5, JointMethod::LeastFavorable).unwrap();
        let labels: Vec<&str> = results.iter().map(|r| r.subset.as_str()).collect();
        assert_eq!(labels, vec!["all", "FF", "FM", "MF", "MM"]);
        for r in &results {
            assert!((0.0..=1.0).contains(&r.p_value));
        }

        let mut full = estimates[0].clone();
        full.spec.conditioning = Conditioning::FullPattern(vec!["F".into(), "M".into()]);
        let refs = vec![&full];
        assert_eq!(
            subset_joint_tests(&refs, 0.05, 100, 5, JointMethod::LeastFavorable),
            Err(InferenceError::RequiresPairConditioning)
        );
    }
}
