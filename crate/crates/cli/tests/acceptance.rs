//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured quantities (visible under `--nocapture`).

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use rankaudit::inference;
use rankaudit::model::{
    dcg, max_objective_exhaustive, objective_value, optimal_ranking, Entry, QueryRecord,
    WeightScheme,
};
use rankaudit::moments::{self, Adjustment, Conditioning, ConditioningMode};
use rankaudit::rationalize::{
    check_inequalities, construct_information_structure, EmpiricalRankDistribution,
    RationalizationCertificate, SupportPoint,
};
use rankaudit::rng::{child_seed, substream};
use rankaudit::simulate::{
    inframarginality_experiment, run_size_power, simulate_dataset, HarnessTest, SimConfig,
    GROUP0, GROUP1,
};
use rankaudit::Dataset;

use rankaudit_cli::audit::{run_audit, AuditConfig, ConditioningChoice, JointChoice};
use rankaudit_cli::ingest::{self, Format};

fn binomial_bound(alpha: f64, reps: usize) -> f64 {
    alpha + 2.0 * (alpha * (1.0 - alpha) / reps as f64).sqrt()
}

/// Criterion 1: pairwise swaps change the objective by exactly
/// (w_a - w_b)(Y_a - Y_b), and sorting matches exhaustive search, over 1,000
/// random queries with J <= 6, in under 10 seconds.
#[test]
fn criterion_01_swap_identity_and_sorting_optimality() {
    let start = Instant::now();
    let weights = WeightScheme::ndcg();
    for i in 0..1_000u64 {
        let mut rng = substream(101, &[i]);
        let j = 1 + (rng.random::<u64>() % 6) as usize;
        let outcomes: Vec<f64> = (0..j).map(|_| rng.random::<f64>() * 10.0 - 5.0).collect();
        let entries: Vec<Entry> = outcomes
            .iter()
            .map(|y| Entry::new(if *y > 0.0 { "A" } else { "B" }, *y))
            .collect();
        let query = QueryRecord::new(format!("q{i}"), entries).unwrap();
        let base = objective_value(&query, &weights).unwrap();

        for a in 1..=j {
            for b in (a + 1)..=j {
                let mut swapped_entries = query.entries().to_vec();
                swapped_entries.swap(a - 1, b - 1);
                let swapped = QueryRecord::new("s", swapped_entries).unwrap();
                let expected = (weights.weight(a).unwrap() - weights.weight(b).unwrap())
                    * (query.outcome_at(a).unwrap() - query.outcome_at(b).unwrap());
                let actual = base - objective_value(&swapped, &weights).unwrap();
                assert!(
                    (actual - expected).abs() < 1e-10,
                    "swap identity failed at query {i}, ranks ({a}, {b})"
                );
            }
        }

        let order = optimal_ranking(&outcomes);
        let ranked: Vec<f64> = order.iter().map(|&k| outcomes[k]).collect();
        let via_sort = dcg(&ranked, &weights).unwrap();
        let via_search = max_objective_exhaustive(&outcomes, &weights).unwrap();
        assert!(
            (via_sort - via_search).abs() < 1e-10,
            "sorting missed the exhaustive maximum at query {i}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}");
    println!("criterion 01 swap identity & sorting optimality: PASS ({elapsed:?} for 1000 queries)");
}

/// Criterion 2: full-pattern conditional moments telescope,
/// m(a,c|g) = m(a,b|g) + m(b,c|g), to 1e-10 on every tested triple.
#[test]
fn criterion_02_telescoping() {
    let dataset = simulate_dataset(&SimConfig::uniform_bernoulli(4, 400, 0.3, 202)).unwrap();
    let mut patterns: Vec<Vec<String>> = dataset
        .queries()
        .iter()
        .map(|q| q.groups().iter().map(|g| g.to_string()).collect())
        .collect();
    patterns.sort();
    patterns.dedup();
    let mut checked = 0;
    for pattern in &patterns {
        for a in 1..=2usize {
            for b in (a + 1)..=3 {
                for c in (b + 1)..=4 {
                    let t = moments::telescope_check(&dataset, pattern, (a, b, c)).unwrap();
                    if let (Some(ab), Some(bc), Some(ac)) = (t.step_ab, t.step_bc, t.span_ac) {
                        assert!(
                            (ab + bc - ac).abs() < 1e-10,
                            "telescoping failed for {pattern:?} at ({a},{b},{c})"
                        );
                        checked += 1;
                    }
                }
            }
        }
    }
    assert!(checked > 20, "only {checked} triples had matches");
    println!("criterion 02 telescoping: PASS ({checked} pattern-triples checked)");
}

fn random_distribution(seed: u64, force_sorted: bool) -> EmpiricalRankDistribution {
    let mut rng = substream(303, &[seed]);
    let j = 2 + (rng.random::<u64>() % 3) as usize; // J in 2..=4
    let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
    let n_points = 1 + (rng.random::<u64>() % 5) as usize;
    let raw_weights: Vec<f64> = (0..n_points).map(|_| 0.05 + rng.random::<f64>()).collect();
    let total: f64 = raw_weights.iter().sum();
    let points = raw_weights
        .into_iter()
        .map(|w| {
            let pattern: Vec<String> = (0..j)
                .map(|_| if rng.random::<f64>() < 0.5 { "0" } else { "1" }.to_string())
                .collect();
            let mut outcomes: Vec<f64> = (0..j)
                .map(|_| levels[(rng.random::<u64>() % 5) as usize])
                .collect();
            if force_sorted {
                outcomes.sort_by(|a, b| b.total_cmp(a));
            }
            SupportPoint {
                pattern,
                outcomes,
                probability: w / total,
            }
        })
        .collect();
    EmpiricalRankDistribution::new(points).unwrap()
}

/// Criterion 3: over 200 random finite-support distributions, the
/// construction returns Rationalized exactly when no inequality is violated,
/// and every certificate verifies to 1e-10.
#[test]
fn criterion_03_rationalization_iff_inequalities() {
    let mut rationalized = 0;
    let mut violated = 0;
    for seed in 0..200u64 {
        let dist = random_distribution(seed, seed % 2 == 0);
        let violations = check_inequalities(&dist);
        match construct_information_structure(&dist) {
            RationalizationCertificate::Rationalized {
                signals,
                verification,
            } => {
                assert!(
                    violations.is_empty(),
                    "seed {seed}: rationalized despite violations"
                );
                assert!(!signals.is_empty());
                assert!(
                    verification.means_monotone
                        && verification.min_adjacent_gap >= -1e-10,
                    "seed {seed}: conditional means not monotone"
                );
                assert!(
                    verification.reproduces_input
                        && verification.max_probability_error <= 1e-10,
                    "seed {seed}: implied law error {}",
                    verification.max_probability_error
                );
                rationalized += 1;
            }
            RationalizationCertificate::Violated { violations: found } => {
                assert!(
                    !violations.is_empty() && !found.is_empty(),
                    "seed {seed}: violated without violations"
                );
                violated += 1;
            }
        }
    }
    assert!(rationalized >= 50 && violated >= 50, "{rationalized}/{violated}");
    println!(
        "criterion 03 rationalization iff inequalities: PASS ({rationalized} rationalized, {violated} violated)"
    );
}

/// Criterion 4: under the null (tau = 0, J = 11, Q = 1000, uniform
/// qualities, Bernoulli outcomes), the joint LF test at alpha = 0.05 rejects
/// in at most 0.05 + 2*sqrt(0.05*0.95/500) of 500 replications.
#[test]
fn criterion_04_size_control() {
    let reps = 500;
    let grid = [SimConfig::uniform_bernoulli(11, 1_000, 0.0, 0)];
    let rows = run_size_power(&grid, HarnessTest::default(), reps, 404).unwrap();
    let bound = binomial_bound(0.05, reps);
    assert!(
        rows[0].rejection_rate <= bound,
        "size {} exceeds {bound}",
        rows[0].rejection_rate
    );
    println!(
        "criterion 04 size control: PASS (rate {:.4} <= bound {:.4})",
        rows[0].rejection_rate, bound
    );
}

/// Criterion 5: power is monotone over tau in {0.2, 0.5} at Q = 2000 and
/// reaches at least 0.9 at tau = 0.5.
#[test]
fn criterion_05_power_monotone_in_tau() {
    let reps = 300;
    let grid = [
        SimConfig::uniform_bernoulli(11, 2_000, 0.2, 0),
        SimConfig::uniform_bernoulli(11, 2_000, 0.5, 0),
    ];
    let rows = run_size_power(&grid, HarnessTest::default(), reps, 505).unwrap();
    let (low, high) = (&rows[0], &rows[1]);
    assert!(
        high.rejection_rate >= low.rejection_rate - 2.0 * (low.mc_se + high.mc_se),
        "power not monotone: {} then {}",
        low.rejection_rate,
        high.rejection_rate
    );
    assert!(
        high.rejection_rate >= 0.9,
        "power at tau = 0.5 is only {}",
        high.rejection_rate
    );
    println!(
        "criterion 05 power & monotonicity: PASS (tau 0.2 -> {:.3}, tau 0.5 -> {:.3})",
        low.rejection_rate, high.rejection_rate
    );
}

/// Criterion 6: with tau = 0.5, every cross-group moment with the penalized
/// group ranked below has a negative conditional mean (a swap-up would raise
/// the objective) and the opposite configuration is positive — the
/// two-panel sign structure.
#[test]
fn criterion_06_sign_pattern() {
    let dataset = simulate_dataset(&SimConfig::uniform_bernoulli(11, 2_000, 0.5, 606)).unwrap();
    let specs = moments::build_adjacent_family(
        &dataset,
        ConditioningMode::Pair,
        Adjustment::none(),
        None,
    );
    let estimates = moments::estimate_family(&dataset, &specs).unwrap();
    let mut checked = 0;
    for est in &estimates {
        let Conditioning::Pair { high, low } = &est.spec.conditioning else {
            continue;
        };
        if est.n_matched == 0 || high == low {
            continue;
        }
        let mean = est.mean_conditional.unwrap();
        if high == GROUP0 && low == GROUP1 {
            assert!(
                mean < 0.0,
                "rank {}: penalized group below, mean {mean} not negative",
                est.spec.high_rank
            );
        } else if high == GROUP1 && low == GROUP0 {
            assert!(
                mean > 0.0,
                "rank {}: penalized group above, mean {mean} not positive",
                est.spec.high_rank
            );
        }
        checked += 1;
    }
    assert!(checked >= 18, "only {checked} cross-group moments matched");
    println!("criterion 06 sign pattern: PASS ({checked} cross-group moments, all signed as expected)");
}

/// Criterion 7: with a display effect gamma = 0.1 and tau = 0, auditing with
/// the matching --gamma holds size while --gamma 0 over-rejects.
#[test]
fn criterion_07_position_effect_correction() {
    let reps = 300;
    let mut config = SimConfig::uniform_bernoulli(21, 1_000, 0.0, 0);
    config.gamma = 0.1;
    let bound = binomial_bound(0.05, reps);

    let matched = HarnessTest {
        display_gamma: 0.1,
        mc_reps: 1_000,
        ..HarnessTest::default()
    };
    let rows = run_size_power(&[config], matched, reps, 707).unwrap();
    let matched_rate = rows[0].rejection_rate;
    assert!(matched_rate <= bound, "matched gamma: size {matched_rate} exceeds {bound}");

    let unadjusted = HarnessTest {
        display_gamma: 0.0,
        mc_reps: 1_000,
        ..HarnessTest::default()
    };
    let rows = run_size_power(&[config], unadjusted, reps, 707).unwrap();
    let unadjusted_rate = rows[0].rejection_rate;
    assert!(
        unadjusted_rate > bound,
        "unadjusted test rejected only {unadjusted_rate}, bound {bound}"
    );
    println!(
        "criterion 07 position-effect correction: PASS (matched {matched_rate:.3} <= {bound:.3} < unadjusted {unadjusted_rate:.3})"
    );
}

/// Criterion 8: under criterion 4's null design, each fixed moment's
/// pointwise one-sided rejection rate stays at or below the alpha = 0.05
/// binomial bound.
#[test]
fn criterion_08_pointwise_calibration() {
    let reps = 500;
    let rejections: Vec<BTreeMap<String, usize>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let seed = child_seed(808, 0, rep as u64);
            let config = SimConfig::uniform_bernoulli(11, 1_000, 0.0, seed);
            let dataset = simulate_dataset(&config).unwrap();
            let specs = moments::build_adjacent_family(
                &dataset,
                ConditioningMode::Pair,
                Adjustment::none(),
                None,
            );
            let estimates = moments::estimate_family(&dataset, &specs).unwrap();
            let mut out = BTreeMap::new();
            for est in &estimates {
                let key = format!(
                    "{}:{}",
                    est.spec.high_rank,
                    est.spec.conditioning.label()
                );
                let rejected = inference::pointwise_test(est)
                    .p_value
                    .map(|p| p < 0.05)
                    .unwrap_or(false);
                out.insert(key, rejected as usize);
            }
            out
        })
        .collect();

    let mut totals: BTreeMap<String, usize> = BTreeMap::new();
    for rep in &rejections {
        for (k, v) in rep {
            *totals.entry(k.clone()).or_insert(0) += v;
        }
    }
    let bound = binomial_bound(0.05, reps);
    let mut worst: f64 = 0.0;
    for (key, count) in &totals {
        let rate = *count as f64 / reps as f64;
        worst = worst.max(rate);
        assert!(rate <= bound, "moment {key} rejects at {rate} > {bound}");
    }
    println!(
        "criterion 08 pointwise calibration: PASS ({} moments, worst rate {worst:.4} <= {bound:.4})",
        totals.len()
    );
}

/// Criterion 9: fixed seeds give byte-identical datasets, reports, and plot
/// CSVs, and the JSONL round trip preserves the dataset exactly.
#[test]
fn criterion_09_determinism_and_round_trip() {
    let config = SimConfig::uniform_bernoulli(7, 250, 0.25, 909);
    let d1 = simulate_dataset(&config).unwrap();
    let d2 = simulate_dataset(&config).unwrap();
    assert_eq!(d1, d2, "same seed, different datasets");

    let mut bytes1 = Vec::new();
    let mut bytes2 = Vec::new();
    ingest::emit_jsonl(&d1, &mut bytes1).unwrap();
    ingest::emit_jsonl(&d2, &mut bytes2).unwrap();
    assert_eq!(bytes1, bytes2, "same dataset, different bytes");

    let (reingested, warnings) = ingest::ingest(bytes1.as_slice(), Format::Jsonl).unwrap();
    assert!(warnings.is_empty());
    assert_eq!(d1, reingested, "JSONL round trip changed the dataset");

    // A dataset with features round-trips too.
    let mut entry = Entry::new("F", 0.125);
    entry.features.insert("site".into(), "us".into());
    let with_features = Dataset::new(vec![QueryRecord::new(
        "q0",
        vec![entry, Entry::new("M", 0.5)],
    )
    .unwrap()]);
    let mut bytes = Vec::new();
    ingest::emit_jsonl(&with_features, &mut bytes).unwrap();
    let (back, _) = ingest::ingest(bytes.as_slice(), Format::Jsonl).unwrap();
    assert_eq!(with_features, back);

    let audit_config = AuditConfig {
        input: "-".into(),
        format: Format::Jsonl,
        alpha: 0.05,
        gamma: 0.0,
        normalize: false,
        conditioning: ConditioningChoice::Pair,
        min_n: 20,
        joint: JointChoice::Lf,
        mc_reps: 800,
        seed: 42,
        stratify_by: Vec::new(),
        out_dir: PathBuf::from("out"),
    };
    let a = run_audit(&audit_config, &d1, Vec::new()).unwrap();
    let b = run_audit(&audit_config, &d1, Vec::new()).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json(), "report.json differs");
    assert_eq!(a.moments_csv, b.moments_csv, "moments.csv differs");
    assert_eq!(a.moments_svg, b.moments_svg, "moments.svg differs");
    println!("criterion 09 determinism & round-trip: PASS");
}

/// Criterion 10: with tau = 0.02 fixed, the rejection rate at J = 50 exceeds
/// the rate at J = 2 by more than twice the Monte Carlo standard error over
/// 300 replications.
#[test]
fn criterion_10_inframarginality_trend() {
    let reps = 300;
    let test = HarnessTest {
        mc_reps: 1_000,
        ..HarnessTest::default()
    };
    let rows = inframarginality_experiment(&[2, 50], 0.02, 1_000, test, reps, 1010).unwrap();
    let (short, long) = (&rows[0], &rows[1]);
    let se_diff = (short.mc_se.powi(2) + long.mc_se.powi(2)).sqrt();
    assert!(
        long.rejection_rate - short.rejection_rate > 2.0 * se_diff,
        "J=50 rate {} vs J=2 rate {} (2 se_diff = {})",
        long.rejection_rate,
        short.rejection_rate,
        2.0 * se_diff
    );
    println!(
        "criterion 10 inframarginality trend: PASS (J=2 -> {:.3}, J=50 -> {:.3}, 2*se {:.3})",
        short.rejection_rate,
        long.rejection_rate,
        2.0 * se_diff
    );
}
