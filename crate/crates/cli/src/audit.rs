//! The audit pipeline: family construction, estimation, testing, artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use rankaudit::inference::{
    self, JointMethod, JointResult, PointwiseResult,
};
use rankaudit::model::{ndcg_normalize_dataset, WeightScheme};
use rankaudit::moments::{
    self, Adjustment, Conditioning, ConditioningMode, MomentEstimate,
};
use rankaudit::Dataset;

use crate::chart::{self, Panel};
use crate::ingest::Format;
use crate::report::{ConfigEcho, DatasetSummary, PointwiseRow, Provenance, TestReport, SCHEMA_VERSION};

/// Full-pattern enumeration is exponential in list length; refuse beyond
/// this.
const FULL_PATTERN_MAX_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ConditioningChoice {
    Pair,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum JointChoice {
    /// Least-favorable Monte Carlo critical values.
    Lf,
    /// Bonferroni over the pointwise p-values.
    Bonferroni,
}

#[derive(Debug, Clone)]
pub struct AuditConfig {
    pub input: String,
    pub format: Format,
    pub alpha: f64,
    /// Display-convention position multiplier (outcome at rank r carries a
    /// factor `(1 + gamma)^r`); 0 disables the adjustment.
    pub gamma: f64,
    pub normalize: bool,
    pub conditioning: ConditioningChoice,
    pub min_n: usize,
    pub joint: JointChoice,
    pub mc_reps: usize,
    pub seed: u64,
    pub stratify_by: Vec<String>,
    pub out_dir: PathBuf,
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            bail!("--alpha must lie strictly inside (0, 1), got {}", self.alpha);
        }
        if !self.gamma.is_finite() || self.gamma <= -1.0 {
            bail!("--gamma must satisfy gamma > -1, got {}", self.gamma);
        }
        if self.mc_reps == 0 {
            bail!("--mc-reps must be positive");
        }
        Ok(())
    }
}

/// Everything `audit` produces.
#[derive(Debug)]
pub struct AuditArtifacts {
    pub report: TestReport,
    pub moments_csv: String,
    pub moments_svg: String,
}

fn option_csv(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Figure-style plot data: one row per (rank, group pair) with the
/// conditional mean and its 95% interval.
fn moments_csv(estimates: &[MomentEstimate], pointwise: &[PointwiseResult]) -> String {
    let mut rows: Vec<(&MomentEstimate, &PointwiseResult)> =
        estimates.iter().zip(pointwise).collect();
    rows.sort_by_key(|(e, _)| {
        let label = e.spec.conditioning.label();
        (label, e.spec.high_rank)
    });
    let mut out = String::from("high_rank,high_group,low_group,n_matched,mean,ci_lower,ci_upper\n");
    for (e, p) in rows {
        let Conditioning::Pair { high, low } = &e.spec.conditioning else {
            continue;
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            e.spec.high_rank,
            high,
            low,
            e.n_matched,
            option_csv(e.mean_conditional),
            option_csv(p.ci_lower),
            option_csv(p.ci_upper),
        )
        .unwrap();
    }
    out
}

/// Two-panel (for binary groups) point-and-interval chart over the
/// cross-group pairs.
fn moments_svg(estimates: &[MomentEstimate], pointwise: &[PointwiseResult]) -> String {
    let mut panels: Vec<Panel> = Vec::new();
    for (e, p) in estimates.iter().zip(pointwise) {
        let Conditioning::Pair { high, low } = &e.spec.conditioning else {
            continue;
        };
        if high == low {
            continue;
        }
        let (Some(mean), Some(lo), Some(hi)) = (e.mean_conditional, p.ci_lower, p.ci_upper)
        else {
            continue;
        };
        let title = format!("{high} ranked above {low}");
        let panel = match panels.iter_mut().find(|pl| pl.title == title) {
            Some(panel) => panel,
            None => {
                panels.push(Panel {
                    title,
                    points: Vec::new(),
                });
                panels.last_mut().unwrap()
            }
        };
        panel.points.push((e.spec.high_rank, mean, lo, hi));
    }
    panels.sort_by(|a, b| a.title.cmp(&b.title));
    for p in &mut panels {
        p.points.sort_by_key(|pt| pt.0);
    }
    chart::moments_chart(&panels)
}

/// Runs the audit on an ingested dataset.
pub fn run_audit(
    config: &AuditConfig,
    dataset: &Dataset,
    ingest_warnings: Vec<String>,
) -> Result<AuditArtifacts> {
    config.validate()?;
    if dataset.is_empty() {
        bail!("no testable moments: the dataset is empty");
    }
    let mut warnings = ingest_warnings;
    let adjustment = Adjustment::for_display_gamma(config.gamma, config.normalize)
        .context("invalid --gamma")?;

    let skipped_zero_idcg = if config.normalize {
        let (_, skipped) = ndcg_normalize_dataset(dataset, &WeightScheme::ndcg())
            .context("NDCG normalization failed")?;
        if skipped > 0 {
            warnings.push(format!(
                "{skipped} queries with zero IDCG were skipped by normalization"
            ));
        }
        skipped
    } else {
        0
    };

    let mode = match config.conditioning {
        ConditioningChoice::Pair => ConditioningMode::Pair,
        ConditioningChoice::Full => {
            if dataset.max_len() > FULL_PATTERN_MAX_LEN {
                bail!(
                    "--conditioning full enumerates every group vector and is limited to \
                     lists of length <= {FULL_PATTERN_MAX_LEN} (dataset has length {})",
                    dataset.max_len()
                );
            }
            ConditioningMode::FullPattern
        }
    };
    let strata = if config.stratify_by.is_empty() {
        None
    } else {
        Some(config.stratify_by.as_slice())
    };
    let specs = moments::build_adjacent_family(dataset, mode, adjustment, strata);
    if specs.is_empty() {
        bail!("no testable moments: every query has a single candidate");
    }
    let estimates = moments::estimate_family(dataset, &specs)?;
    let pointwise: Vec<PointwiseResult> =
        estimates.iter().map(inference::pointwise_test).collect();

    let testable = inference::filter_testable(&estimates, config.min_n);
    let excluded = estimates.len() - testable.len();
    if excluded > 0 {
        warnings.push(format!(
            "{excluded} of {} moments fell below --min-n {} and are excluded from joint tests",
            estimates.len(),
            config.min_n
        ));
    }
    if testable.is_empty() {
        bail!(
            "no testable moments: all {} moments matched fewer than --min-n {} queries",
            estimates.len(),
            config.min_n
        );
    }

    let method = match config.joint {
        JointChoice::Lf => JointMethod::LeastFavorable,
        JointChoice::Bonferroni => JointMethod::Bonferroni,
    };
    let joint: Vec<JointResult> = match config.conditioning {
        ConditioningChoice::Pair => inference::subset_joint_tests(
            &testable,
            config.alpha,
            config.mc_reps,
            config.seed,
            method,
        )?,
        ConditioningChoice::Full => {
            let r = match method {
                JointMethod::LeastFavorable => inference::joint_test_lf(
                    &testable,
                    config.alpha,
                    config.mc_reps,
                    config.seed,
                )?,
                JointMethod::Bonferroni => {
                    inference::joint_test_bonferroni(&testable, config.alpha, config.seed)?
                }
            };
            vec![r]
        }
    };
    for j in &joint {
        if j.dropped_zero_variance > 0 {
            warnings.push(format!(
                "subset {}: {} moments dropped for zero variance",
                j.subset, j.dropped_zero_variance
            ));
        }
    }
    if matches!(config.conditioning, ConditioningChoice::Pair) {
        let mut expected: Vec<String> = testable
            .iter()
            .map(|e| e.spec.conditioning.label())
            .collect();
        expected.sort();
        expected.dedup();
        for label in expected {
            if !joint.iter().any(|j| j.subset == label) {
                warnings.push(format!("subset {label}: omitted (no testable moments)"));
            }
        }
    }

    let included: Vec<bool> = {
        let floor = config.min_n.max(2);
        estimates.iter().map(|e| e.n_matched >= floor).collect()
    };
    let pointwise_rows: Vec<PointwiseRow> = estimates
        .iter()
        .zip(&pointwise)
        .zip(&included)
        .map(|((e, p), inc)| PointwiseRow::new(e, p, *inc))
        .collect();

    // Figure-style artifacts always come from the plain pair family.
    let (plot_estimates, plot_pointwise) = if matches!(mode, ConditioningMode::Pair)
        && strata.is_none()
    {
        (estimates.clone(), pointwise.clone())
    } else {
        let plain =
            moments::build_adjacent_family(dataset, ConditioningMode::Pair, adjustment, None);
        let est = moments::estimate_family(dataset, &plain)?;
        let pw = est.iter().map(inference::pointwise_test).collect();
        (est, pw)
    };
    let csv = moments_csv(&plot_estimates, &plot_pointwise);
    let svg = moments_svg(&plot_estimates, &plot_pointwise);

    let report = TestReport {
        schema: SCHEMA_VERSION,
        config: ConfigEcho {
            input: config.input.clone(),
            format: format!("{:?}", config.format).to_lowercase(),
            alpha: config.alpha,
            gamma: config.gamma,
            normalize: config.normalize,
            conditioning: format!("{:?}", config.conditioning).to_lowercase(),
            min_n: config.min_n,
            joint: format!("{:?}", config.joint).to_lowercase(),
            mc_reps: config.mc_reps,
            seed: config.seed,
            stratify_by: config.stratify_by.clone(),
            out_dir: config.out_dir.display().to_string(),
        },
        dataset: DatasetSummary::new(dataset, skipped_zero_idcg),
        pointwise: pointwise_rows,
        joint,
        warnings,
        provenance: Provenance::new(config.seed),
    };

    Ok(AuditArtifacts {
        report,
        moments_csv: csv,
        moments_svg: svg,
    })
}

/// Writes `report.json`, `moments.csv` and `moments.svg` into `out_dir`.
pub fn write_artifacts(out_dir: &Path, artifacts: &AuditArtifacts) -> Result<()> {
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    fs::write(out_dir.join("report.json"), artifacts.report.to_json())?;
    fs::write(out_dir.join("moments.csv"), &artifacts.moments_csv)?;
    fs::write(out_dir.join("moments.svg"), &artifacts.moments_svg)?;
    Ok(())
}
