//! The audit report: dataset summary, pointwise table, joint tests.

use std::collections::BTreeMap;

use serde::Serialize;

use rankaudit::inference::{JointResult, PointwiseResult};
use rankaudit::moments::{Conditioning, MomentEstimate};
use rankaudit::Dataset;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub queries: usize,
    /// `(list length, count)` pairs, ascending.
    pub length_histogram: Vec<(usize, usize)>,
    pub group_counts: BTreeMap<String, usize>,
    /// Queries dropped by NDCG normalization (zero IDCG); 0 when
    /// normalization is off.
    pub skipped_zero_idcg: usize,
}

impl DatasetSummary {
    pub fn new(dataset: &Dataset, skipped_zero_idcg: usize) -> Self {
        let mut lengths: BTreeMap<usize, usize> = BTreeMap::new();
        let mut group_counts: BTreeMap<String, usize> = BTreeMap::new();
        for q in dataset.queries() {
            *lengths.entry(q.len()).or_insert(0) += 1;
            for e in q.entries() {
                *group_counts.entry(e.group.clone()).or_insert(0) += 1;
            }
        }
        DatasetSummary {
            queries: dataset.len(),
            length_histogram: lengths.into_iter().collect(),
            group_counts,
            skipped_zero_idcg,
        }
    }
}

/// One row of the pointwise table.
#[derive(Debug, Clone, Serialize)]
pub struct PointwiseRow {
    pub high_rank: usize,
    pub low_rank: usize,
    /// Group-pair bucket (`FM`) or full-pattern label.
    pub subset: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub high_group: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub low_group: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stratum: Option<BTreeMap<String, String>>,
    pub n_matched: usize,
    pub n_total: usize,
    pub mean_conditional: Option<f64>,
    pub se_conditional: Option<f64>,
    pub mean_unconditional: f64,
    pub se_unconditional: Option<f64>,
    pub t_stat: Option<f64>,
    pub p_value: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    /// Whether the moment passed the minimum-sample rule for joint testing.
    pub included_in_joint: bool,
}

impl PointwiseRow {
    pub fn new(
        estimate: &MomentEstimate,
        pointwise: &PointwiseResult,
        included_in_joint: bool,
    ) -> Self {
        let (high_group, low_group, pattern) = match &estimate.spec.conditioning {
            Conditioning::Pair { high, low } => (Some(high.clone()), Some(low.clone()), None),
            Conditioning::FullPattern(p) => (None, None, Some(p.join(","))),
        };
        PointwiseRow {
            high_rank: estimate.spec.high_rank,
            low_rank: estimate.spec.low_rank,
            subset: estimate.spec.conditioning.label(),
            high_group,
            low_group,
            pattern,
            stratum: estimate.spec.stratum.clone(),
            n_matched: estimate.n_matched,
            n_total: estimate.n_total,
            mean_conditional: estimate.mean_conditional,
            se_conditional: estimate.se_conditional,
            mean_unconditional: estimate.mean_unconditional,
            se_unconditional: estimate.se_unconditional,
            t_stat: pointwise.t_stat,
            p_value: pointwise.p_value,
            ci_lower: pointwise.ci_lower,
            ci_upper: pointwise.ci_upper,
            included_in_joint,
        }
    }
}

/// Everything the audit knows, serialized as `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct TestReport {
    pub schema: u32,
    pub config: ConfigEcho,
    pub dataset: DatasetSummary,
    pub pointwise: Vec<PointwiseRow>,
    pub joint: Vec<JointResult>,
    pub warnings: Vec<String>,
    pub provenance: Provenance,
}

/// The audit configuration echoed for provenance.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub input: String,
    pub format: String,
    pub alpha: f64,
    /// Display-convention position multiplier as passed on the command line.
    pub gamma: f64,
    pub normalize: bool,
    pub conditioning: String,
    pub min_n: usize,
    pub joint: String,
    pub mc_reps: usize,
    pub seed: u64,
    pub stratify_by: Vec<String>,
    pub out_dir: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub generated_by: String,
    pub version: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(seed: u64) -> Self {
        Provenance {
            generated_by: "rankaudit".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
        }
    }
}

impl TestReport {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }
}
