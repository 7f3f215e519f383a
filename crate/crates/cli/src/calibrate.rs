//! Binned calibration of a score against realized outcomes, by group.

use std::fmt::Write as _;
use std::io::BufRead;

use anyhow::{Context, Result};

use crate::chart::{self, Series};

#[derive(Debug, Clone)]
pub struct ScoreRow {
    pub group: String,
    pub score: f64,
    pub outcome: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBin {
    pub group: String,
    pub bin: usize,
    pub n: usize,
    pub mean_score: f64,
    pub mean_outcome: f64,
}

/// Reads candidate-level rows with `group`, `score` and `outcome` columns;
/// other columns are ignored with a warning.
pub fn read_score_csv(reader: impl BufRead) -> Result<(Vec<ScoreRow>, Vec<String>)> {
    let mut csv_reader = csv::Reader::from_reader(reader);
    let headers = csv_reader.headers().context("reading CSV header")?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let group_col = column("group").context("CSV is missing the group column")?;
    let score_col = column("score").context("CSV is missing the score column")?;
    let outcome_col = column("outcome").context("CSV is missing the outcome column")?;
    let mut warnings = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if i != group_col && i != score_col && i != outcome_col {
            warnings.push(format!("ignoring unknown CSV column {h:?}"));
        }
    }
    let mut rows = Vec::new();
    for (i, record) in csv_reader.records().enumerate() {
        let record = record.with_context(|| format!("CSV row {}", i + 2))?;
        let field = |col: usize| record.get(col).unwrap_or("");
        let score: f64 = field(score_col)
            .parse()
            .with_context(|| format!("CSV row {}: bad score {:?}", i + 2, field(score_col)))?;
        let outcome: f64 = field(outcome_col).parse().with_context(|| {
            format!("CSV row {}: bad outcome {:?}", i + 2, field(outcome_col))
        })?;
        if !score.is_finite() || !outcome.is_finite() {
            anyhow::bail!("CSV row {}: non-finite score or outcome", i + 2);
        }
        rows.push(ScoreRow {
            group: field(group_col).to_string(),
            score,
            outcome,
        });
    }
    Ok((rows, warnings))
}

/// Splits each group's scores into `n_bins` equal-count bins and returns the
/// per-bin mean score and mean outcome. Groups with fewer distinct scores
/// than bins get fewer bins, with a warning.
pub fn binned_calibration(
    rows: &[ScoreRow],
    n_bins: usize,
) -> (Vec<CalibrationBin>, Vec<String>) {
    let n_bins = n_bins.max(1);
    let mut groups: Vec<String> = rows.iter().map(|r| r.group.clone()).collect();
    groups.sort();
    groups.dedup();

    let mut bins = Vec::new();
    let mut warnings = Vec::new();
    for group in groups {
        let mut members: Vec<&ScoreRow> = rows.iter().filter(|r| r.group == group).collect();
        members.sort_by(|a, b| a.score.total_cmp(&b.score));
        let mut distinct = members.iter().map(|r| r.score.to_bits()).collect::<Vec<_>>();
        distinct.dedup();
        let k = n_bins.min(distinct.len());
        if k < n_bins {
            warnings.push(format!(
                "group {group}: only {} distinct scores, reducing to {k} bins",
                distinct.len()
            ));
        }
        let n = members.len();
        for b in 0..k {
            let start = b * n / k;
            let end = ((b + 1) * n / k).max(start + 1).min(n);
            let slice = &members[start..end];
            let count = slice.len() as f64;
            bins.push(CalibrationBin {
                group: group.clone(),
                bin: b + 1,
                n: slice.len(),
                mean_score: slice.iter().map(|r| r.score).sum::<f64>() / count,
                mean_outcome: slice.iter().map(|r| r.outcome).sum::<f64>() / count,
            });
        }
    }
    (bins, warnings)
}

pub fn calibration_csv(bins: &[CalibrationBin]) -> String {
    let mut out = String::from("group,bin,n,mean_score,mean_outcome\n");
    for b in bins {
        writeln!(
            out,
            "{},{},{},{},{}",
            b.group, b.bin, b.n, b.mean_score, b.mean_outcome
        )
        .unwrap();
    }
    out
}

pub fn calibration_svg(bins: &[CalibrationBin]) -> String {
    let mut series: Vec<Series> = Vec::new();
    for b in bins {
        match series.iter_mut().find(|s| s.label == b.group) {
            Some(s) => s.points.push((b.mean_score, b.mean_outcome)),
            None => series.push(Series {
                label: b.group.clone(),
                points: vec![(b.mean_score, b.mean_outcome)],
            }),
        }
    }
    chart::scatter_chart(&series, "mean score (binned)", "mean outcome")
}
