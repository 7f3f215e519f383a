//! Ranked-list file formats.
//!
//! JSONL: one object per line,
//! `{"query_id": "...", "candidates": [{"rank": 1, "group": "F",
//! "outcome": 0.4, "features": {"industry": "tech"}}, ...]}`.
//!
//! CSV (long form): header `query_id,rank,group,outcome` plus optional
//! `feature:<name>` columns, one row per candidate. Rows belonging to one
//! query may appear anywhere in the file; queries keep their first-appearance
//! order.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use rankaudit::model::{Entry, QueryRecord};
use rankaudit::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Jsonl,
    Csv,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonCandidate {
    rank: usize,
    group: String,
    outcome: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    features: BTreeMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonQuery {
    query_id: String,
    candidates: Vec<JsonCandidate>,
}

/// Validates ranks 1..=J and assembles the query.
fn assemble_query(
    query_id: String,
    mut candidates: Vec<JsonCandidate>,
) -> Result<QueryRecord> {
    candidates.sort_by_key(|c| c.rank);
    for (i, c) in candidates.iter().enumerate() {
        if c.rank == i + 1 {
            continue;
        }
        if i > 0 && c.rank == candidates[i - 1].rank {
            bail!("query {query_id}: duplicate rank {}", c.rank);
        }
        bail!(
            "query {query_id}: ranks must be 1..{} with no gaps (found rank {})",
            candidates.len(),
            c.rank
        );
    }
    for c in &candidates {
        if !c.outcome.is_finite() {
            bail!("query {query_id}: non-finite outcome at rank {}", c.rank);
        }
    }
    let entries = candidates
        .into_iter()
        .map(|c| Entry {
            group: c.group,
            outcome: c.outcome,
            features: c.features,
        })
        .collect();
    QueryRecord::new(query_id, entries).map_err(|e| anyhow!(e))
}

fn ingest_jsonl(reader: impl BufRead) -> Result<(Dataset, Vec<String>)> {
    let mut queries = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.context("reading input")?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: JsonQuery = serde_json::from_str(&line)
            .with_context(|| format!("line {}: invalid query object", i + 1))?;
        queries.push(assemble_query(raw.query_id, raw.candidates)?);
    }
    Ok((Dataset::new(queries), Vec::new()))
}

fn ingest_csv(reader: impl BufRead) -> Result<(Dataset, Vec<String>)> {
    let mut csv_reader = csv::Reader::from_reader(reader);
    let headers = csv_reader.headers().context("reading CSV header")?.clone();
    let mut warnings = Vec::new();

    let column = |name: &str| headers.iter().position(|h| h == name);
    let query_col = column("query_id").context("CSV is missing the query_id column")?;
    let rank_col = column("rank").context("CSV is missing the rank column")?;
    let group_col = column("group").context("CSV is missing the group column")?;
    let outcome_col = column("outcome").context("CSV is missing the outcome column")?;
    let feature_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            h.strip_prefix("feature:")
                .map(|name| (i, name.to_string()))
        })
        .collect();
    for (i, h) in headers.iter().enumerate() {
        if i != query_col
            && i != rank_col
            && i != group_col
            && i != outcome_col
            && !feature_cols.iter().any(|(fi, _)| *fi == i)
        {
            warnings.push(format!("ignoring unknown CSV column {h:?}"));
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut by_query: BTreeMap<String, Vec<JsonCandidate>> = BTreeMap::new();
    for (i, record) in csv_reader.records().enumerate() {
        let record = record.with_context(|| format!("CSV row {}", i + 2))?;
        let field = |col: usize| record.get(col).unwrap_or("");
        let query_id = field(query_col).to_string();
        let rank: usize = field(rank_col)
            .parse()
            .with_context(|| format!("CSV row {}: bad rank {:?}", i + 2, field(rank_col)))?;
        let outcome: f64 = field(outcome_col).parse().with_context(|| {
            format!("CSV row {}: bad outcome {:?}", i + 2, field(outcome_col))
        })?;
        let mut features = BTreeMap::new();
        for (col, name) in &feature_cols {
            let value = field(*col);
            if !value.is_empty() {
                features.insert(name.clone(), value.to_string());
            }
        }
        if !by_query.contains_key(&query_id) {
            order.push(query_id.clone());
        }
        by_query.entry(query_id).or_default().push(JsonCandidate {
            rank,
            group: field(group_col).to_string(),
            outcome,
            features,
        });
    }
    let queries = order
        .into_iter()
        .map(|id| {
            let candidates = by_query.remove(&id).expect("collected above");
            assemble_query(id, candidates)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Dataset::new(queries), warnings))
}

/// Reads a dataset, returning it plus any non-fatal warnings.
pub fn ingest(reader: impl BufRead, format: Format) -> Result<(Dataset, Vec<String>)> {
    match format {
        Format::Jsonl => ingest_jsonl(reader),
        Format::Csv => ingest_csv(reader),
    }
}

/// Writes a dataset in the JSONL format, one query per line.
pub fn emit_jsonl(dataset: &Dataset, mut writer: impl Write) -> Result<()> {
    for query in dataset.queries() {
        let raw = JsonQuery {
            query_id: query.query_id().to_string(),
            candidates: query
                .entries()
                .iter()
                .enumerate()
                .map(|(i, e)| JsonCandidate {
                    rank: i + 1,
                    group: e.group.clone(),
                    outcome: e.outcome,
                    features: e.features.clone(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut writer, &raw)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
