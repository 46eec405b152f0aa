use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::{topk, BinaryCodebook, HashError};

/// Fraction of `retrieved` label sets that share at least one label with
/// `query`. `None` when the query has no labels.
pub fn precision_at_k(retrieved: &[&BTreeSet<String>], query: &BTreeSet<String>) -> Option<f64> {
    if query.is_empty() || retrieved.is_empty() {
        return None;
    }
    let hits = retrieved
        .iter()
        .filter(|r| r.iter().any(|l| query.contains(l)))
        .count();
    Some(hits as f64 / retrieved.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub k: usize,
    /// `(query id, precision@k)` for every scored query, in query order.
    pub per_query: Vec<(String, f64)>,
    /// Queries without labels.
    pub skipped: Vec<String>,
    pub mean: f64,
}

/// Mean precision@K of every labelled query against the database.
pub fn evaluate(
    queries: &BinaryCodebook,
    query_labels: &[BTreeSet<String>],
    db: &BinaryCodebook,
    db_labels: &[BTreeSet<String>],
    k: usize,
) -> Result<EvalReport, HashError> {
    if db.is_empty() {
        return Err(HashError::EmptyDatabase);
    }
    if queries.bits() != db.bits() {
        return Err(HashError::WidthMismatch {
            left: queries.bits(),
            right: db.bits(),
        });
    }
    if query_labels.len() != queries.len() || db_labels.len() != db.len() {
        return Err(HashError::InvalidArgument("label list length differs from codebook".into()));
    }
    if k == 0 {
        return Err(HashError::InvalidArgument("K must be positive".into()));
    }
    if k > db.len() {
        return Err(HashError::KTooLarge { k, n: db.len() });
    }
    let scores: Vec<Option<f64>> = (0..queries.len())
        .into_par_iter()
        .map(|q| {
            if query_labels[q].is_empty() {
                return Ok(None);
            }
            let hits = topk(queries.code(q), db, k)?;
            let retrieved: Vec<&BTreeSet<String>> = hits.iter().map(|&(i, _)| &db_labels[i]).collect();
            Ok(precision_at_k(&retrieved, &query_labels[q]))
        })
        .collect::<Result<_, HashError>>()?;
    let mut per_query = Vec::new();
    let mut skipped = Vec::new();
    for (id, s) in queries.ids().iter().zip(scores) {
        match s {
            Some(p) => per_query.push((id.clone(), p)),
            None => skipped.push(id.clone()),
        }
    }
    if per_query.is_empty() {
        return Err(HashError::NoScorableQueries);
    }
    let mean = per_query.iter().map(|(_, p)| p).sum::<f64>() / per_query.len() as f64;
    Ok(EvalReport {
        k,
        per_query,
        skipped,
        mean,
    })
}

/// `id<TAB>precision` rows after a header, then `MEAN<TAB>value`.
pub fn write_eval_report(out: &mut impl Write, report: &EvalReport) -> std::io::Result<()> {
    writeln!(out, "id\tprecision@{}", report.k)?;
    for (id, p) in &report.per_query {
        writeln!(out, "{id}\t{p}")?;
    }
    writeln!(out, "MEAN\t{}", report.mean)
}
