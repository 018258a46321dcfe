//! Evaluation against golden references: retrieval precision, skeleton F1,
//! and unigram recall of the evidence text.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;

use super::EvidenceSet;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("golden file line {0}: invalid entry")]
    GoldenFormat(usize),
    #[error("reference text has no tokens")]
    EmptyReference,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One golden reference: the relevant documents, expected skeleton items,
/// and a reference summary for a query.
#[derive(Debug, Clone, Deserialize)]
pub struct GoldenEntry {
    pub query: String,
    pub relevant_doc_ids: Vec<String>,
    pub skeleton_items: Vec<String>,
    pub reference_summary: String,
}

/// Load golden references from JSONL.
pub fn load_golden(path: &Path) -> Result<Vec<GoldenEntry>, EvalError> {
    parse_golden(&std::fs::read_to_string(path)?)
}

pub fn parse_golden(text: &str) -> Result<Vec<GoldenEntry>, EvalError> {
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let entry: GoldenEntry =
            serde_json::from_str(line).map_err(|_| EvalError::GoldenFormat(line_no))?;
        if tokenize(&entry.reference_summary).is_empty() {
            return Err(EvalError::GoldenFormat(line_no));
        }
        entries.push(entry);
    }
    Ok(entries)
}

/// ROUGE-1 recall: the fraction of reference token norms (as a multiset)
/// found in the candidate.
pub fn rouge1_recall(candidate: &str, reference: &str) -> Result<f64, EvalError> {
    let reference_norms: Vec<String> = tokenize(reference).into_iter().map(|t| t.norm).collect();
    if reference_norms.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let mut candidate_counts = std::collections::HashMap::new();
    for tok in tokenize(candidate) {
        *candidate_counts.entry(tok.norm).or_insert(0usize) += 1;
    }
    let mut matched = 0usize;
    for norm in &reference_norms {
        if let Some(count) = candidate_counts.get_mut(norm) {
            if *count > 0 {
                *count -= 1;
                matched += 1;
            }
        }
    }
    Ok(matched as f64 / reference_norms.len() as f64)
}

/// Metrics for one query.
#[derive(Debug, Clone, Serialize)]
pub struct QueryEval {
    pub query: String,
    pub precision_at_k: f64,
    pub skeleton_f1: f64,
    pub rouge1_recall: f64,
}

/// Per-query metrics plus macro averages. All values lie in [0, 1].
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub queries: Vec<QueryEval>,
    pub macro_precision_at_k: f64,
    pub macro_skeleton_f1: f64,
    pub macro_rouge1_recall: f64,
}

/// Score pipeline outputs against golden references.
///
/// Golden entries drive the evaluation; a query with no matching output
/// scores zero across the board. Precision is over the returned hits (at
/// most k of them), skeleton F1 compares the union of item texts across
/// hits, and ROUGE-1 recall reads the concatenated evidence text.
pub fn evaluate(outputs: &[EvidenceSet], golden: &[GoldenEntry]) -> Result<EvalReport, EvalError> {
    let mut queries = Vec::with_capacity(golden.len());
    for entry in golden {
        let output = outputs.iter().find(|o| o.query == entry.query);
        queries.push(evaluate_one(output, entry)?);
    }
    let n = queries.len().max(1) as f64;
    let report = EvalReport {
        macro_precision_at_k: queries.iter().map(|q| q.precision_at_k).sum::<f64>() / n,
        macro_skeleton_f1: queries.iter().map(|q| q.skeleton_f1).sum::<f64>() / n,
        macro_rouge1_recall: queries.iter().map(|q| q.rouge1_recall).sum::<f64>() / n,
        queries,
    };
    Ok(report)
}

fn evaluate_one(
    output: Option<&EvidenceSet>,
    entry: &GoldenEntry,
) -> Result<QueryEval, EvalError> {
    let empty = EvidenceSet {
        query: entry.query.clone(),
        expanded: crate::kb::ExpandedQuery { groups: vec![] },
        results: vec![],
    };
    let output = output.unwrap_or(&empty);

    let relevant: BTreeSet<&str> = entry.relevant_doc_ids.iter().map(|s| s.as_str()).collect();
    let returned: Vec<&str> = output
        .results
        .iter()
        .map(|r| r.hit.doc_id.as_str())
        .collect();
    let precision_at_k = if returned.is_empty() {
        if relevant.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        returned.iter().filter(|id| relevant.contains(*id)).count() as f64
            / returned.len() as f64
    };

    let predicted: BTreeSet<&str> = output
        .results
        .iter()
        .flat_map(|r| r.span_texts.iter().map(|s| s.as_str()))
        .collect();
    let expected: BTreeSet<&str> = entry.skeleton_items.iter().map(|s| s.as_str()).collect();
    let skeleton_f1 = set_f1(&predicted, &expected);

    let candidate = output
        .results
        .iter()
        .filter_map(|r| r.outcome.as_ref().ok())
        .map(|ev| ev.text())
        .collect::<Vec<_>>()
        .join(" ");
    let rouge = rouge1_recall(&candidate, &entry.reference_summary)?;

    Ok(QueryEval {
        query: entry.query.clone(),
        precision_at_k,
        skeleton_f1,
        rouge1_recall: rouge,
    })
}

fn set_f1(predicted: &BTreeSet<&str>, expected: &BTreeSet<&str>) -> f64 {
    if predicted.is_empty() && expected.is_empty() {
        return 1.0;
    }
    if predicted.is_empty() || expected.is_empty() {
        return 0.0;
    }
    let overlap = predicted.intersection(expected).count() as f64;
    let precision = overlap / predicted.len() as f64;
    let recall = overlap / expected.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}
