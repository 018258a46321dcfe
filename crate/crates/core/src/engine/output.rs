//! The JSON wire format for pipeline output.
//!
//! Field order is fixed by struct declaration order and every collection is
//! emitted in a deterministic order, so identical runs serialize to
//! identical bytes.

use serde::Serialize;

use super::{EvidenceSet, PipelineHit};

#[derive(Debug, Serialize)]
pub struct EvidenceSetJson {
    pub query: String,
    pub expanded_query: Vec<ExpandedGroupJson>,
    pub results: Vec<ResultJson>,
}

#[derive(Debug, Serialize)]
pub struct ExpandedGroupJson {
    pub entity: String,
    pub etype: String,
    /// Surface forms as space-joined token norms, sorted.
    pub forms: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ResultJson {
    pub doc_id: String,
    pub score: f64,
    pub rank: usize,
    pub skeleton: Vec<SpanJson>,
    pub evidence: Option<EvidenceJson>,
}

#[derive(Debug, Serialize)]
pub struct SpanJson {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub label: &'static str,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Serialize)]
pub struct EvidenceJson {
    pub sentences: Vec<SentenceJson>,
    /// Distinct covered item texts, sorted.
    pub covered_items: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct SentenceJson {
    pub index: usize,
    pub text: String,
}

impl EvidenceSetJson {
    pub fn from_evidence_set(set: &EvidenceSet) -> EvidenceSetJson {
        EvidenceSetJson {
            query: set.query.clone(),
            expanded_query: set
                .expanded
                .groups
                .iter()
                .map(|g| ExpandedGroupJson {
                    entity: g.source.clone(),
                    etype: g.etype.as_str().to_string(),
                    forms: g.forms.iter().map(|f| f.join(" ")).collect(),
                })
                .collect(),
            results: set.results.iter().map(result_json).collect(),
        }
    }
}

fn result_json(hit: &PipelineHit) -> ResultJson {
    let skeleton = hit
        .skeleton
        .spans
        .iter()
        .zip(&hit.span_texts)
        .map(|(span, text)| SpanJson {
            sentence: span.sentence_index,
            start: span.token_start,
            end: span.token_end,
            label: span.label.as_str(),
            score: span.score,
            text: text.clone(),
        })
        .collect();
    let evidence = hit.outcome.as_ref().ok().map(|ev| EvidenceJson {
        sentences: ev
            .sentences
            .iter()
            .map(|(index, text)| SentenceJson {
                index: *index,
                text: text.clone(),
            })
            .collect(),
        covered_items: {
            let mut items: Vec<String> = ev
                .covered_items
                .iter()
                .map(|i| i.text.clone())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            items.sort();
            items
        },
    });
    ResultJson {
        doc_id: hit.hit.doc_id.clone(),
        score: hit.hit.score,
        rank: hit.hit.rank,
        skeleton,
        evidence,
    }
}
