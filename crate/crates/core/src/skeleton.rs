//! Skeleton extraction: the query-anchored spans that structure a summary.
//!
//! Three matchers contribute spans — exact query/alias matches, trigger
//! phrases from a lexicon, and single tokens embedding-similar to a query
//! entity — and overlap resolution merges them into one non-overlapping
//! annotation per document. Matching operates on token norms and never
//! crosses a sentence boundary.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::kb::{cosine, EmbeddingTable, ExpandedQuery, SurfaceForm, TriggerLexicon};

/// Span label, in overlap-resolution priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanLabel {
    ExactMatch,
    Trigger,
    Similar,
}

impl SpanLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            SpanLabel::ExactMatch => "exact_match",
            SpanLabel::Trigger => "trigger",
            SpanLabel::Similar => "similar",
        }
    }
}

/// A labeled token range within one sentence. Token indices are global
/// positions into the document token list; `token_end` is exclusive.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSpan {
    pub sentence_index: usize,
    pub token_start: usize,
    pub token_end: usize,
    pub label: SpanLabel,
    /// 1.0 for exact and trigger matches, the best cosine for similar ones.
    pub score: f64,
    /// Ordinal of the entity group this span answers (none for triggers).
    pub group_ref: Option<usize>,
}

impl SkeletonSpan {
    /// The covered text, normalized: token norms joined by single spaces.
    pub fn covered_text(&self, doc: &Document) -> String {
        doc.tokens[self.token_start..self.token_end]
            .iter()
            .map(|t| t.norm.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn overlaps(&self, other: &SkeletonSpan) -> bool {
        self.token_start < other.token_end && other.token_start < self.token_end
    }

    fn len(&self) -> usize {
        self.token_end - self.token_start
    }
}

/// Knobs for similarity matching. The threshold is deliberately permissive
/// by default; it is configuration, not ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonConfig {
    /// Cosine threshold in (0, 1] for similar-term spans.
    pub tau: f64,
    /// Cap on similar spans per sentence (highest scores kept).
    pub max_similar_per_sentence: usize,
    /// Function words never flagged as similar terms.
    pub stopwords: BTreeSet<String>,
}

impl Default for SkeletonConfig {
    fn default() -> SkeletonConfig {
        SkeletonConfig {
            tau: 0.6,
            max_similar_per_sentence: 3,
            stopwords: BTreeSet::new(),
        }
    }
}

/// Load a stopword list: one lowercase word per line, `#` for comments.
pub fn load_stopwords(path: &std::path::Path) -> std::io::Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path)?;
    Ok(parse_stopwords(&text))
}

pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect()
}

/// The resolved skeleton of one document: sorted, non-overlapping spans plus
/// a snapshot of the threshold that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonAnnotation {
    pub doc_id: String,
    pub spans: Vec<SkeletonSpan>,
    pub tau: f64,
}

impl SkeletonAnnotation {
    /// Distinct normalized covered texts, sorted.
    pub fn item_texts(&self, doc: &Document) -> BTreeSet<String> {
        self.spans.iter().map(|s| s.covered_text(doc)).collect()
    }
}

/// Token index ranges per sentence, in sentence order. Tokens are stored in
/// document order, so each sentence owns one contiguous range.
fn sentence_ranges(doc: &Document) -> Vec<(usize, usize, usize)> {
    let mut ranges: Vec<(usize, usize, usize)> = Vec::new();
    for (i, token) in doc.tokens.iter().enumerate() {
        match ranges.last_mut() {
            Some((sentence, _, end)) if *sentence == token.sentence_index => *end = i + 1,
            _ => ranges.push((token.sentence_index, i, i + 1)),
        }
    }
    ranges
}

/// Match a phrase list against a document: at each token position the
/// longest matching phrase wins (lower group ordinal on length ties), and
/// matches never cross sentence boundaries.
fn match_phrases(
    doc: &Document,
    phrases: &[(Option<usize>, &SurfaceForm)],
    label: SpanLabel,
) -> Vec<SkeletonSpan> {
    let mut spans = Vec::new();
    if phrases.is_empty() {
        return spans;
    }
    for (sentence_index, start, end) in sentence_ranges(doc) {
        for pos in start..end {
            let mut best: Option<(usize, Option<usize>)> = None;
            for (group, form) in phrases {
                let len = form.len();
                if len == 0 || pos + len > end {
                    continue;
                }
                let window = &doc.tokens[pos..pos + len];
                if window.iter().zip(form.iter()).all(|(t, w)| &t.norm == w) {
                    let better = match best {
                        None => true,
                        Some((best_len, best_group)) => {
                            len > best_len || (len == best_len && *group < best_group)
                        }
                    };
                    if better {
                        best = Some((len, *group));
                    }
                }
            }
            if let Some((len, group)) = best {
                spans.push(SkeletonSpan {
                    sentence_index,
                    token_start: pos,
                    token_end: pos + len,
                    label,
                    score: 1.0,
                    group_ref: group,
                });
            }
        }
    }
    spans
}

/// Every occurrence of every entity-group surface form, longest match first
/// at each position.
pub fn match_exact(doc: &Document, query: &ExpandedQuery) -> Vec<SkeletonSpan> {
    let phrases: Vec<(Option<usize>, &SurfaceForm)> = query
        .groups
        .iter()
        .enumerate()
        .flat_map(|(g, group)| group.forms.iter().map(move |f| (Some(g), f)))
        .collect();
    match_phrases(doc, &phrases, SpanLabel::ExactMatch)
}

/// Every occurrence of a lexicon trigger phrase, longest match first at each
/// position.
pub fn match_triggers(doc: &Document, lexicon: &TriggerLexicon) -> Vec<SkeletonSpan> {
    let phrases: Vec<(Option<usize>, &SurfaceForm)> =
        lexicon.phrases().map(|p| (None, p)).collect();
    match_phrases(doc, &phrases, SpanLabel::Trigger)
}

/// Single tokens whose embedding is cosine-similar (>= tau) to a query
/// entity. Tokens inside an exact-match span and stopwords are excluded;
/// at most `max_similar_per_sentence` spans survive per sentence.
pub fn match_similar(
    doc: &Document,
    query: &ExpandedQuery,
    embeddings: &EmbeddingTable,
    config: &SkeletonConfig,
) -> Vec<SkeletonSpan> {
    if embeddings.is_empty() {
        return Vec::new();
    }

    // Entity vectors: per group, the mean vector of each surface form that
    // has any embedded token.
    let group_vectors: Vec<Vec<Vec<f64>>> = query
        .groups
        .iter()
        .map(|g| g.forms.iter().filter_map(|f| embeddings.mean_vector(f)).collect())
        .collect();
    if group_vectors.iter().all(|v| v.is_empty()) {
        return Vec::new();
    }

    let mut excluded = vec![false; doc.tokens.len()];
    for span in match_exact(doc, query) {
        for slot in &mut excluded[span.token_start..span.token_end] {
            *slot = true;
        }
    }

    let mut spans = Vec::new();
    for (sentence_index, start, end) in sentence_ranges(doc) {
        let mut candidates: Vec<(usize, f64, usize)> = Vec::new(); // (pos, score, group)
        for pos in start..end {
            if excluded[pos] {
                continue;
            }
            let norm = &doc.tokens[pos].norm;
            if config.stopwords.contains(norm) {
                continue;
            }
            let Some(vector) = embeddings.get(norm) else {
                continue;
            };
            let mut best: Option<(f64, usize)> = None;
            for (group, entity_vectors) in group_vectors.iter().enumerate() {
                for entity_vector in entity_vectors {
                    let Ok(sim) = cosine(vector, entity_vector) else {
                        continue;
                    };
                    if best.is_none_or(|(s, _)| sim > s) {
                        best = Some((sim, group));
                    }
                }
            }
            if let Some((score, group)) = best {
                if score >= config.tau {
                    candidates.push((pos, score.min(1.0), group));
                }
            }
        }
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        candidates.truncate(config.max_similar_per_sentence);
        candidates.sort_by_key(|c| c.0);
        spans.extend(candidates.into_iter().map(|(pos, score, group)| SkeletonSpan {
            sentence_index,
            token_start: pos,
            token_end: pos + 1,
            label: SpanLabel::Similar,
            score,
            group_ref: Some(group),
        }));
    }
    spans
}

/// Run all three matchers and resolve overlaps into one annotation.
///
/// Priority on overlap: exact match over trigger over similar, then the
/// longer span, then the earlier start.
pub fn extract_skeleton(
    doc: &Document,
    query: &ExpandedQuery,
    lexicon: &TriggerLexicon,
    embeddings: &EmbeddingTable,
    config: &SkeletonConfig,
) -> SkeletonAnnotation {
    let mut all = match_exact(doc, query);
    all.extend(match_triggers(doc, lexicon));
    all.extend(match_similar(doc, query, embeddings, config));

    all.sort_by(|a, b| {
        a.label
            .cmp(&b.label)
            .then_with(|| b.len().cmp(&a.len()))
            .then_with(|| (a.sentence_index, a.token_start).cmp(&(b.sentence_index, b.token_start)))
    });

    let mut kept: Vec<SkeletonSpan> = Vec::new();
    for span in all {
        if kept.iter().all(|k| !k.overlaps(&span)) {
            kept.push(span);
        }
    }
    kept.sort_by_key(|s| (s.sentence_index, s.token_start));

    SkeletonAnnotation {
        doc_id: doc.doc_id.clone(),
        spans: kept,
        tau: config.tau,
    }
}
