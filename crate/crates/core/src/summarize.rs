//! Evidence assembly: greedy coverage-maximizing sentence selection under a
//! token budget, then conservative deletion-only compression.
//!
//! Compression never touches a token inside a skeleton span, so every
//! emitted sentence is textually derivable from its source — the output can
//! only state what the document states. A responsiveness gate rejects
//! evidence that fails to mention every query entity group.

use std::collections::{BTreeSet, HashMap};

use crate::corpus::Document;
use crate::kb::ExpandedQuery;
use crate::skeleton::{SkeletonAnnotation, SkeletonSpan, SpanLabel};

/// Summary length and compression knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryConfig {
    /// Maximum total tokens across emitted sentences.
    pub budget: usize,
    pub compression_enabled: bool,
}

impl Default for SummaryConfig {
    fn default() -> SummaryConfig {
        SummaryConfig {
            budget: 60,
            compression_enabled: true,
        }
    }
}

/// Identity of one skeleton item. Repeated mentions of the same item collapse
/// to one identity, so coverage counts concepts rather than occurrences.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ItemIdentity {
    pub label: SpanLabel,
    pub text: String,
    pub group_ref: Option<usize>,
}

impl ItemIdentity {
    pub fn of(span: &SkeletonSpan, doc: &Document) -> ItemIdentity {
        ItemIdentity {
            label: span.label,
            text: span.covered_text(doc),
            group_ref: span.group_ref,
        }
    }
}

/// Sentence-form evidence with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Evidence {
    pub doc_id: String,
    /// Selected sentences in document order: (sentence index, emitted text).
    pub sentences: Vec<(usize, String)>,
    pub covered_items: BTreeSet<ItemIdentity>,
    /// The entity surfaces this evidence responds to.
    pub query_entities: Vec<String>,
    /// The skeleton the summary was built from.
    pub skeleton: SkeletonAnnotation,
}

impl Evidence {
    /// All emitted sentence texts joined by a space.
    pub fn text(&self) -> String {
        self.sentences
            .iter()
            .map(|(_, t)| t.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Why no evidence could be produced for a document.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NoEvidence {
    #[error("no sentence covers any skeleton item")]
    EmptySelection,
    #[error("selected text lacks any surface form of entity group {0}")]
    Unresponsive(usize),
}

/// Identities of the skeleton items lying in one sentence.
pub fn sentence_coverage(
    sentence_index: usize,
    annotation: &SkeletonAnnotation,
    doc: &Document,
) -> BTreeSet<ItemIdentity> {
    annotation
        .spans
        .iter()
        .filter(|s| s.sentence_index == sentence_index)
        .map(|s| ItemIdentity::of(s, doc))
        .collect()
}

/// Greedy maximum-coverage sentence selection under the token budget.
///
/// Each round picks the sentence adding the most uncovered items, breaking
/// ties by fewer tokens and then lower index; the loop stops when nothing
/// adds coverage or the best pick would exceed the budget. The synthetic
/// title sentence is indexed and matched but never selected — titles are not
/// sentences, and evidence must be. Output is in document order.
pub fn select_sentences(
    doc: &Document,
    annotation: &SkeletonAnnotation,
    config: &SummaryConfig,
) -> Vec<usize> {
    let candidates: Vec<(usize, BTreeSet<ItemIdentity>, usize)> = doc
        .sentences
        .iter()
        .filter(|s| !doc.is_title_sentence(s.index))
        .map(|s| {
            (
                s.index,
                sentence_coverage(s.index, annotation, doc),
                doc.sentence_token_count(s.index),
            )
        })
        .collect();

    let mut covered: BTreeSet<ItemIdentity> = BTreeSet::new();
    let mut selected: Vec<usize> = Vec::new();
    let mut used_tokens = 0usize;

    loop {
        let mut best: Option<(usize, usize, usize)> = None; // (gain, tokens, index)
        for (index, items, tokens) in &candidates {
            if selected.contains(index) {
                continue;
            }
            let gain = items.difference(&covered).count();
            if gain == 0 {
                continue;
            }
            let candidate = (gain, *tokens, *index);
            let better = match best {
                None => true,
                Some((bg, bt, bi)) => {
                    gain > bg || (gain == bg && (*tokens < bt || (*tokens == bt && *index < bi)))
                }
            };
            if better {
                best = Some(candidate);
            }
        }
        let Some((_, tokens, index)) = best else {
            break;
        };
        if used_tokens + tokens > config.budget {
            break;
        }
        used_tokens += tokens;
        selected.push(index);
        if let Some((_, items, _)) = candidates.iter().find(|(i, _, _)| *i == index) {
            covered.extend(items.iter().cloned());
        }
    }

    selected.sort_unstable();
    selected
}

const DISCOURSE_MARKERS: [&str; 4] = ["however,", "moreover,", "in addition,", "furthermore,"];

/// Deletion-only sentence compression.
///
/// In order: (1) drop a leading discourse marker, (2) remove parenthesized
/// segments containing no skeleton token, (3) collapse whitespace. No token
/// inside a skeleton span is ever deleted.
pub fn compress_sentence(
    doc: &Document,
    sentence_index: usize,
    annotation: &SkeletonAnnotation,
) -> String {
    let Some(sentence) = doc.sentences.get(sentence_index) else {
        return String::new();
    };
    let text = match doc.sentence_text(sentence_index) {
        Some(t) => t,
        None => return String::new(),
    };

    // Character offsets (relative to the sentence) owned by skeleton spans.
    let mut protected: Vec<(usize, usize)> = Vec::new();
    for span in annotation
        .spans
        .iter()
        .filter(|s| s.sentence_index == sentence_index)
    {
        for token in &doc.tokens[span.token_start..span.token_end] {
            protected.push((token.start - sentence.start, token.end - sentence.start));
        }
    }
    let is_protected =
        |lo: usize, hi: usize| protected.iter().any(|&(s, e)| s < hi && lo < e);

    let chars: Vec<char> = text.chars().collect();
    let mut keep = vec![true; chars.len()];

    // Rule 1: leading discourse marker.
    let lower: String = chars.iter().collect::<String>().to_lowercase();
    for marker in DISCOURSE_MARKERS {
        if lower.starts_with(marker) {
            let len = marker.chars().count();
            if !is_protected(0, len) {
                for slot in &mut keep[..len] {
                    *slot = false;
                }
            }
            break;
        }
    }

    // Rule 2: parenthesized segments without skeleton tokens.
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '(' {
            let mut depth = 1;
            let mut j = i + 1;
            while j < chars.len() && depth > 0 {
                match chars[j] {
                    '(' => depth += 1,
                    ')' => depth -= 1,
                    _ => {}
                }
                j += 1;
            }
            if depth == 0 && !is_protected(i, j) {
                for slot in &mut keep[i..j] {
                    *slot = false;
                }
            }
            i = j;
        } else {
            i += 1;
        }
    }

    // Rule 3: collapse whitespace.
    let mut out = String::new();
    let mut pending_space = false;
    for (idx, &ch) in chars.iter().enumerate() {
        if !keep[idx] {
            continue;
        }
        if ch.is_whitespace() {
            pending_space = true;
        } else {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(ch);
        }
    }
    out
}

/// Select, optionally compress, and assemble evidence for one document.
///
/// Errors with [`NoEvidence`] when nothing is selected or the assembled text
/// fails to contain at least one surface form of every entity group.
pub fn generate_evidence(
    doc: &Document,
    annotation: &SkeletonAnnotation,
    query: &ExpandedQuery,
    config: &SummaryConfig,
) -> Result<Evidence, NoEvidence> {
    let selected = select_sentences(doc, annotation, config);
    if selected.is_empty() {
        return Err(NoEvidence::EmptySelection);
    }

    let mut sentences = Vec::with_capacity(selected.len());
    let mut covered = BTreeSet::new();
    for index in selected {
        let text = if config.compression_enabled {
            compress_sentence(doc, index, annotation)
        } else {
            doc.sentence_text(index).unwrap_or_default().to_string()
        };
        covered.extend(sentence_coverage(index, annotation, doc));
        sentences.push((index, text));
    }

    let emitted_norms: Vec<String> = sentences
        .iter()
        .flat_map(|(_, t)| crate::corpus::tokenize(t))
        .map(|t| t.norm)
        .collect();
    for (group_idx, group) in query.groups.iter().enumerate() {
        let satisfied = group.forms.iter().any(|form| {
            !form.is_empty()
                && emitted_norms
                    .windows(form.len())
                    .any(|w| w.iter().zip(form.iter()).all(|(a, b)| a == b))
        });
        if !satisfied {
            return Err(NoEvidence::Unresponsive(group_idx));
        }
    }

    Ok(Evidence {
        doc_id: doc.doc_id.clone(),
        sentences,
        covered_items: covered,
        query_entities: query.groups.iter().map(|g| g.source.clone()).collect(),
        skeleton: annotation.clone(),
    })
}

/// Check that `emitted` is derivable from the source sentence by deletion
/// only: its tokens are a subsequence of the source tokens and every
/// skeleton token survives. Used by tests and the acceptance suite.
pub fn is_faithful_compression(
    doc: &Document,
    sentence_index: usize,
    annotation: &SkeletonAnnotation,
    emitted: &str,
) -> bool {
    let source = match doc.sentence_text(sentence_index) {
        Some(t) => t,
        None => return false,
    };
    let source_norms: Vec<String> = crate::corpus::tokenize(source)
        .into_iter()
        .map(|t| t.norm)
        .collect();
    let emitted_norms: Vec<String> = crate::corpus::tokenize(emitted)
        .into_iter()
        .map(|t| t.norm)
        .collect();

    // Subsequence check.
    let mut it = source_norms.iter();
    for needle in &emitted_norms {
        if !it.any(|s| s == needle) {
            return false;
        }
    }

    // Every skeleton token in this sentence survives with its multiplicity.
    let mut required: HashMap<&str, usize> = HashMap::new();
    for span in annotation
        .spans
        .iter()
        .filter(|s| s.sentence_index == sentence_index)
    {
        for token in &doc.tokens[span.token_start..span.token_end] {
            *required.entry(token.norm.as_str()).or_insert(0) += 1;
        }
    }
    required.into_iter().all(|(norm, needed)| {
        emitted_norms.iter().filter(|n| n.as_str() == norm).count() >= needed
    })
}

/// Total tokens across emitted sentences.
pub fn emitted_token_count(evidence: &Evidence) -> usize {
    evidence
        .sentences
        .iter()
        .map(|(_, t)| crate::corpus::tokenize(t).len())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Document;
    use crate::kb::{
        expand_query, parse_embeddings, parse_trigger_lexicon, EmbeddingTable, EntityType,
        Query, SynonymKb,
    };
    use crate::skeleton::{extract_skeleton, SkeletonConfig};

    const STUDY_PASSAGE: &str = "Lifestyle changes and treatment with metformin both reduced \
         the incidence of diabetes in persons at high risk. The lifestyle intervention was \
         more effective than metformin.";

    const TOY_EMBEDDINGS: &str = "\
metformin 1 0 0 0
diabetes 0 1 0 0
treatment 0.9 0.1 0.3 0
intervention 0.8 0 0.6 0
";

    fn stopwords() -> BTreeSet<String> {
        ["and", "with", "the", "of", "in", "at", "was", "than", "more", "both"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    fn study_setup() -> (Document, ExpandedQuery, SkeletonAnnotation) {
        let doc = Document::new("dpp1", "", STUDY_PASSAGE);
        let eq = expand_query(
            &Query {
                entities: vec![
                    ("diabetes".into(), EntityType::Other),
                    ("metformin".into(), EntityType::Other),
                ],
            },
            &SynonymKb::new(),
        );
        let ann = extract_skeleton(
            &doc,
            &eq,
            &parse_trigger_lexicon("reduced the incidence of\n"),
            &parse_embeddings(TOY_EMBEDDINGS).unwrap(),
            &SkeletonConfig {
                tau: 0.6,
                max_similar_per_sentence: 3,
                stopwords: stopwords(),
            },
        );
        (doc, eq, ann)
    }

    #[test]
    fn coverage_of_first_study_sentence() {
        let (doc, _, ann) = study_setup();
        let items = sentence_coverage(0, &ann, &doc);
        let texts: BTreeSet<&str> = items.iter().map(|i| i.text.as_str()).collect();
        assert_eq!(
            texts,
            BTreeSet::from(["treatment", "metformin", "reduced the incidence of", "diabetes"])
        );
        let labels: Vec<SpanLabel> = items
            .iter()
            .filter(|i| i.text == "treatment")
            .map(|i| i.label)
            .collect();
        assert_eq!(labels, [SpanLabel::Similar]);
    }

    #[test]
    fn coverage_empty_sentence() {
        let (doc, _, ann) = study_setup();
        assert!(sentence_coverage(99, &ann, &doc).is_empty());
    }

    #[test]
    fn repeated_mentions_collapse() {
        let doc = Document::new("d1", "", "metformin and metformin again.");
        let eq = expand_query(
            &Query {
                entities: vec![("metformin".into(), EntityType::Other)],
            },
            &SynonymKb::new(),
        );
        let ann = extract_skeleton(
            &doc,
            &eq,
            &parse_trigger_lexicon(""),
            &EmbeddingTable::default(),
            &SkeletonConfig::default(),
        );
        assert_eq!(ann.spans.len(), 2);
        assert_eq!(sentence_coverage(0, &ann, &doc).len(), 1);
    }


    #[test]
    fn greedy_selects_both_study_sentences() {
        let (doc, _, ann) = study_setup();
        let cfg = SummaryConfig {
            budget: 60,
            compression_enabled: true,
        };
        let selected = select_sentences(&doc, &ann, &cfg);
        assert_eq!(selected, [0, 1]);

        // Exhaustive subset oracle over the two sentences confirms greedy is
        // optimal here.
        let all: BTreeSet<ItemIdentity> = sentence_coverage(0, &ann, &doc)
            .union(&sentence_coverage(1, &ann, &doc))
            .cloned()
            .collect();
        let greedy_cover: BTreeSet<ItemIdentity> = selected
            .iter()
            .flat_map(|&i| sentence_coverage(i, &ann, &doc))
            .collect();
        assert_eq!(greedy_cover, all);
        assert_eq!(all.len(), 5);
    }

    #[test]
    fn single_covering_sentence_selected_alone() {
        let doc = Document::new("d1", "", "metformin reduced diabetes. Unrelated sentence here.");
        let eq = expand_query(
            &Query {
                entities: vec![
                    ("diabetes".into(), EntityType::Other),
                    ("metformin".into(), EntityType::Other),
                ],
            },
            &SynonymKb::new(),
        );
        let ann = extract_skeleton(
            &doc,
            &eq,
            &parse_trigger_lexicon(""),
            &EmbeddingTable::default(),
            &SkeletonConfig::default(),
        );
        let selected = select_sentences(&doc, &ann, &SummaryConfig::default());
        assert_eq!(selected, [0]);
    }

    #[test]
    fn empty_skeleton_selects_nothing() {
        let doc = Document::new("d1", "", "Some text here. More text there.");
        let ann = SkeletonAnnotation {
            doc_id: "d1".into(),
            spans: vec![],
            tau: 0.6,
        };
        assert!(select_sentences(&doc, &ann, &SummaryConfig::default()).is_empty());
    }

    #[test]
    fn budget_stops_selection() {
        let (doc, _, ann) = study_setup();
        // First sentence needs 17 tokens; a budget of 10 admits nothing.
        let cfg = SummaryConfig {
            budget: 10,
            compression_enabled: false,
        };
        assert!(select_sentences(&doc, &ann, &cfg).is_empty());
        // 17 admits exactly the first.
        let cfg = SummaryConfig {
            budget: 17,
            compression_enabled: false,
        };
        assert_eq!(select_sentences(&doc, &ann, &cfg), [0]);
    }

    #[test]
    fn compress_drops_leading_discourse_marker() {
        let doc = Document::new("d1", "", "However, metformin reduced risk.");
        let eq = expand_query(
            &Query {
                entities: vec![("metformin".into(), EntityType::Other)],
            },
            &SynonymKb::new(),
        );
        let ann = extract_skeleton(
            &doc,
            &eq,
            &parse_trigger_lexicon(""),
            &EmbeddingTable::default(),
            &SkeletonConfig::default(),
        );
        assert_eq!(compress_sentence(&doc, 0, &ann), "metformin reduced risk.");
    }

    #[test]
    fn compress_removes_skeleton_free_parenthetical() {
        let doc = Document::new("d1", "", "metformin (n = 3234) reduced risk");
        let eq = expand_query(
            &Query {
                entities: vec![("metformin".into(), EntityType::Other)],
            },
            &SynonymKb::new(),
        );
        let ann = extract_skeleton(
            &doc,
            &eq,
            &parse_trigger_lexicon(""),
            &EmbeddingTable::default(),
            &SkeletonConfig::default(),
        );
        assert_eq!(compress_sentence(&doc, 0, &ann), "metformin reduced risk");
    }

    #[test]
    fn compress_keeps_parenthetical_with_skeleton_token() {
        let doc = Document::new("d1", "", "The drug (including diabetes cases) was studied");
        let eq = expand_query(
            &Query {
                entities: vec![("diabetes".into(), EntityType::Other)],
            },
            &SynonymKb::new(),
        );
        let ann = extract_skeleton(
            &doc,
            &eq,
            &parse_trigger_lexicon(""),
            &EmbeddingTable::default(),
            &SkeletonConfig::default(),
        );
        assert_eq!(
            compress_sentence(&doc, 0, &ann),
            "The drug (including diabetes cases) was studied"
        );
    }

    #[test]
    fn evidence_for_study_passage() {
        let (doc, eq, ann) = study_setup();
        let evidence = generate_evidence(&doc, &ann, &eq, &SummaryConfig::default()).unwrap();
        let text = evidence.text();
        assert!(text.contains("metformin"));
        assert!(text.contains("diabetes"));
        assert!(text.contains("reduced the incidence of"));
        assert_eq!(evidence.covered_items.len(), 5);
        assert_eq!(evidence.sentences.len(), 2);
        assert!(evidence.sentences[0].0 < evidence.sentences[1].0);
    }

    #[test]
    fn missing_entity_group_yields_no_evidence() {
        // Document mentions metformin but never diabetes: the diabetes group
        // has no skeleton item and the gate rejects the evidence.
        let doc = Document::new("d1", "", "metformin lowered glucose levels.");
        let eq = expand_query(
            &Query {
                entities: vec![
                    ("diabetes".into(), EntityType::Other),
                    ("metformin".into(), EntityType::Other),
                ],
            },
            &SynonymKb::new(),
        );
        let ann = extract_skeleton(
            &doc,
            &eq,
            &parse_trigger_lexicon(""),
            &EmbeddingTable::default(),
            &SkeletonConfig::default(),
        );
        let err = generate_evidence(&doc, &ann, &eq, &SummaryConfig::default()).unwrap_err();
        assert_eq!(err, NoEvidence::Unresponsive(0));
    }

    #[test]
    fn empty_selection_yields_no_evidence() {
        let doc = Document::new("d1", "", "Nothing matches here.");
        let eq = expand_query(
            &Query {
                entities: vec![("metformin".into(), EntityType::Other)],
            },
            &SynonymKb::new(),
        );
        let ann = SkeletonAnnotation {
            doc_id: "d1".into(),
            spans: vec![],
            tau: 0.6,
        };
        let err = generate_evidence(&doc, &ann, &eq, &SummaryConfig::default()).unwrap_err();
        assert_eq!(err, NoEvidence::EmptySelection);
    }

    #[test]
    fn evidence_is_deterministic() {
        let (doc, eq, ann) = study_setup();
        let a = generate_evidence(&doc, &ann, &eq, &SummaryConfig::default()).unwrap();
        let b = generate_evidence(&doc, &ann, &eq, &SummaryConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn compression_is_faithful() {
        let doc = Document::new(
            "d1",
            "",
            "However, metformin (tested in 3234 adults) reduced the incidence of diabetes.",
        );
        let eq = expand_query(
            &Query {
                entities: vec![
                    ("diabetes".into(), EntityType::Other),
                    ("metformin".into(), EntityType::Other),
                ],
            },
            &SynonymKb::new(),
        );
        let ann = extract_skeleton(
            &doc,
            &eq,
            &parse_trigger_lexicon("reduced the incidence of\n"),
            &EmbeddingTable::default(),
            &SkeletonConfig::default(),
        );
        let compressed = compress_sentence(&doc, 0, &ann);
        assert_eq!(
            compressed,
            "metformin reduced the incidence of diabetes."
        );
        assert!(is_faithful_compression(&doc, 0, &ann, &compressed));
    }

    #[test]
    fn title_sentence_never_selected() {
        let doc = Document::new("d1", "metformin reduced diabetes", "Unrelated body text.");
        let eq = expand_query(
            &Query {
                entities: vec![
                    ("diabetes".into(), EntityType::Other),
                    ("metformin".into(), EntityType::Other),
                ],
            },
            &SynonymKb::new(),
        );
        let ann = extract_skeleton(
            &doc,
            &eq,
            &parse_trigger_lexicon(""),
            &EmbeddingTable::default(),
            &SkeletonConfig::default(),
        );
        // The title carries skeleton items but is not selectable.
        assert!(!ann.spans.is_empty());
        assert!(select_sentences(&doc, &ann, &SummaryConfig::default()).is_empty());
        let err = generate_evidence(&doc, &ann, &eq, &SummaryConfig::default()).unwrap_err();
        assert_eq!(err, NoEvidence::EmptySelection);
    }
}
