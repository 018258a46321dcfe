//! Pipeline orchestration: expand, search, extract, summarize.
//!
//! The [`Engine`] owns an immutable loaded index and resources, so queries
//! can run concurrently without coordination. Per-hit work happens in rank
//! order and output order always equals search order — hits that yield no
//! evidence are kept with a marker rather than silently dropped, because a
//! document that matches but cannot evidence the query is itself a finding.

mod config;
mod eval;
mod output;

pub use config::EngineConfig;
pub use eval::{
    evaluate, load_golden, parse_golden, rouge1_recall, EvalError, EvalReport, GoldenEntry,
    QueryEval,
};
pub use output::EvidenceSetJson;

use crate::corpus::tokenize;
use crate::kb::{
    expand_query, load_embeddings, load_synonym_kb, load_trigger_lexicon, EmbeddingTable,
    EntityType, ExpandedQuery, Query, SynonymKb, TriggerLexicon,
};
use crate::retrieval::{Bm25Params, IndexError, InvertedIndex, SearchHit};
use crate::skeleton::{extract_skeleton, load_stopwords, SkeletonAnnotation, SkeletonConfig};
use crate::summarize::{generate_evidence, Evidence, NoEvidence, SummaryConfig};

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("query contains no entities")]
    EmptyQuery,
    #[error("entity \"{0}\" has no indexable tokens")]
    InvalidEntity(String),
    #[error("index contains no documents")]
    EmptyIndex,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("index error: {0}")]
    Index(#[from] IndexError),
    #[error("knowledge base error: {0}")]
    Kb(#[from] crate::kb::KbError),
    #[error("corpus error: {0}")]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("evaluation error: {0}")]
    Eval(#[from] EvalError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One retrieved document with its skeleton and evidence outcome.
#[derive(Debug, Clone)]
pub struct PipelineHit {
    pub hit: SearchHit,
    pub skeleton: SkeletonAnnotation,
    /// Covered text per skeleton span, parallel to `skeleton.spans`.
    pub span_texts: Vec<String>,
    pub outcome: Result<Evidence, NoEvidence>,
}

/// The full output of one query: the echo, the expansion, and per-hit
/// results in rank order.
#[derive(Debug, Clone)]
pub struct EvidenceSet {
    pub query: String,
    pub expanded: ExpandedQuery,
    pub results: Vec<PipelineHit>,
}

impl EvidenceSet {
    /// Serialize to the fixed-field-order JSON wire format.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&EvidenceSetJson::from_evidence_set(self))
            .expect("evidence set serialization cannot fail")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&EvidenceSetJson::from_evidence_set(self))
            .expect("evidence set serialization cannot fail")
    }
}

/// Parse a raw query string: comma-separated entities with optional
/// `type:` prefixes ("disease:diabetes, drug:metformin"). Unprefixed
/// entities are untyped and match any KB category.
pub fn parse_raw_query(raw: &str) -> Result<Query, EngineError> {
    let mut entities = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (surface, etype) = match part.split_once(':') {
            Some((prefix, rest)) => match EntityType::parse(prefix.trim().to_lowercase().as_str())
            {
                Some(etype) => (rest.trim(), etype),
                None => (part, EntityType::Other),
            },
            None => (part, EntityType::Other),
        };
        if surface.is_empty() {
            continue;
        }
        if tokenize(surface).is_empty() {
            return Err(EngineError::InvalidEntity(surface.to_string()));
        }
        entities.push((surface.to_string(), etype));
    }
    if entities.is_empty() {
        return Err(EngineError::EmptyQuery);
    }
    Ok(Query { entities })
}

/// The loaded engine: index plus knowledge resources plus settings.
pub struct Engine {
    index: InvertedIndex,
    synonyms: SynonymKb,
    triggers: TriggerLexicon,
    embeddings: EmbeddingTable,
    skeleton_config: SkeletonConfig,
    summary_config: SummaryConfig,
    bm25: Bm25Params,
    k: usize,
}

impl Engine {
    /// Load every resource named by the config. Fails fast on any missing
    /// or invalid file.
    pub fn from_config(config: &EngineConfig) -> Result<Engine, EngineError> {
        config.validate()?;
        let index = InvertedIndex::load(&config.index_path)?;
        let synonyms = load_synonym_kb(&config.synonyms_path)?;
        let triggers = load_trigger_lexicon(&config.triggers_path)?;
        let embeddings = load_embeddings(&config.embeddings_path)?;
        let stopwords = load_stopwords(&config.stopwords_path)?;
        Ok(Engine {
            index,
            synonyms,
            triggers,
            embeddings,
            skeleton_config: SkeletonConfig {
                tau: config.tau,
                max_similar_per_sentence: config.max_similar_per_sentence,
                stopwords,
            },
            summary_config: SummaryConfig {
                budget: config.budget,
                compression_enabled: config.compression_enabled,
            },
            bm25: config.bm25,
            k: config.k,
        })
    }

    /// Assemble an engine from already-loaded parts (used by tests and by
    /// callers that build indexes in memory).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        index: InvertedIndex,
        synonyms: SynonymKb,
        triggers: TriggerLexicon,
        embeddings: EmbeddingTable,
        skeleton_config: SkeletonConfig,
        summary_config: SummaryConfig,
        bm25: Bm25Params,
        k: usize,
    ) -> Engine {
        Engine {
            index,
            synonyms,
            triggers,
            embeddings,
            skeleton_config,
            summary_config,
            bm25,
            k,
        }
    }

    pub fn index(&self) -> &InvertedIndex {
        &self.index
    }

    pub fn default_k(&self) -> usize {
        self.k
    }

    /// Run the full pipeline at the configured result depth.
    pub fn run_pipeline(&self, raw_query: &str) -> Result<EvidenceSet, EngineError> {
        self.run_pipeline_with_k(raw_query, self.k)
    }

    /// Run the full pipeline: parse, expand, search, then per hit extract
    /// the skeleton and generate evidence.
    pub fn run_pipeline_with_k(&self, raw_query: &str, k: usize) -> Result<EvidenceSet, EngineError> {
        if self.index.num_docs() == 0 {
            return Err(EngineError::EmptyIndex);
        }
        let query = parse_raw_query(raw_query)?;
        let expanded = expand_query(&query, &self.synonyms);
        let hits = self.index.search(&expanded, k, self.bm25)?;

        let mut results = Vec::with_capacity(hits.len());
        for hit in hits {
            let ordinal = self
                .index
                .ordinal(&hit.doc_id)
                .expect("search hit must resolve to an ordinal");
            let doc = self
                .index
                .stored_doc(ordinal)
                .expect("search hit must have a stored document");
            let skeleton = extract_skeleton(
                &doc,
                &expanded,
                &self.triggers,
                &self.embeddings,
                &self.skeleton_config,
            );
            let span_texts = skeleton
                .spans
                .iter()
                .map(|s| s.covered_text(&doc))
                .collect();
            let outcome = generate_evidence(&doc, &skeleton, &expanded, &self.summary_config);
            results.push(PipelineHit {
                hit,
                skeleton,
                span_texts,
                outcome,
            });
        }
        Ok(EvidenceSet {
            query: raw_query.to_string(),
            expanded,
            results,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, ParseMode};
    use crate::kb::{parse_embeddings, parse_synonym_kb, parse_trigger_lexicon};
    use crate::retrieval::build_index;
    use crate::skeleton::parse_stopwords;

    const TOY_EMBEDDINGS: &str = "\
metformin 1 0 0 0
diabetes 0 1 0 0
treatment 0.9 0.1 0.3 0
intervention 0.8 0 0.6 0
lifestyle 0.1 0.2 0 0.95
";

    const STOPWORDS: &str = "and\nwith\nthe\nof\nin\nat\nwas\nthan\nmore\nboth\n";

    fn mini_corpus() -> &'static str {
        concat!(
            r#"{"id":"dpp1","title":"Reduction in the incidence of type 2 diabetes with lifestyle intervention or metformin","abstract":"Lifestyle changes and treatment with metformin both reduced the incidence of diabetes in persons at high risk. The lifestyle intervention was more effective than metformin."}"#,
            "\n",
            r#"{"id":"d02","title":"Metformin pharmacokinetics","abstract":"Metformin absorption was measured in healthy volunteers."}"#,
            "\n",
            r#"{"id":"d03","title":"Diabetes prevalence survey","abstract":"Diabetes prevalence increased across the surveyed regions."}"#,
            "\n",
            r#"{"id":"d04","title":"Cardiovascular outcomes","abstract":"Statin therapy lowered cardiovascular events in the cohort."}"#,
            "\n"
        )
    }

    fn test_engine() -> Engine {
        let parsed = parse_corpus(mini_corpus().as_bytes(), ParseMode::Strict).unwrap();
        let index = build_index(&parsed.documents).unwrap();
        Engine::from_parts(
            index,
            parse_synonym_kb("disease\tdiabetes\tdiabetes mellitus\n").unwrap(),
            parse_trigger_lexicon("reduced the incidence of\n"),
            parse_embeddings(TOY_EMBEDDINGS).unwrap(),
            SkeletonConfig {
                tau: 0.6,
                max_similar_per_sentence: 3,
                stopwords: parse_stopwords(STOPWORDS),
            },
            SummaryConfig::default(),
            Bm25Params::default(),
            10,
        )
    }

    #[test]
    fn parse_typed_query() {
        let q = parse_raw_query("disease:diabetes, drug:metformin").unwrap();
        assert_eq!(
            q.entities,
            vec![
                ("diabetes".to_string(), EntityType::Disease),
                ("metformin".to_string(), EntityType::Drug),
            ]
        );
    }

    #[test]
    fn parse_untyped_query() {
        let q = parse_raw_query("diabetes, metformin").unwrap();
        assert!(q.entities.iter().all(|(_, t)| *t == EntityType::Other));
    }

    #[test]
    fn parse_empty_query() {
        assert!(matches!(parse_raw_query("  ,  "), Err(EngineError::EmptyQuery)));
        assert!(matches!(parse_raw_query(""), Err(EngineError::EmptyQuery)));
    }

    #[test]
    fn parse_entity_without_tokens() {
        assert!(matches!(
            parse_raw_query("diabetes, ***"),
            Err(EngineError::InvalidEntity(_))
        ));
    }

    #[test]
    fn unknown_prefix_is_part_of_surface() {
        let q = parse_raw_query("weird:thing").unwrap();
        assert_eq!(q.entities[0].0, "weird:thing");
        assert_eq!(q.entities[0].1, EntityType::Other);
    }

    #[test]
    fn pipeline_returns_single_qualifying_doc() {
        let engine = test_engine();
        let set = engine.run_pipeline("diabetes, metformin").unwrap();
        assert_eq!(set.results.len(), 1);
        assert_eq!(set.results[0].hit.doc_id, "dpp1");
        let evidence = set.results[0].outcome.as_ref().unwrap();
        assert!(evidence.text().contains("metformin"));
        assert!(evidence.text().contains("reduced the incidence of"));
    }

    #[test]
    fn pipeline_entity_absent_everywhere() {
        let engine = test_engine();
        let set = engine.run_pipeline("diabetes, nonexistentdrug").unwrap();
        assert!(set.results.is_empty());
    }

    #[test]
    fn pipeline_k_larger_than_matches() {
        let engine = test_engine();
        let set = engine.run_pipeline_with_k("metformin", 100).unwrap();
        // Both metformin docs qualify; k exceeds them without error.
        assert_eq!(set.results.len(), 2);
    }

    #[test]
    fn pipeline_empty_index_rejected() {
        let index = build_index(&[]).unwrap();
        let engine = Engine::from_parts(
            index,
            SynonymKb::new(),
            TriggerLexicon::new(),
            EmbeddingTable::new(),
            SkeletonConfig::default(),
            SummaryConfig::default(),
            Bm25Params::default(),
            10,
        );
        assert!(matches!(
            engine.run_pipeline("anything"),
            Err(EngineError::EmptyIndex)
        ));
    }

    #[test]
    fn pipeline_json_deterministic() {
        let engine = test_engine();
        let a = engine.run_pipeline("diabetes, metformin").unwrap().to_json();
        let b = engine.run_pipeline("diabetes, metformin").unwrap().to_json();
        assert_eq!(a, b);
        assert!(a.starts_with("{\"query\":\"diabetes, metformin\",\"expanded_query\":"));
    }

    #[test]
    fn evaluate_golden_study_entry() {
        let engine = test_engine();
        let outputs = vec![engine.run_pipeline("diabetes, metformin").unwrap()];
        let golden = parse_golden(
            r#"{"query":"diabetes, metformin","relevant_doc_ids":["dpp1"],"skeleton_items":["treatment","metformin","reduced the incidence of","diabetes","intervention"],"reference_summary":"metformin treatment prevent diabetes, but lifestyle intervention is more effective"}"#,
        )
        .unwrap();
        let report = evaluate(&outputs, &golden).unwrap();
        assert_eq!(report.queries.len(), 1);
        assert_eq!(report.queries[0].precision_at_k, 1.0);
        assert_eq!(report.queries[0].skeleton_f1, 1.0);
        assert!(report.queries[0].rouge1_recall >= 0.2);
        assert_eq!(report.macro_skeleton_f1, 1.0);
    }

    #[test]
    fn evaluate_missing_output_scores_zero() {
        let golden = parse_golden(
            r#"{"query":"unseen","relevant_doc_ids":["x"],"skeleton_items":["y"],"reference_summary":"z"}"#,
        )
        .unwrap();
        let report = evaluate(&[], &golden).unwrap();
        assert_eq!(report.queries[0].precision_at_k, 0.0);
        assert_eq!(report.queries[0].skeleton_f1, 0.0);
        assert_eq!(report.queries[0].rouge1_recall, 0.0);
    }
}
