//! Evidence generation engine for biomedical literature.
//!
//! Given an entity query such as "diabetes, metformin", the engine retrieves
//! abstracts that contain every query entity (or a knowledge-base alias of
//! it), marks up the query-anchored skeleton of each hit — exact entity
//! matches, claim-trigger phrases, and embedding-similar terms — and emits
//! sentence-form evidence with full provenance back to the source document.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`corpus`]: JSONL ingestion, sentence segmentation, tokenization
//! - [`kb`]: synonym knowledge bases, trigger lexica, word embeddings,
//!   query expansion
//! - [`retrieval`]: persistent inverted index and conjunctive BM25 search
//! - [`skeleton`]: skeleton span extraction over retrieved documents
//! - [`summarize`]: coverage-maximizing sentence selection and deletion-only
//!   compression
//! - [`engine`]: pipeline orchestration, configuration, JSON output, and
//!   evaluation against golden references

pub mod corpus;
pub mod engine;
pub mod kb;
pub mod retrieval;
pub mod skeleton;
pub mod summarize;

pub use corpus::{Document, Sentence, Token};
pub use engine::{Engine, EngineConfig, EvidenceSet};
pub use kb::{EmbeddingTable, EntityType, ExpandedQuery, Query, SynonymKb, TriggerLexicon};
pub use retrieval::{Bm25Params, InvertedIndex, SearchHit};
pub use skeleton::{SkeletonAnnotation, SkeletonConfig, SkeletonSpan, SpanLabel};
pub use summarize::{Evidence, SummaryConfig};
