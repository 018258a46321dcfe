//! File-backed knowledge resources and query expansion.
//!
//! The engine consumes three resource kinds, all plain text so tests stay
//! hermetic: a synonym knowledge base (TSV), a trigger-phrase lexicon (one
//! phrase per line), and a word-embedding table. Query expansion replaces
//! each entity with its full set of surface forms.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;

/// Entity categories recognized by the synonym KB. Untyped query entities
/// get [`EntityType::Other`] and are looked up across all categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityType {
    Disease,
    Gene,
    Drug,
    Other,
}

impl EntityType {
    pub fn parse(s: &str) -> Option<EntityType> {
        match s {
            "disease" => Some(EntityType::Disease),
            "gene" => Some(EntityType::Gene),
            "drug" => Some(EntityType::Drug),
            "other" => Some(EntityType::Other),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            EntityType::Disease => "disease",
            EntityType::Gene => "gene",
            EntityType::Drug => "drug",
            EntityType::Other => "other",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An entity query: ordered entities with optional types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub entities: Vec<(String, EntityType)>,
}

/// A surface form as a sequence of lowercase token norms.
pub type SurfaceForm = Vec<String>;

fn normalize_form(text: &str) -> SurfaceForm {
    tokenize(text).into_iter().map(|t| t.norm).collect()
}

/// Synonym knowledge base mapping `(type, canonical)` to alias forms.
///
/// Every alias set contains the canonical form itself; all forms are stored
/// lowercase-tokenized so lookups are insensitive to case and punctuation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymKb {
    entries: BTreeMap<(EntityType, String), BTreeSet<SurfaceForm>>,
}

impl SynonymKb {
    pub fn new() -> SynonymKb {
        SynonymKb::default()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Register an alias for a canonical surface. The canonical's own token
    /// sequence is always part of the set.
    pub fn insert(&mut self, etype: EntityType, canonical: &str, alias: &str) {
        let canonical_form = normalize_form(canonical);
        if canonical_form.is_empty() {
            return;
        }
        let key = (etype, canonical_form.join(" "));
        let set = self.entries.entry(key).or_default();
        set.insert(canonical_form);
        let alias_form = normalize_form(alias);
        if !alias_form.is_empty() {
            set.insert(alias_form);
        }
    }

    /// Alias set for an exact `(type, canonical)` pair.
    pub fn lookup(&self, etype: EntityType, surface: &str) -> Option<&BTreeSet<SurfaceForm>> {
        let key = (etype, normalize_form(surface).join(" "));
        self.entries.get(&key)
    }

    /// Alias forms for a surface across all entity types (used for untyped
    /// entities): the union of every type's alias set for that canonical.
    pub fn lookup_any_type(&self, surface: &str) -> BTreeSet<SurfaceForm> {
        let canonical = normalize_form(surface).join(" ");
        let mut out = BTreeSet::new();
        for ((_, key), forms) in &self.entries {
            if *key == canonical {
                out.extend(forms.iter().cloned());
            }
        }
        out
    }

    /// Serialize back to the TSV load format, rows sorted by
    /// (type, canonical, alias). Reloading the output reproduces the KB.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for ((etype, canonical), forms) in &self.entries {
            for form in forms {
                out.push_str(etype.as_str());
                out.push('\t');
                out.push_str(canonical);
                out.push('\t');
                out.push_str(&form.join(" "));
                out.push('\n');
            }
        }
        out
    }
}

/// One expanded entity: the source surface plus its alias forms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityGroup {
    pub source: String,
    pub etype: EntityType,
    pub forms: BTreeSet<SurfaceForm>,
}

/// A query after synonym expansion: one group per entity, order preserved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpandedQuery {
    pub groups: Vec<EntityGroup>,
}

impl ExpandedQuery {
    /// All distinct component tokens across every group's forms.
    pub fn all_terms(&self) -> BTreeSet<String> {
        self.groups
            .iter()
            .flat_map(|g| g.forms.iter())
            .flat_map(|f| f.iter().cloned())
            .collect()
    }
}

/// Expand each query entity into its KB alias group, falling back to the
/// entity's own token sequence when the KB has no entry.
pub fn expand_query(query: &Query, kb: &SynonymKb) -> ExpandedQuery {
    let groups = query
        .entities
        .iter()
        .map(|(surface, etype)| {
            let own = normalize_form(surface);
            let mut forms = match etype {
                EntityType::Other => kb.lookup_any_type(surface),
                typed => kb
                    .lookup(*typed, surface)
                    .cloned()
                    .unwrap_or_default(),
            };
            if !own.is_empty() {
                forms.insert(own);
            }
            EntityGroup {
                source: surface.clone(),
                etype: *etype,
                forms,
            }
        })
        .collect();
    ExpandedQuery { groups }
}

/// Claim-indicator phrases, stored lowercase-tokenized. Inflectional
/// variants are separate entries; there is no morphology engine.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TriggerLexicon {
    phrases: BTreeSet<SurfaceForm>,
}

impl TriggerLexicon {
    pub fn new() -> TriggerLexicon {
        TriggerLexicon::default()
    }

    pub fn insert(&mut self, phrase: &str) {
        let form = normalize_form(phrase);
        if !form.is_empty() {
            self.phrases.insert(form);
        }
    }

    pub fn phrases(&self) -> impl Iterator<Item = &SurfaceForm> {
        self.phrases.iter()
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }
}

/// Word-embedding table with a fixed dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingTable {
    vectors: BTreeMap<String, Vec<f64>>,
    dim: Option<usize>,
}

impl EmbeddingTable {
    pub fn new() -> EmbeddingTable {
        EmbeddingTable::default()
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vectors.get(word).map(|v| v.as_slice())
    }

    /// Mean vector of a multi-token form, over the tokens present in the
    /// table. `None` when no token has a vector.
    pub fn mean_vector(&self, form: &[String]) -> Option<Vec<f64>> {
        let dim = self.dim?;
        let mut acc = vec![0.0; dim];
        let mut count = 0usize;
        for token in form {
            if let Some(v) = self.vectors.get(token) {
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += x;
                }
                count += 1;
            }
        }
        if count == 0 {
            return None;
        }
        for a in &mut acc {
            *a /= count as f64;
        }
        Some(acc)
    }
}

/// Errors raised while loading KB resources. Line numbers are 1-based.
#[derive(Debug, thiserror::Error)]
pub enum KbError {
    #[error("line {0}: expected 3 tab-separated columns")]
    BadRow(usize),
    #[error("line {0}: unknown entity type")]
    UnknownEntityType(usize),
    #[error("line {0}: vector dimension differs from established dimension")]
    DimensionMismatch(usize),
    #[error("line {0}: non-numeric or non-finite vector component")]
    NonNumeric(usize),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Load a synonym KB from TSV: `etype<TAB>canonical<TAB>alias`, one alias
/// per row.
pub fn load_synonym_kb(path: &Path) -> Result<SynonymKb, KbError> {
    parse_synonym_kb(&fs::read_to_string(path)?)
}

pub fn parse_synonym_kb(text: &str) -> Result<SynonymKb, KbError> {
    let mut kb = SynonymKb::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(KbError::BadRow(line_no));
        }
        let etype = EntityType::parse(cols[0].trim())
            .ok_or(KbError::UnknownEntityType(line_no))?;
        kb.insert(etype, cols[1], cols[2]);
    }
    Ok(kb)
}

/// Load a trigger lexicon: one phrase per line, `#` for comments, blanks
/// skipped, duplicates collapsed.
pub fn load_trigger_lexicon(path: &Path) -> Result<TriggerLexicon, KbError> {
    Ok(parse_trigger_lexicon(&fs::read_to_string(path)?))
}

pub fn parse_trigger_lexicon(text: &str) -> TriggerLexicon {
    let mut lex = TriggerLexicon::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        lex.insert(line);
    }
    lex
}

/// Load word embeddings: optional `count dim` header, then
/// `word v1 ... vd` per line. All vectors must share one dimension and
/// contain only finite components.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable, KbError> {
    parse_embeddings(&fs::read_to_string(path)?)
}

pub fn parse_embeddings(text: &str) -> Result<EmbeddingTable, KbError> {
    let mut table = EmbeddingTable::new();
    let mut lines = text.lines().enumerate().peekable();

    // A first line of exactly two integers is a header.
    if let Some((_, first)) = lines.peek() {
        let fields: Vec<&str> = first.split_whitespace().collect();
        if fields.len() == 2 && fields.iter().all(|f| f.parse::<u64>().is_ok()) {
            table.dim = first
                .split_whitespace()
                .nth(1)
                .and_then(|d| d.parse::<usize>().ok());
            lines.next();
        }
    }

    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = match fields.next() {
            Some(w) => w.to_string(),
            None => continue,
        };
        let mut vector = Vec::new();
        for field in fields {
            let value: f64 = field.parse().map_err(|_| KbError::NonNumeric(line_no))?;
            if !value.is_finite() {
                return Err(KbError::NonNumeric(line_no));
            }
            vector.push(value);
        }
        match table.dim {
            None => table.dim = Some(vector.len()),
            Some(d) if d != vector.len() => return Err(KbError::DimensionMismatch(line_no)),
            Some(_) => {}
        }
        table.vectors.insert(word, vector);
    }
    Ok(table)
}

/// Errors from vector similarity.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SimilarityError {
    #[error("vectors have different dimensions")]
    DimensionMismatch,
    #[error("cosine is undefined for an all-zero vector")]
    ZeroVector,
}

/// Cosine similarity of two vectors.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, SimilarityError> {
    if u.len() != v.len() {
        return Err(SimilarityError::DimensionMismatch);
    }
    let mut dot = 0.0;
    let mut nu = 0.0;
    let mut nv = 0.0;
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        nu += a * a;
        nv += b * b;
    }
    if nu == 0.0 || nv == 0.0 {
        return Err(SimilarityError::ZeroVector);
    }
    Ok(dot / (nu.sqrt() * nv.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn form(words: &[&str]) -> SurfaceForm {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn kb_row_creates_group_with_canonical() {
        let kb = parse_synonym_kb("disease\tdiabetes\tdiabetes mellitus\n").unwrap();
        let set = kb.lookup(EntityType::Disease, "diabetes").unwrap();
        assert_eq!(set.len(), 2);
        assert!(set.contains(&form(&["diabetes"])));
        assert!(set.contains(&form(&["diabetes", "mellitus"])));
    }

    #[test]
    fn empty_kb_file() {
        let kb = parse_synonym_kb("").unwrap();
        assert!(kb.is_empty());
    }

    #[test]
    fn kb_bad_row() {
        let err = parse_synonym_kb("disease\tdiabetes\n").unwrap_err();
        assert!(matches!(err, KbError::BadRow(1)));
    }

    #[test]
    fn kb_unknown_entity_type() {
        let err = parse_synonym_kb("virus\tflu\tinfluenza\n").unwrap_err();
        assert!(matches!(err, KbError::UnknownEntityType(1)));
    }

    #[test]
    fn kb_tsv_round_trip() {
        let kb = parse_synonym_kb(
            "disease\tdiabetes\tdiabetes mellitus\n\
             disease\tdiabetes\tDM\n\
             drug\tmetformin\tglucophage\n",
        )
        .unwrap();
        let reloaded = parse_synonym_kb(&kb.to_tsv()).unwrap();
        assert_eq!(kb, reloaded);
    }

    #[test]
    fn expand_two_entities() {
        let kb = SynonymKb::new();
        let q = Query {
            entities: vec![
                ("diabetes".into(), EntityType::Other),
                ("metformin".into(), EntityType::Other),
            ],
        };
        let eq = expand_query(&q, &kb);
        assert_eq!(eq.groups.len(), 2);
        assert_eq!(eq.groups[0].source, "diabetes");
        assert_eq!(eq.groups[1].source, "metformin");
    }

    #[test]
    fn expand_absent_entity_is_singleton() {
        let kb = parse_synonym_kb("disease\tdiabetes\tdiabetes mellitus\n").unwrap();
        let q = Query {
            entities: vec![("aspirin".into(), EntityType::Drug)],
        };
        let eq = expand_query(&q, &kb);
        assert_eq!(eq.groups[0].forms.len(), 1);
        assert!(eq.groups[0].forms.contains(&form(&["aspirin"])));
    }

    #[test]
    fn expand_known_entity_gets_aliases() {
        let kb = parse_synonym_kb("disease\tdiabetes\tdiabetes mellitus\n").unwrap();
        let q = Query {
            entities: vec![("diabetes".into(), EntityType::Disease)],
        };
        let eq = expand_query(&q, &kb);
        assert_eq!(eq.groups[0].forms.len(), 2);
    }

    #[test]
    fn untyped_entity_searches_all_types() {
        let kb = parse_synonym_kb(
            "disease\tdiabetes\tdiabetes mellitus\ndrug\tdiabetes\todd alias\n",
        )
        .unwrap();
        let q = Query {
            entities: vec![("diabetes".into(), EntityType::Other)],
        };
        let eq = expand_query(&q, &kb);
        assert!(eq.groups[0].forms.contains(&form(&["diabetes", "mellitus"])));
        assert!(eq.groups[0].forms.contains(&form(&["odd", "alias"])));
    }

    #[test]
    fn trigger_lexicon_loads_phrases() {
        let lex = parse_trigger_lexicon("is linked to\nincrease the risk of\ndemonstrate\n");
        assert_eq!(lex.len(), 3);
        assert!(lex.phrases().any(|p| p == &form(&["increase", "the", "risk", "of"])));
    }

    #[test]
    fn trigger_lexicon_comments_only() {
        let lex = parse_trigger_lexicon("# a comment\n# another\n");
        assert!(lex.is_empty());
    }

    #[test]
    fn trigger_lexicon_dedupes() {
        let lex = parse_trigger_lexicon("demonstrate\ndemonstrate\n");
        assert_eq!(lex.len(), 1);
    }

    #[test]
    fn embeddings_basic() {
        let t = parse_embeddings("alpha 1.0 0.0 0.5\nbeta 0.0 1.0 0.25\n").unwrap();
        assert_eq!(t.dim(), Some(3));
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("alpha"), Some(&[1.0, 0.0, 0.5][..]));
    }

    #[test]
    fn embeddings_header_fixes_dim() {
        let err = parse_embeddings("2 3\nalpha 1.0 0.0 0.5\nbeta 0.0 1.0\n").unwrap_err();
        assert!(matches!(err, KbError::DimensionMismatch(3)));
    }

    #[test]
    fn embeddings_dimension_mismatch() {
        let err = parse_embeddings("alpha 1.0 0.0 0.5\nbeta 0.0 1.0\n").unwrap_err();
        assert!(matches!(err, KbError::DimensionMismatch(2)));
    }

    #[test]
    fn embeddings_non_numeric() {
        let err = parse_embeddings("alpha 1.0 oops\n").unwrap_err();
        assert!(matches!(err, KbError::NonNumeric(1)));
    }

    #[test]
    fn embeddings_empty_file() {
        let t = parse_embeddings("").unwrap();
        assert!(t.is_empty());
        assert_eq!(t.dim(), None);
        assert_eq!(t.mean_vector(&form(&["anything"])), None);
    }

    #[test]
    fn cosine_identity_orthogonal_analytic() {
        let v = [0.3, -1.2, 4.0];
        assert!((cosine(&v, &v).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let got = cosine(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((got - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!((got - 0.70711).abs() < 1e-5);
    }

    #[test]
    fn cosine_errors() {
        assert_eq!(
            cosine(&[1.0], &[1.0, 2.0]).unwrap_err(),
            SimilarityError::DimensionMismatch
        );
        assert_eq!(
            cosine(&[0.0, 0.0], &[1.0, 2.0]).unwrap_err(),
            SimilarityError::ZeroVector
        );
    }

    proptest! {
        #[test]
        fn cosine_symmetry_and_scale_invariance(
            u in proptest::collection::vec(-10.0f64..10.0, 3),
            v in proptest::collection::vec(-10.0f64..10.0, 3),
            a in 0.001f64..100.0,
        ) {
            prop_assume!(u.iter().any(|x| x.abs() > 1e-6));
            prop_assume!(v.iter().any(|x| x.abs() > 1e-6));
            let uv = cosine(&u, &v).unwrap();
            let vu = cosine(&v, &u).unwrap();
            prop_assert!((uv - vu).abs() < 1e-12);
            let scaled: Vec<f64> = u.iter().map(|x| a * x).collect();
            let suv = cosine(&scaled, &v).unwrap();
            prop_assert!((suv - uv).abs() < 1e-9);
        }

        // Expansion preserves entity order and count, and every group
        // contains its source form.
        #[test]
        fn expansion_preserves_groups(
            entities in proptest::collection::vec("[a-z]{1,8}( [a-z]{1,8})?", 1..5),
            rows in proptest::collection::vec(("[a-z]{1,8}", "[a-z]{1,8}( [a-z]{1,8})?"), 0..6),
        ) {
            let mut kb = SynonymKb::new();
            for (canon, alias) in &rows {
                kb.insert(EntityType::Disease, canon, alias);
            }
            let q = Query {
                entities: entities
                    .iter()
                    .map(|e| (e.clone(), EntityType::Other))
                    .collect(),
            };
            let eq = expand_query(&q, &kb);
            prop_assert_eq!(eq.groups.len(), q.entities.len());
            for (group, (surface, _)) in eq.groups.iter().zip(&q.entities) {
                prop_assert_eq!(&group.source, surface);
                prop_assert!(!group.forms.is_empty());
                let own: SurfaceForm =
                    tokenize(surface).into_iter().map(|t| t.norm).collect();
                prop_assert!(group.forms.contains(&own));
            }
        }
    }
}
