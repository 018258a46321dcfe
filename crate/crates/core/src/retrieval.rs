//! Inverted index with conjunctive BM25 search and on-disk persistence.
//!
//! Retrieval is conjunctive over entity groups: a document qualifies only if
//! it contains at least one surface form of every group. Multi-word forms
//! must occur as consecutive token norms within a single sentence (the
//! per-document token sequences carry sentence breaks for this). Qualifying
//! documents are ranked by BM25 over the union of all query-form component
//! tokens.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::Cursor;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use sha2::{Digest, Sha256};

use crate::corpus::Document;
use crate::kb::{ExpandedQuery, SurfaceForm};

/// Sentinel term id marking a sentence break inside a document's token
/// sequence. Real term ids are dense from 0, so no phrase window can match
/// across it.
const SENTENCE_BREAK: u32 = u32::MAX;

/// Magic bytes opening every index file.
const MAGIC: &[u8; 8] = b"BEGEIDX1";
const FORMAT_VERSION: u32 = 1;

/// One posting: a document ordinal and the term's frequency in it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc_ordinal: u32,
    pub tf: u32,
}

/// Corpus-level statistics used by BM25.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexStats {
    /// Number of documents.
    pub doc_count: usize,
    /// Mean document length in tokens (0 for an empty index).
    pub avg_doc_len: f64,
}

/// BM25 free parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    /// Term-frequency saturation, >= 0.
    pub k1: f64,
    /// Length normalization in [0, 1].
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Bm25Params {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// A ranked search result. Ranks are 1-based; ties in score are broken by
/// doc id ascending, so output order is reproducible across platforms.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub doc_id: String,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("duplicate document id \"{0}\"")]
    DuplicateId(String),
    #[error("index contains no documents")]
    EmptyIndex,
    #[error("unknown document ordinal {0}")]
    UnknownDocument(u32),
    #[error("corrupt index file: {0}")]
    Corrupt(&'static str),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// An immutable inverted index over a document corpus.
///
/// Besides postings, the index stores the raw title and body of every
/// document, so a loaded index is self-contained: skeleton extraction and
/// summarization can reconstruct any hit without the original corpus file.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    terms: Vec<String>,
    term_ids: HashMap<String, u32>,
    postings: Vec<Vec<Posting>>,
    doc_ids: Vec<String>,
    doc_titles: Vec<String>,
    doc_bodies: Vec<String>,
    doc_ordinals: HashMap<String, u32>,
    /// Per-document term-id sequences, with `SENTENCE_BREAK` between
    /// sentences. Used for consecutive-phrase checks.
    doc_tokens: Vec<Vec<u32>>,
    /// Token counts per document (sentence breaks excluded).
    doc_lengths: Vec<u32>,
    stats: IndexStats,
}

impl InvertedIndex {
    pub fn stats(&self) -> IndexStats {
        self.stats
    }

    pub fn num_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn doc_id(&self, ordinal: u32) -> Option<&str> {
        self.doc_ids.get(ordinal as usize).map(|s| s.as_str())
    }

    pub fn ordinal(&self, doc_id: &str) -> Option<u32> {
        self.doc_ordinals.get(doc_id).copied()
    }

    pub fn doc_length(&self, ordinal: u32) -> Option<u32> {
        self.doc_lengths.get(ordinal as usize).copied()
    }

    /// Rebuild the full document for a hit from the stored title and body.
    /// Segmentation is deterministic, so this reproduces exactly the
    /// document that was indexed.
    pub fn stored_doc(&self, ordinal: u32) -> Option<Document> {
        let i = ordinal as usize;
        Some(Document::new(
            self.doc_ids.get(i)?.clone(),
            self.doc_titles.get(i)?,
            self.doc_bodies.get(i)?,
        ))
    }

    /// Number of documents containing `term` (0 for unseen terms).
    pub fn document_frequency(&self, term: &str) -> usize {
        self.term_ids
            .get(term)
            .map(|&id| self.postings[id as usize].len())
            .unwrap_or(0)
    }

    /// Frequency of `term` in one document (0 when absent).
    pub fn term_frequency(&self, term: &str, ordinal: u32) -> u32 {
        let Some(&id) = self.term_ids.get(term) else {
            return 0;
        };
        let postings = &self.postings[id as usize];
        postings
            .binary_search_by_key(&ordinal, |p| p.doc_ordinal)
            .map(|i| postings[i].tf)
            .unwrap_or(0)
    }

    /// BM25 inverse document frequency with the +1-inside-log variant, which
    /// stays positive even when a term appears in every document.
    pub fn idf(&self, term: &str) -> Result<f64, IndexError> {
        let n = self.stats.doc_count as f64;
        if self.stats.doc_count == 0 {
            return Err(IndexError::EmptyIndex);
        }
        let df = self.document_frequency(term) as f64;
        Ok(((n - df + 0.5) / (df + 0.5) + 1.0).ln())
    }

    /// BM25 score of one document against an expanded query: the sum over
    /// every distinct component token of the query's surface forms of
    /// `idf(t) * tf*(k1+1) / (tf + k1*(1 - b + b*dl/avgdl))`.
    pub fn bm25_score(
        &self,
        ordinal: u32,
        query: &ExpandedQuery,
        params: Bm25Params,
    ) -> Result<f64, IndexError> {
        if self.stats.doc_count == 0 {
            return Err(IndexError::EmptyIndex);
        }
        let dl = self
            .doc_length(ordinal)
            .ok_or(IndexError::UnknownDocument(ordinal))? as f64;
        let avgdl = self.stats.avg_doc_len;
        let mut score = 0.0;
        for term in query.all_terms() {
            let tf = self.term_frequency(&term, ordinal) as f64;
            if tf == 0.0 {
                continue;
            }
            let idf = self.idf(&term)?;
            let denom = tf + params.k1 * (1.0 - params.b + params.b * dl / avgdl);
            score += idf * tf * (params.k1 + 1.0) / denom;
        }
        Ok(score)
    }

    /// Whether a document contains a surface form as consecutive token norms
    /// within one sentence.
    pub fn doc_contains_form(&self, ordinal: u32, form: &SurfaceForm) -> bool {
        if form.is_empty() {
            return false;
        }
        let Some(ids) = self.form_term_ids(form) else {
            return false;
        };
        let Some(tokens) = self.doc_tokens.get(ordinal as usize) else {
            return false;
        };
        contains_run(tokens, &ids)
    }

    fn form_term_ids(&self, form: &SurfaceForm) -> Option<Vec<u32>> {
        form.iter()
            .map(|t| self.term_ids.get(t).copied())
            .collect()
    }

    /// Ordinals of documents containing at least one form of every entity
    /// group.
    fn conjunctive_candidates(&self, query: &ExpandedQuery) -> Vec<u32> {
        let mut result: Option<BTreeSet<u32>> = None;
        for group in &query.groups {
            let mut group_docs = BTreeSet::new();
            for form in &group.forms {
                let Some(ids) = self.form_term_ids(form) else {
                    continue;
                };
                if ids.is_empty() {
                    continue;
                }
                if ids.len() == 1 {
                    group_docs
                        .extend(self.postings[ids[0] as usize].iter().map(|p| p.doc_ordinal));
                } else {
                    // Candidates must hold every component token; verify
                    // adjacency against the stored token sequence.
                    let mut docs: BTreeSet<u32> = self.postings[ids[0] as usize]
                        .iter()
                        .map(|p| p.doc_ordinal)
                        .collect();
                    for &id in &ids[1..] {
                        let with_term: BTreeSet<u32> = self.postings[id as usize]
                            .iter()
                            .map(|p| p.doc_ordinal)
                            .collect();
                        docs = docs.intersection(&with_term).copied().collect();
                        if docs.is_empty() {
                            break;
                        }
                    }
                    group_docs.extend(
                        docs.into_iter()
                            .filter(|&d| contains_run(&self.doc_tokens[d as usize], &ids)),
                    );
                }
            }
            result = Some(match result {
                None => group_docs,
                Some(acc) => acc.intersection(&group_docs).copied().collect(),
            });
            if result.as_ref().is_some_and(|s| s.is_empty()) {
                break;
            }
        }
        result.unwrap_or_default().into_iter().collect()
    }

    /// Conjunctive BM25 search: filter to documents satisfying every entity
    /// group, rank by score descending (ties by doc id ascending), return at
    /// most `k` hits. An empty index yields no hits.
    pub fn search(
        &self,
        query: &ExpandedQuery,
        k: usize,
        params: Bm25Params,
    ) -> Result<Vec<SearchHit>, IndexError> {
        if self.stats.doc_count == 0 || query.groups.is_empty() {
            return Ok(Vec::new());
        }
        let mut scored: Vec<(u32, f64)> = Vec::new();
        for ordinal in self.conjunctive_candidates(query) {
            let score = self.bm25_score(ordinal, query, params)?;
            scored.push((ordinal, score));
        }
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.doc_ids[a.0 as usize].cmp(&self.doc_ids[b.0 as usize]))
        });
        Ok(scored
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, (ordinal, score))| SearchHit {
                doc_id: self.doc_ids[ordinal as usize].clone(),
                score,
                rank: i + 1,
            })
            .collect())
    }

    /// Serialize to the on-disk format: magic bytes, version, little-endian
    /// payload, trailing SHA-256 checksum. Identical indexes produce
    /// identical bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.write_u32::<LittleEndian>(FORMAT_VERSION).unwrap();
        buf.write_u64::<LittleEndian>(self.doc_ids.len() as u64)
            .unwrap();
        for i in 0..self.doc_ids.len() {
            write_string(&mut buf, &self.doc_ids[i]);
            write_string(&mut buf, &self.doc_titles[i]);
            write_string(&mut buf, &self.doc_bodies[i]);
        }
        for &len in &self.doc_lengths {
            buf.write_u32::<LittleEndian>(len).unwrap();
        }
        for tokens in &self.doc_tokens {
            buf.write_u32::<LittleEndian>(tokens.len() as u32).unwrap();
            for &id in tokens {
                buf.write_u32::<LittleEndian>(id).unwrap();
            }
        }
        buf.write_u32::<LittleEndian>(self.terms.len() as u32)
            .unwrap();
        for (term, postings) in self.terms.iter().zip(&self.postings) {
            write_string(&mut buf, term);
            buf.write_u32::<LittleEndian>(postings.len() as u32).unwrap();
            for p in postings {
                buf.write_u32::<LittleEndian>(p.doc_ordinal).unwrap();
                buf.write_u32::<LittleEndian>(p.tf).unwrap();
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        buf
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<InvertedIndex, IndexError> {
        if bytes.len() < MAGIC.len() + 4 + 32 {
            return Err(IndexError::Corrupt("file too short"));
        }
        let (payload, checksum) = bytes.split_at(bytes.len() - 32);
        if &payload[..MAGIC.len()] != MAGIC {
            return Err(IndexError::Corrupt("bad magic bytes"));
        }
        let digest = Sha256::digest(payload);
        if digest.as_slice() != checksum {
            return Err(IndexError::Corrupt("checksum mismatch"));
        }

        let mut cur = Cursor::new(&payload[MAGIC.len()..]);
        let version = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| IndexError::Corrupt("truncated header"))?;
        if version != FORMAT_VERSION {
            return Err(IndexError::Corrupt("unsupported format version"));
        }
        let doc_count = cur
            .read_u64::<LittleEndian>()
            .map_err(|_| IndexError::Corrupt("truncated header"))? as usize;

        let mut doc_ids = Vec::with_capacity(doc_count);
        let mut doc_titles = Vec::with_capacity(doc_count);
        let mut doc_bodies = Vec::with_capacity(doc_count);
        for _ in 0..doc_count {
            doc_ids.push(read_string(&mut cur)?);
            doc_titles.push(read_string(&mut cur)?);
            doc_bodies.push(read_string(&mut cur)?);
        }
        let mut doc_lengths = Vec::with_capacity(doc_count);
        for _ in 0..doc_count {
            doc_lengths.push(
                cur.read_u32::<LittleEndian>()
                    .map_err(|_| IndexError::Corrupt("truncated doc lengths"))?,
            );
        }
        let mut doc_tokens = Vec::with_capacity(doc_count);
        for _ in 0..doc_count {
            let len = cur
                .read_u32::<LittleEndian>()
                .map_err(|_| IndexError::Corrupt("truncated token sequence"))?
                as usize;
            let mut tokens = Vec::with_capacity(len);
            for _ in 0..len {
                tokens.push(
                    cur.read_u32::<LittleEndian>()
                        .map_err(|_| IndexError::Corrupt("truncated token sequence"))?,
                );
            }
            doc_tokens.push(tokens);
        }
        let term_count = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| IndexError::Corrupt("truncated term table"))? as usize;
        let mut terms = Vec::with_capacity(term_count);
        let mut postings = Vec::with_capacity(term_count);
        for _ in 0..term_count {
            terms.push(read_string(&mut cur)?);
            let plen = cur
                .read_u32::<LittleEndian>()
                .map_err(|_| IndexError::Corrupt("truncated postings"))?
                as usize;
            let mut list = Vec::with_capacity(plen);
            for _ in 0..plen {
                let doc_ordinal = cur
                    .read_u32::<LittleEndian>()
                    .map_err(|_| IndexError::Corrupt("truncated postings"))?;
                let tf = cur
                    .read_u32::<LittleEndian>()
                    .map_err(|_| IndexError::Corrupt("truncated postings"))?;
                list.push(Posting { doc_ordinal, tf });
            }
            postings.push(list);
        }
        if (cur.position() as usize) != payload.len() - MAGIC.len() {
            return Err(IndexError::Corrupt("trailing bytes in payload"));
        }

        let term_ids = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        let doc_ordinals = doc_ids
            .iter()
            .enumerate()
            .map(|(i, d)| (d.clone(), i as u32))
            .collect();
        let stats = compute_stats(&doc_lengths);
        Ok(InvertedIndex {
            terms,
            term_ids,
            postings,
            doc_ids,
            doc_titles,
            doc_bodies,
            doc_ordinals,
            doc_tokens,
            doc_lengths,
            stats,
        })
    }

    pub fn load(path: &Path) -> Result<InvertedIndex, IndexError> {
        InvertedIndex::from_bytes(&fs::read(path)?)
    }
}

fn write_string(buf: &mut Vec<u8>, s: &str) {
    buf.write_u32::<LittleEndian>(s.len() as u32).unwrap();
    buf.extend_from_slice(s.as_bytes());
}

fn read_string(cur: &mut Cursor<&[u8]>) -> Result<String, IndexError> {
    let len = cur
        .read_u32::<LittleEndian>()
        .map_err(|_| IndexError::Corrupt("truncated string"))? as usize;
    let start = cur.position() as usize;
    let data = *cur.get_ref();
    let end = start
        .checked_add(len)
        .filter(|&e| e <= data.len())
        .ok_or(IndexError::Corrupt("truncated string"))?;
    let s = std::str::from_utf8(&data[start..end])
        .map_err(|_| IndexError::Corrupt("invalid utf-8 string"))?
        .to_string();
    cur.set_position(end as u64);
    Ok(s)
}

fn contains_run(haystack: &[u32], needle: &[u32]) -> bool {
    !needle.is_empty()
        && haystack
            .windows(needle.len())
            .any(|window| window == needle)
}

fn compute_stats(doc_lengths: &[u32]) -> IndexStats {
    let doc_count = doc_lengths.len();
    let avg_doc_len = if doc_count == 0 {
        0.0
    } else {
        doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / doc_count as f64
    };
    IndexStats {
        doc_count,
        avg_doc_len,
    }
}

/// Build an inverted index over a corpus. Term ids are assigned in first
/// encounter order, so identical corpora produce identical indexes.
pub fn build_index(docs: &[Document]) -> Result<InvertedIndex, IndexError> {
    let mut terms: Vec<String> = Vec::new();
    let mut term_ids: HashMap<String, u32> = HashMap::new();
    let mut postings: Vec<Vec<Posting>> = Vec::new();
    let mut doc_ids = Vec::with_capacity(docs.len());
    let mut doc_titles = Vec::with_capacity(docs.len());
    let mut doc_bodies = Vec::with_capacity(docs.len());
    let mut doc_ordinals = HashMap::with_capacity(docs.len());
    let mut doc_tokens = Vec::with_capacity(docs.len());
    let mut doc_lengths = Vec::with_capacity(docs.len());

    for (ordinal, doc) in docs.iter().enumerate() {
        let ordinal = ordinal as u32;
        if doc_ordinals.insert(doc.doc_id.clone(), ordinal).is_some() {
            return Err(IndexError::DuplicateId(doc.doc_id.clone()));
        }
        doc_ids.push(doc.doc_id.clone());
        doc_titles.push(doc.title.clone());
        doc_bodies.push(doc.body.clone());

        let mut sequence = Vec::with_capacity(doc.tokens.len());
        let mut counts: HashMap<u32, u32> = HashMap::new();
        let mut prev_sentence = None;
        for token in &doc.tokens {
            if let Some(prev) = prev_sentence {
                if prev != token.sentence_index {
                    sequence.push(SENTENCE_BREAK);
                }
            }
            prev_sentence = Some(token.sentence_index);
            let id = match term_ids.get(&token.norm) {
                Some(&id) => id,
                None => {
                    let id = terms.len() as u32;
                    terms.push(token.norm.clone());
                    term_ids.insert(token.norm.clone(), id);
                    postings.push(Vec::new());
                    id
                }
            };
            sequence.push(id);
            *counts.entry(id).or_insert(0) += 1;
        }
        doc_lengths.push(doc.tokens.len() as u32);
        doc_tokens.push(sequence);

        // Postings stay sorted by ordinal because documents are processed in
        // order; within a document, sort term ids for determinism.
        let mut doc_terms: Vec<(u32, u32)> = counts.into_iter().collect();
        doc_terms.sort_unstable();
        for (term_id, tf) in doc_terms {
            postings[term_id as usize].push(Posting {
                doc_ordinal: ordinal,
                tf,
            });
        }
    }

    let stats = compute_stats(&doc_lengths);
    Ok(InvertedIndex {
        terms,
        term_ids,
        postings,
        doc_ids,
        doc_titles,
        doc_bodies,
        doc_ordinals,
        doc_tokens,
        doc_lengths,
        stats,
    })
}
