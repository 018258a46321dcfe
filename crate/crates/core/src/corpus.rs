//! Corpus ingestion: JSONL abstracts with deterministic sentence and token
//! segmentation.
//!
//! Every downstream stage references documents by the offsets produced here,
//! so segmentation must be stable: input text is NFC-normalized before any
//! offset is computed, and all offsets are character offsets into the
//! normalized strings.

use std::collections::HashSet;
use std::io::BufRead;

use serde::Deserialize;
use unicode_normalization::UnicodeNormalization;

/// A token: one maximal run of alphanumeric characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    /// Character offset of the first character.
    pub start: usize,
    /// Character offset one past the last character.
    pub end: usize,
    /// Lowercased form of the source run.
    pub norm: String,
    /// Index of the sentence this token belongs to.
    pub sentence_index: usize,
}

/// A sentence span with character offsets and its ordinal position.
///
/// For ordinary sentences the offsets index into the document body. When a
/// document has a non-empty title, sentence 0 is synthetic and its offsets
/// index into the title instead (see [`Document::sentence_text`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sentence {
    pub start: usize,
    pub end: usize,
    pub index: usize,
}

/// An abstract with precomputed sentence and token segmentation.
///
/// The title participates in indexing and matching as a synthetic sentence 0
/// so that entity mentions in titles are searchable; it is never emitted as
/// evidence (titles are not sentences).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    /// The abstract text, NFC-normalized.
    pub body: String,
    pub sentences: Vec<Sentence>,
    pub tokens: Vec<Token>,
    /// True when sentence 0 is the synthetic title sentence.
    has_title_sentence: bool,
}

impl Document {
    /// Build a document from raw fields, normalizing and segmenting the text.
    pub fn new(doc_id: impl Into<String>, title: &str, body: &str) -> Document {
        let title: String = title.nfc().collect();
        let body: String = body.nfc().collect();
        let has_title_sentence = !title.is_empty();

        let mut sentences = Vec::new();
        let mut tokens = Vec::new();

        if has_title_sentence {
            let title_chars = title.chars().count();
            sentences.push(Sentence {
                start: 0,
                end: title_chars,
                index: 0,
            });
            for mut tok in tokenize(&title) {
                tok.sentence_index = 0;
                tokens.push(tok);
            }
        }

        let base = usize::from(has_title_sentence);
        for mut sent in split_sentences(&body) {
            sent.index += base;
            sentences.push(sent);
        }
        let body_sentences = &sentences[base..];
        for mut tok in tokenize(&body) {
            // Sentences are ordered and disjoint; binary search by start offset.
            let idx = match body_sentences.binary_search_by(|s| {
                if tok.start < s.start {
                    std::cmp::Ordering::Greater
                } else if tok.start >= s.end {
                    std::cmp::Ordering::Less
                } else {
                    std::cmp::Ordering::Equal
                }
            }) {
                Ok(i) => i + base,
                // Unreachable for tokenizer output: every alphanumeric run is
                // inside some trimmed sentence span.
                Err(i) => (i + base).min(sentences.len().saturating_sub(1)),
            };
            tok.sentence_index = idx;
            tokens.push(tok);
        }

        Document {
            doc_id: doc_id.into(),
            title,
            body,
            sentences,
            tokens,
            has_title_sentence,
        }
    }

    /// Whether `index` addresses the synthetic title sentence.
    pub fn is_title_sentence(&self, index: usize) -> bool {
        self.has_title_sentence && index == 0
    }

    /// The source text of a sentence (title text for the synthetic title
    /// sentence, body slice otherwise).
    pub fn sentence_text(&self, index: usize) -> Option<&str> {
        let sent = self.sentences.get(index)?;
        let source = if self.is_title_sentence(index) {
            &self.title
        } else {
            &self.body
        };
        Some(char_slice(source, sent.start, sent.end))
    }

    /// Tokens belonging to one sentence, with their positions in `tokens`.
    pub fn sentence_tokens(&self, index: usize) -> impl Iterator<Item = (usize, &Token)> {
        self.tokens
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.sentence_index == index)
    }

    /// Number of tokens in a sentence.
    pub fn sentence_token_count(&self, index: usize) -> usize {
        self.sentence_tokens(index).count()
    }
}

/// Slice a string by character offsets.
pub fn char_slice(text: &str, start: usize, end: usize) -> &str {
    if start >= end {
        return "";
    }
    let mut byte_start = text.len();
    let mut byte_end = text.len();
    for (count, (byte_idx, _)) in text.char_indices().enumerate() {
        if count == start {
            byte_start = byte_idx;
        }
        if count == end {
            byte_end = byte_idx;
            break;
        }
    }
    &text[byte_start..byte_end]
}

/// Split text into tokens: maximal runs of Unicode alphanumeric characters,
/// lowercased. Offsets are character offsets. `sentence_index` is left at 0
/// for the caller to assign.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut run_start: Option<usize> = None;
    let mut run = String::new();
    for (i, ch) in text.chars().enumerate() {
        if ch.is_alphanumeric() {
            if run_start.is_none() {
                run_start = Some(i);
            }
            run.extend(ch.to_lowercase());
        } else if let Some(start) = run_start.take() {
            tokens.push(Token {
                start,
                end: i,
                norm: std::mem::take(&mut run),
                sentence_index: 0,
            });
        }
    }
    if let Some(start) = run_start {
        tokens.push(Token {
            start,
            end: text.chars().count(),
            norm: run,
            sentence_index: 0,
        });
    }
    tokens
}

/// Split text into sentences.
///
/// A boundary falls after `.`, `?`, or `!` when followed by whitespace and
/// then an uppercase letter, or at end of text. A trailing fragment without
/// a terminator becomes a final sentence. Leading and trailing whitespace is
/// excluded from each span. Abbreviations like "e.g. The" over-split; that
/// is an accepted cost of keeping the splitter deterministic.
pub fn split_sentences(text: &str) -> Vec<Sentence> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut boundaries = Vec::new(); // exclusive end offsets of raw segments
    let mut i = 0;
    while i < n {
        let ch = chars[i];
        if ch == '.' || ch == '?' || ch == '!' {
            let mut j = i + 1;
            let mut saw_ws = false;
            while j < n && chars[j].is_whitespace() {
                saw_ws = true;
                j += 1;
            }
            if j == n || (saw_ws && chars[j].is_uppercase()) {
                boundaries.push(i + 1);
                i = j;
                continue;
            }
        }
        i += 1;
    }
    if boundaries.last() != Some(&n) && chars[boundaries.last().copied().unwrap_or(0)..]
        .iter()
        .any(|c| !c.is_whitespace())
    {
        boundaries.push(n);
    }

    let mut sentences = Vec::new();
    let mut seg_start = 0;
    for &seg_end in &boundaries {
        let mut start = seg_start;
        while start < seg_end && chars[start].is_whitespace() {
            start += 1;
        }
        let mut end = seg_end;
        while end > start && chars[end - 1].is_whitespace() {
            end -= 1;
        }
        if start < end {
            sentences.push(Sentence {
                start,
                end,
                index: sentences.len(),
            });
        }
        seg_start = seg_end;
    }
    sentences
}

/// Errors raised while parsing a JSONL corpus. Line numbers are 1-based.
#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("line {0}: malformed JSON")]
    MalformedLine(usize),
    #[error("line {line}: missing field \"{field}\"")]
    MissingField { line: usize, field: &'static str },
    #[error("duplicate document id \"{0}\"")]
    DuplicateId(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// How `parse_corpus` responds to bad lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Any bad line aborts the parse.
    #[default]
    Strict,
    /// Bad lines are skipped and reported alongside the parsed documents.
    Lenient,
}

/// Result of a corpus parse: the documents plus any issues skipped in
/// lenient mode (always empty in strict mode).
#[derive(Debug)]
pub struct ParsedCorpus {
    pub documents: Vec<Document>,
    pub skipped: Vec<CorpusError>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: Option<String>,
    title: Option<String>,
    #[serde(rename = "abstract")]
    abstract_text: Option<String>,
}

/// Parse a UTF-8 JSONL stream of `{id, title, abstract}` objects into
/// documents, preserving input order. Unknown fields are ignored.
pub fn parse_corpus<R: BufRead>(reader: R, mode: ParseMode) -> Result<ParsedCorpus, CorpusError> {
    let mut documents = Vec::new();
    let mut skipped = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();

    for (line_idx, line) in reader.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, line_no, &mut seen_ids) {
            Ok(doc) => documents.push(doc),
            Err(err) => match mode {
                ParseMode::Strict => return Err(err),
                ParseMode::Lenient => skipped.push(err),
            },
        }
    }
    Ok(ParsedCorpus { documents, skipped })
}

fn parse_line(
    line: &str,
    line_no: usize,
    seen_ids: &mut HashSet<String>,
) -> Result<Document, CorpusError> {
    let raw: RawRecord =
        serde_json::from_str(line).map_err(|_| CorpusError::MalformedLine(line_no))?;
    let id = raw.id.ok_or(CorpusError::MissingField {
        line: line_no,
        field: "id",
    })?;
    let title = raw.title.ok_or(CorpusError::MissingField {
        line: line_no,
        field: "title",
    })?;
    let abstract_text = raw.abstract_text.ok_or(CorpusError::MissingField {
        line: line_no,
        field: "abstract",
    })?;
    if id.is_empty() {
        return Err(CorpusError::MissingField {
            line: line_no,
            field: "id",
        });
    }
    if !seen_ids.insert(id.clone()) {
        return Err(CorpusError::DuplicateId(id));
    }
    Ok(Document::new(id, &title, &abstract_text))
}
