//! Engine configuration: a flat `key = value` text file plus programmatic
//! overrides. Relative paths resolve against the config file's directory so
//! a config can ship next to its data.

use std::path::{Path, PathBuf};

use crate::retrieval::Bm25Params;

use super::EngineError;

/// Everything the engine needs at startup. Paths must exist by the time
/// [`validate`](EngineConfig::validate) runs.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub index_path: PathBuf,
    pub synonyms_path: PathBuf,
    pub triggers_path: PathBuf,
    pub embeddings_path: PathBuf,
    pub stopwords_path: PathBuf,
    pub bm25: Bm25Params,
    /// Similarity threshold for skeleton extraction, in (0, 1].
    pub tau: f64,
    pub max_similar_per_sentence: usize,
    /// Summary token budget.
    pub budget: usize,
    pub compression_enabled: bool,
    /// Result depth.
    pub k: usize,
}

impl Default for EngineConfig {
    fn default() -> EngineConfig {
        EngineConfig {
            index_path: PathBuf::new(),
            synonyms_path: PathBuf::new(),
            triggers_path: PathBuf::new(),
            embeddings_path: PathBuf::new(),
            stopwords_path: PathBuf::new(),
            bm25: Bm25Params::default(),
            tau: 0.6,
            max_similar_per_sentence: 3,
            budget: 60,
            compression_enabled: true,
            k: 10,
        }
    }
}

impl EngineConfig {
    /// Parse a config file. Blank lines and `#` comments are skipped;
    /// every other line must be `key = value`. Unknown keys are errors so
    /// typos fail loudly.
    pub fn from_file(path: &Path) -> Result<EngineConfig, EngineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EngineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        EngineConfig::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<EngineConfig, EngineError> {
        let mut config = EngineConfig::default();
        let resolve = |value: &str| -> PathBuf {
            let p = PathBuf::from(value);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| EngineError::Config(format!("line {line_no}: expected key = value")))?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                EngineError::Config(format!("line {line_no}: invalid {what} value \"{value}\""))
            };
            match key {
                "index" => config.index_path = resolve(value),
                "synonyms" => config.synonyms_path = resolve(value),
                "triggers" => config.triggers_path = resolve(value),
                "embeddings" => config.embeddings_path = resolve(value),
                "stopwords" => config.stopwords_path = resolve(value),
                "k1" => config.bm25.k1 = value.parse().map_err(|_| bad("k1"))?,
                "b" => config.bm25.b = value.parse().map_err(|_| bad("b"))?,
                "tau" => config.tau = value.parse().map_err(|_| bad("tau"))?,
                "max_similar_per_sentence" => {
                    config.max_similar_per_sentence =
                        value.parse().map_err(|_| bad("max_similar_per_sentence"))?
                }
                "budget" => config.budget = value.parse().map_err(|_| bad("budget"))?,
                "compression" => {
                    config.compression_enabled = value.parse().map_err(|_| bad("compression"))?
                }
                "k" => config.k = value.parse().map_err(|_| bad("k"))?,
                other => {
                    return Err(EngineError::Config(format!(
                        "line {line_no}: unknown key \"{other}\""
                    )))
                }
            }
        }
        Ok(config)
    }

    /// Check value ranges and that every referenced file exists.
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.k < 1 {
            return Err(EngineError::Config("k must be >= 1".into()));
        }
        if self.budget < 1 {
            return Err(EngineError::Config("budget must be >= 1".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(EngineError::Config("tau must be in (0, 1]".into()));
        }
        if self.bm25.k1 < 0.0 {
            return Err(EngineError::Config("k1 must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.bm25.b) {
            return Err(EngineError::Config("b must be in [0, 1]".into()));
        }
        for (name, path) in [
            ("index", &self.index_path),
            ("synonyms", &self.synonyms_path),
            ("triggers", &self.triggers_path),
            ("embeddings", &self.embeddings_path),
            ("stopwords", &self.stopwords_path),
        ] {
            if !path.is_file() {
                return Err(EngineError::Config(format!(
                    "{name} file not found: {}",
                    path.display()
                )));
            }
        }
        Ok(())
    }
}
