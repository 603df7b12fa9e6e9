//! Deterministic text embedders.
//!
//! Graph nodes carry sentence-level vectors. Two backends satisfy the
//! [`Embedder`] contract: [`HashingEmbedder`], a signed feature-hashing bag of
//! words that needs no model files, and [`ExternalEmbedder`], which serves
//! vectors computed offline by any sentence encoder.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_DIM: usize = 768;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: vector has dimension {found}, expected {expected}")]
    DimInconsistent { line: usize, expected: usize, found: usize },
    #[error("line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("no stored vector for text {0:?}")]
    MissingText(String),
    #[error("embedding dimension must be positive")]
    ZeroDim,
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError>;
}

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Seeded 64-bit token hash: FNV-1a over the seed and the UTF-8 bytes,
/// finished with the splitmix64 mixer. Stable across platforms.
pub fn token_hash(token: &str, seed: u64) -> u64 {
    let mut h = FNV_OFFSET;
    for byte in seed.to_le_bytes().iter().chain(token.as_bytes()) {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashingEmbedder {
    dim: usize,
    seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    idf: Option<HashMap<String, f64>>,
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder { dim: DEFAULT_DIM, seed: 0, idf: None }
    }
}

impl HashingEmbedder {
    pub fn new(dim: usize, seed: u64) -> Result<Self, EmbedError> {
        if dim == 0 {
            return Err(EmbedError::ZeroDim);
        }
        Ok(HashingEmbedder { dim, seed, idf: None })
    }

    /// Weights each token by the given table; unknown tokens keep weight 1.
    pub fn with_idf(mut self, idf: HashMap<String, f64>) -> Self {
        self.idf = Some(idf);
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn embed_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for token in tokens {
            let token = token.as_ref();
            let h = token_hash(token, self.seed);
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            let weight = self
                .idf
                .as_ref()
                .and_then(|idf| idf.get(token).copied())
                .unwrap_or(1.0);
            v[bucket] += sign * weight;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

impl Embedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        Ok(self.embed_tokens(&tokenize(text)))
    }
}

/// Lookup table of precomputed vectors, keyed by exact text or by the hex
/// SHA-256 of the text's UTF-8 bytes.
#[derive(Debug, Clone, Default)]
pub struct ExternalEmbedder {
    dim: usize,
    by_text: HashMap<String, Vec<f64>>,
    by_hash: HashMap<String, Vec<f64>>,
}

#[derive(Deserialize)]
struct ExternalRecord {
    text: Option<String>,
    hash: Option<String>,
    vec: Vec<f64>,
}

pub fn text_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

impl ExternalEmbedder {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbedError> {
        let path = path.as_ref();
        let content = fs::read_to_string(path).map_err(|source| EmbedError::UnreadableFile {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&content)
    }

    /// Parses line-delimited `{"text": ..., "vec": [...]}` or
    /// `{"hash": "<sha256 hex>", "vec": [...]}` records.
    pub fn parse(content: &str) -> Result<Self, EmbedError> {
        let mut out = ExternalEmbedder::default();
        for (n, raw) in content.lines().enumerate() {
            let line = n + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let record: ExternalRecord = serde_json::from_str(raw).map_err(|e| EmbedError::MalformedRecord {
                line,
                message: e.to_string(),
            })?;
            if record.vec.is_empty() {
                return Err(EmbedError::MalformedRecord { line, message: "empty vector".into() });
            }
            if record.vec.iter().any(|x| !x.is_finite()) {
                return Err(EmbedError::MalformedRecord { line, message: "non-finite value".into() });
            }
            if out.dim == 0 {
                out.dim = record.vec.len();
            } else if record.vec.len() != out.dim {
                return Err(EmbedError::DimInconsistent {
                    line,
                    expected: out.dim,
                    found: record.vec.len(),
                });
            }
            match (record.text, record.hash) {
                (Some(text), _) => {
                    out.by_text.insert(text, record.vec);
                }
                (None, Some(hash)) => {
                    out.by_hash.insert(hash.to_ascii_lowercase(), record.vec);
                }
                (None, None) => {
                    return Err(EmbedError::MalformedRecord {
                        line,
                        message: "record needs \"text\" or \"hash\"".into(),
                    })
                }
            }
        }
        if out.dim == 0 {
            return Err(EmbedError::ZeroDim);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.by_text.len() + self.by_hash.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Embedder for ExternalEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        if let Some(v) = self.by_text.get(text) {
            return Ok(v.clone());
        }
        if !self.by_hash.is_empty() {
            if let Some(v) = self.by_hash.get(&text_digest(text)) {
                return Ok(v.clone());
            }
        }
        Err(EmbedError::MissingText(text.to_string()))
    }
}

/// Serializable description of an embedder, stored in configs and checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbedderSpec {
    Hashing { dim: usize, seed: u64 },
    External { path: PathBuf },
}

impl Default for EmbedderSpec {
    fn default() -> Self {
        EmbedderSpec::Hashing { dim: DEFAULT_DIM, seed: 0 }
    }
}

impl EmbedderSpec {
    pub fn build(&self) -> Result<Box<dyn Embedder>, EmbedError> {
        Ok(match self {
            EmbedderSpec::Hashing { dim, seed } => Box::new(HashingEmbedder::new(*dim, *seed)?),
            EmbedderSpec::External { path } => Box::new(ExternalEmbedder::load(path)?),
        })
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
