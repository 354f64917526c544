//! The embedding capability consumed by the concept checker, plus
//! deterministic stub implementations for tests and offline runs.

use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding backend error: {0}")]
    Backend(String),
    #[error("embedding contract violation: {0}")]
    Contract(String),
    #[error("{0}")]
    Precondition(String),
}

/// Anything that can map a batch of texts to equal-dimension real vectors,
/// in input order.
pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

/// One-hot-per-distinct-text embedder: identical texts map to identical unit
/// vectors, distinct texts to orthogonal ones. The dimension is the number of
/// distinct texts in the batch.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityEmbedder;

impl Embedder for IdentityEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::Precondition("texts must be non-empty".into()));
        }
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for t in texts {
            let next = index.len();
            index.entry(t.as_str()).or_insert(next);
        }
        let dim = index.len();
        Ok(texts
            .iter()
            .map(|t| {
                let mut v = vec![0.0; dim];
                v[index[t.as_str()]] = 1.0;
                v
            })
            .collect())
    }
}

/// Deterministic pseudo-random unit vectors seeded by a stable hash of the
/// text. Identical texts embed identically across runs and processes;
/// distinct texts are nearly orthogonal at reasonable dimensions.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self { dim: 64 }
    }
}

/// FNV-1a; stable across processes, unlike the std hasher.
pub(crate) fn stable_hash64(text: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in text.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

impl Embedder for HashEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        use rand::{Rng, SeedableRng};
        if texts.is_empty() {
            return Err(EmbedError::Precondition("texts must be non-empty".into()));
        }
        Ok(texts
            .iter()
            .map(|t| {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(stable_hash64(t));
                let mut v: Vec<f64> = (0..self.dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= norm);
                }
                v
            })
            .collect())
    }
}

/// Fixed text -> vector table; unknown texts are a backend error. Handy for
/// pinning similarities in tests.
#[derive(Debug, Clone, Default)]
pub struct TableEmbedder {
    table: BTreeMap<String, Vec<f64>>,
}

impl TableEmbedder {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<f64>)>,
        S: Into<String>,
    {
        Self {
            table: entries.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

impl Embedder for TableEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::Precondition("texts must be non-empty".into()));
        }
        texts
            .iter()
            .map(|t| {
                self.table
                    .get(t)
                    .cloned()
                    .ok_or_else(|| EmbedError::Backend(format!("no table vector for {t:?}")))
            })
            .collect()
    }
}

/// An embedder that always fails; for error-path tests.
#[derive(Debug, Clone, Copy, Default)]
pub struct FailingEmbedder;

impl Embedder for FailingEmbedder {
    fn embed(&self, _texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Err(EmbedError::Backend("scripted failure".into()))
    }
}
