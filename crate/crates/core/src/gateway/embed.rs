//! Embedding vectors and the offline hashed bag-of-tokens embedder.

use serde::{Deserialize, Serialize};

use super::{Embedder, GatewayError};

pub const HASH_EMBED_DIM: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// A unit-norm vector. Construct with [`EmbeddingVector::normalized`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Scales `raw` to unit length; an all-zero vector becomes the unit vector on index 0.
    pub fn normalized(mut raw: Vec<f64>) -> Self {
        assert!(!raw.is_empty(), "embedding dimension must be positive");
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            raw.iter_mut().for_each(|x| *x /= norm);
        } else {
            raw.iter_mut().for_each(|x| *x = 0.0);
            raw[0] = 1.0;
        }
        EmbeddingVector(raw)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Dot product; equals cosine similarity since both sides are unit-norm.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        assert_eq!(self.0.len(), other.0.len(), "dimension mismatch");
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Lowercased maximal alphanumeric runs.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

pub fn token_bucket(token: &str) -> usize {
    (fnv1a64(token.as_bytes()) % HASH_EMBED_DIM as u64) as usize
}

pub fn hash_embed(text: &str) -> EmbeddingVector {
    let mut counts = vec![0.0; HASH_EMBED_DIM];
    for t in tokens(text) {
        counts[token_bucket(&t)] += 1.0;
    }
    EmbeddingVector::normalized(counts)
}

#[derive(Debug, Default, Clone, Copy)]
pub struct HashEmbedder;

impl HashEmbedder {
    pub const ID: &'static str = "hash-fnv1a-256";
}

impl Embedder for HashEmbedder {
    fn id(&self) -> &str {
        Self::ID
    }

    fn dimension(&self) -> usize {
        HASH_EMBED_DIM
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::EmptyInput);
        }
        Ok(texts.iter().map(|t| hash_embed(t)).collect())
    }
}
