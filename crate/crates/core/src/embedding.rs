//! Entity serialization and embedding providers.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{EntityRecord, EntityTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding contains non-finite values")]
    NonFinite,
    #[error("cannot embed empty text")]
    EmptyText,
}

/// A finite, fixed-length embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, EmbedError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn into_values(self) -> Vec<f32> {
        self.0
    }
}

pub(crate) fn squared_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = f64::from(*x) - f64::from(*y);
            d * d
        })
        .sum()
}

/// Euclidean distance between two equal-length vectors.
pub fn euclidean(a: &EmbeddingVector, b: &EmbeddingVector) -> f64 {
    squared_distance(&a.0, &b.0).sqrt()
}

/// Renders a record as `"name1: value1; name2: value2"` following `schema`.
pub fn serialize_entity(record: &EntityRecord, schema: &[String]) -> String {
    schema
        .iter()
        .map(|name| format!("{name}: {}", record.value(name).unwrap_or("")))
        .collect::<Vec<_>>()
        .join("; ")
}

/// A source of text embeddings with a fixed output dimension.
pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier; embeddings from providers with different ids are
    /// not comparable.
    fn id(&self) -> String;
    fn model(&self) -> String;
    fn dimension(&self) -> usize;
    fn embed_raw(&self, text: &str) -> Result<Vec<f32>, EmbedError>;
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for &P {
    fn id(&self) -> String {
        (**self).id()
    }
    fn model(&self) -> String {
        (**self).model()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed_raw(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        (**self).embed_raw(text)
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Box<P> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn model(&self) -> String {
        (**self).model()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed_raw(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        (**self).embed_raw(text)
    }
}

/// Embeds `text`, checking the provider honored its declared dimension.
pub fn embed<P: EmbeddingProvider + ?Sized>(
    text: &str,
    provider: &P,
) -> Result<EmbeddingVector, EmbedError> {
    if text.is_empty() {
        return Err(EmbedError::EmptyText);
    }
    let values = provider.embed_raw(text)?;
    if values.len() != provider.dimension() {
        return Err(EmbedError::DimensionMismatch {
            expected: provider.dimension(),
            actual: values.len(),
        });
    }
    EmbeddingVector::new(values)
}

/// Embeds every row of `table`, keyed by entity id, in table order.
pub fn embed_table<P: EmbeddingProvider + ?Sized>(
    table: &EntityTable,
    provider: &P,
) -> Result<Vec<(String, EmbeddingVector)>, EmbedError> {
    table
        .records()
        .iter()
        .map(|r| Ok((r.id().to_string(), embed(&serialize_entity(r, table.schema()), provider)?)))
        .collect()
}

/// Network-free provider: the SHA-256 of (seed, text) seeds a ChaCha stream
/// that yields `dimension` coordinates in [-1, 1].
#[derive(Debug, Clone)]
pub struct LocalHashEmbedder {
    dimension: usize,
    seed: u64,
}

impl LocalHashEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        assert!(dimension > 0, "dimension must be positive");
        Self { dimension, seed }
    }
}

impl EmbeddingProvider for LocalHashEmbedder {
    fn id(&self) -> String {
        format!("local-hash/seed={}/dim={}", self.seed, self.dimension)
    }

    fn model(&self) -> String {
        "local-hash".into()
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(text.as_bytes());
        let digest: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);
        Ok((0..self.dimension)
            .map(|_| rng.random_range(-1.0f32..=1.0))
            .collect())
    }
}

/// Memoizes another provider by (provider id, text hash), optionally
/// persisting vectors under a directory so restarts stay warm.
pub struct CachingProvider<P> {
    inner: P,
    memory: Mutex<HashMap<String, Vec<f32>>>,
    dir: Option<PathBuf>,
    misses: AtomicUsize,
}

impl<P: EmbeddingProvider> CachingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            memory: Mutex::new(HashMap::new()),
            dir: None,
            misses: AtomicUsize::new(0),
        }
    }

    pub fn with_dir(inner: P, dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            ..Self::new(inner)
        }
    }

    /// Number of requests forwarded to the wrapped provider.
    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    fn key(&self, text: &str) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.inner.id().as_bytes());
        hasher.update([0u8]);
        hasher.update(text.as_bytes());
        hex::encode(hasher.finalize())
    }

    fn read_disk(&self, key: &str) -> Option<Vec<f32>> {
        let path = self.dir.as_ref()?.join(format!("{key}.f32"));
        let bytes = fs::read(path).ok()?;
        if bytes.len() != self.inner.dimension() * 4 {
            return None;
        }
        Some(
            bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        )
    }

    fn write_disk(&self, key: &str, values: &[f32]) {
        let Some(dir) = &self.dir else { return };
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        // A failed write only costs a future cache miss.
        let _ = fs::create_dir_all(dir).and_then(|_| {
            let tmp = dir.join(format!(".{key}.{}.tmp", std::process::id()));
            fs::write(&tmp, &bytes)?;
            fs::rename(&tmp, dir.join(format!("{key}.f32")))
        });
    }
}

impl<P: EmbeddingProvider> EmbeddingProvider for CachingProvider<P> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn model(&self) -> String {
        self.inner.model()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let key = self.key(text);
        if let Some(hit) = self.memory.lock().expect("embedding cache poisoned").get(&key) {
            return Ok(hit.clone());
        }
        if let Some(hit) = self.read_disk(&key) {
            self.memory
                .lock()
                .expect("embedding cache poisoned")
                .insert(key, hit.clone());
            return Ok(hit);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let values = self.inner.embed_raw(text)?;
        if values.len() == self.inner.dimension() {
            let mut memory = self.memory.lock().expect("embedding cache poisoned");
            self.write_disk(&key, &values);
            memory.insert(key, values.clone());
        }
        Ok(values)
    }
}
