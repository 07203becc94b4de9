//! Exact nearest-neighbor index over target-table embeddings.
//!
//! Queries scan every entry, rank by Euclidean distance with ties broken by
//! ascending entity id, and return one page `[offset, offset + k)` of the
//! full ranking. Paging through offsets `0, k, 2k, ...` therefore reproduces
//! the complete ordering with no gaps or repeats.
//!
//! On-disk layout (all integers little-endian):
//!
//! ```text
//! b"RELMIDX1"
//! u32 dimension
//! u32 entry count
//! per entry: u16 id length, id bytes (UTF-8), dimension x f32
//! ```

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::embedding::{squared_distance, EmbeddingVector};

pub const INDEX_MAGIC: &[u8; 8] = b"RELMIDX1";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot build an index from zero entries")]
    EmptyInput,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("duplicate entity id `{0}`")]
    DuplicateId(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("entity id `{0}` is longer than 65535 bytes")]
    IdTooLong(String),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt index file: {0}")]
    CorruptIndex(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub entity_id: String,
    pub distance: f64,
}

/// One page of the distance ranking for a probe.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateBatch {
    pub batch_index: usize,
    pub candidates: Vec<Candidate>,
}

impl CandidateBatch {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| c.entity_id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dimension: usize,
    ids: Vec<String>,
    vectors: Vec<EmbeddingVector>,
}

fn rank_order(a: &(f64, &str), b: &(f64, &str)) -> Ordering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1))
}

impl VectorIndex {
    pub fn build(pairs: Vec<(String, EmbeddingVector)>) -> Result<Self, IndexError> {
        let dimension = pairs.first().ok_or(IndexError::EmptyInput)?.1.dimension();
        if dimension == 0 {
            return Err(IndexError::DimensionMismatch {
                expected: 1,
                actual: 0,
            });
        }
        let mut seen = HashSet::with_capacity(pairs.len());
        let mut ids = Vec::with_capacity(pairs.len());
        let mut vectors = Vec::with_capacity(pairs.len());
        for (id, vector) in pairs {
            if vector.dimension() != dimension {
                return Err(IndexError::DimensionMismatch {
                    expected: dimension,
                    actual: vector.dimension(),
                });
            }
            if !seen.insert(id.clone()) {
                return Err(IndexError::DuplicateId(id));
            }
            ids.push(id);
            vectors.push(vector);
        }
        Ok(Self {
            dimension,
            ids,
            vectors,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &EmbeddingVector)> {
        self.ids.iter().map(String::as_str).zip(&self.vectors)
    }

    pub fn vector(&self, id: &str) -> Option<&EmbeddingVector> {
        self.ids.iter().position(|i| i == id).map(|p| &self.vectors[p])
    }

    /// Returns ranks `[offset, offset + k)` of the distance ordering.
    pub fn query_topk(
        &self,
        probe: &EmbeddingVector,
        k: usize,
        offset: usize,
    ) -> Result<CandidateBatch, IndexError> {
        if probe.dimension() != self.dimension {
            return Err(IndexError::DimensionMismatch {
                expected: self.dimension,
                actual: probe.dimension(),
            });
        }
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        let mut scored: Vec<(f64, &str)> = self
            .vectors
            .iter()
            .zip(&self.ids)
            .map(|(v, id)| (squared_distance(v.values(), probe.values()), id.as_str()))
            .collect();
        let end = offset.saturating_add(k).min(scored.len());
        if offset >= scored.len() {
            scored.clear();
        } else {
            if end < scored.len() {
                scored.select_nth_unstable_by(end, rank_order);
                scored.truncate(end);
            }
            scored.sort_unstable_by(rank_order);
        }
        let candidates = scored
            .into_iter()
            .skip(offset)
            .map(|(sq, id)| Candidate {
                entity_id: id.to_string(),
                distance: sq.sqrt(),
            })
            .collect();
        Ok(CandidateBatch {
            batch_index: offset / k,
            candidates,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, IndexError> {
        let mut out = Vec::with_capacity(16 + self.len() * (self.dimension * 4 + 8));
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&(self.dimension as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for (id, vector) in self.entries() {
            let len =
                u16::try_from(id.len()).map_err(|_| IndexError::IdTooLong(id.to_string()))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(id.as_bytes());
            for v in vector.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, IndexError> {
        let mut reader = ByteReader { bytes, pos: 0 };
        if reader.take(8)? != INDEX_MAGIC {
            return Err(IndexError::CorruptIndex("bad magic".into()));
        }
        let dimension = reader.u32()? as usize;
        let count = reader.u32()? as usize;
        if dimension == 0 {
            return Err(IndexError::CorruptIndex("zero dimension".into()));
        }
        if count == 0 {
            return Err(IndexError::CorruptIndex("zero entries".into()));
        }
        let mut pairs = Vec::with_capacity(count.min(bytes.len()));
        for _ in 0..count {
            let len = reader.u16()? as usize;
            let id = std::str::from_utf8(reader.take(len)?)
                .map_err(|_| IndexError::CorruptIndex("entity id is not UTF-8".into()))?
                .to_string();
            let raw = reader.take(dimension * 4)?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let vector = EmbeddingVector::new(values)
                .map_err(|_| IndexError::CorruptIndex(format!("non-finite vector for `{id}`")))?;
            pairs.push((id, vector));
        }
        if reader.pos != bytes.len() {
            return Err(IndexError::CorruptIndex("trailing bytes".into()));
        }
        Self::build(pairs).map_err(|e| IndexError::CorruptIndex(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let bytes = self.to_bytes()?;
        crate::atomic_write(path, &bytes).map_err(|source| IndexError::IoFailure {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let bytes = fs::read(path).map_err(|source| IndexError::IoFailure {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|end| *end <= self.bytes.len())
            .ok_or_else(|| IndexError::CorruptIndex("truncated".into()))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16, IndexError> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
