//! Content-addressed verdict cache.
//!
//! Keys are the SHA-256 of the prompt bytes and the model hint. Because
//! prompts are deterministic, a key fully determines the classification.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::prompt::ClassificationRequest;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn for_request(request: &ClassificationRequest) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(request.prompt.as_bytes());
        hasher.update([0u8]);
        hasher.update(request.model_hint.as_bytes());
        Self(hex::encode(hasher.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedDecision {
    pub target_id: String,
    pub decision: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedClassification {
    pub model_hint: String,
    pub rationale: String,
    pub decisions: Vec<CachedDecision>,
}

pub trait VerdictCache: Send + Sync {
    fn get(&self, key: &CacheKey) -> Option<CachedClassification>;
    fn put(&self, key: &CacheKey, entry: &CachedClassification);
    /// Keeps an unparseable response around for inspection.
    fn record_failure(&self, key: &CacheKey, raw_text: &str);
}

#[derive(Debug, Default)]
pub struct MemoryCache {
    entries: Mutex<HashMap<CacheKey, CachedClassification>>,
    failures: Mutex<Vec<(CacheKey, String)>>,
}

impl MemoryCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn failures(&self) -> Vec<(CacheKey, String)> {
        self.failures.lock().expect("cache poisoned").clone()
    }
}

impl VerdictCache for MemoryCache {
    fn get(&self, key: &CacheKey) -> Option<CachedClassification> {
        self.entries.lock().expect("cache poisoned").get(key).cloned()
    }

    fn put(&self, key: &CacheKey, entry: &CachedClassification) {
        self.entries
            .lock()
            .expect("cache poisoned")
            .insert(key.clone(), entry.clone());
    }

    fn record_failure(&self, key: &CacheKey, raw_text: &str) {
        self.failures
            .lock()
            .expect("cache poisoned")
            .push((key.clone(), raw_text.to_string()));
    }
}

/// One JSON file per key under `root/verdicts/`; unparseable responses go to
/// `root/failed/`.
#[derive(Debug)]
pub struct DirCache {
    root: PathBuf,
    write_lock: Mutex<()>,
}

impl DirCache {
    pub fn open(root: impl Into<PathBuf>) -> std::io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("verdicts"))?;
        fs::create_dir_all(root.join("failed"))?;
        Ok(Self {
            root,
            write_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry_path(&self, key: &CacheKey) -> PathBuf {
        self.root.join("verdicts").join(format!("{}.json", key.as_str()))
    }
}

impl VerdictCache for DirCache {
    fn get(&self, key: &CacheKey) -> Option<CachedClassification> {
        let text = fs::read_to_string(self.entry_path(key)).ok()?;
        serde_json::from_str(&text).ok()
    }

    fn put(&self, key: &CacheKey, entry: &CachedClassification) {
        let _guard = self.write_lock.lock().expect("cache poisoned");
        let json = serde_json::to_vec_pretty(entry).expect("cache entry serializes");
        // Failing to persist only costs a later cache miss.
        let _ = crate::atomic_write(&self.entry_path(key), &json);
    }

    fn record_failure(&self, key: &CacheKey, raw_text: &str) {
        let _guard = self.write_lock.lock().expect("cache poisoned");
        let path = self.root.join("failed").join(format!("{}.txt", key.as_str()));
        let _ = crate::atomic_write(&path, raw_text.as_bytes());
    }
}
