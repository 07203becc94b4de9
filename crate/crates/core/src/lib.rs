//! Relation-based entity matching.
//!
//! Instead of asking whether two records are "the same", the pipeline asks,
//! for each analyst-defined relation, which retrieved target entities stand
//! in that relation to a source entity, and then resolves one best match per
//! source by walking the relations in priority order.
//!
//! * [`model`]: tables, records, relation catalogs and verdicts
//! * [`embedding`] and [`index`]: blocking via exact nearest neighbors
//! * [`prompt`], [`classifier`] and [`cache`]: LLM classification with the
//!   adaptive batch-retrieval loop
//! * [`cascade`] and [`report`]: post-processing into resolved matches

pub mod cache;
pub mod cascade;
pub mod classifier;
pub mod embedding;
pub mod index;
pub mod model;
pub mod prompt;
pub mod remote;
pub mod report;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

pub use cache::{CacheKey, CachedClassification, CachedDecision, DirCache, MemoryCache, VerdictCache};
pub use cascade::{resolve, select_within_rank, CascadeError, ConfirmedTarget};
pub use classifier::{
    classify_batch, match_all, match_relation, naive_match, Backend, BackendError, Classifier,
    ClassifyError, CountingBackend, MatchContext, MatchRun, PolicyError, RetrievalPolicy, RetryPolicy,
    SourceOutcome, TargetLookup,
};
pub use embedding::{
    embed, embed_table, serialize_entity, CachingProvider, EmbedError, EmbeddingProvider, EmbeddingVector,
    LocalHashEmbedder,
};
pub use index::{Candidate, CandidateBatch, IndexError, VectorIndex};
pub use model::{
    load_catalog, load_table, EntityRecord, EntityTable, MatchStatus, ModelError, Multiplicity,
    Provenance, RelationCatalog, RelationExample, RelationSpec, RelationVerdict, ResolvedMatch,
};
pub use prompt::{build_prompt, parse_response, BackendResponse, ClassificationRequest, ParseError};
pub use report::{MatchReport, RunInfo};

/// Writes `bytes` to a sibling temp file and renames it over `path`, so
/// readers never observe a partially written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| std::io::Error::other("path has no file name"))?
        .to_string_lossy();
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    let tmp = dir.join(format!(
        ".{name}.{}.{}.tmp",
        std::process::id(),
        COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let mut file = fs::File::create(&tmp)?;
    file.write_all(bytes)?;
    file.sync_all()?;
    drop(file);
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}
