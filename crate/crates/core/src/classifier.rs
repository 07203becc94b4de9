//! LLM-backed relation classification and the adaptive retrieval loop.
//!
//! For every (source entity, relation) pair the loop asks the backend about
//! one batch of `k` nearest targets at a time. After each batch it looks at
//! the share of candidates confirmed for that relation; the next batch is
//! fetched only while that share stays at or above the continuation
//! threshold, the index still has unseen entries and the batch cap is not
//! reached. Batches come from one shared cursor per source entity, so the
//! relations of a source never trigger more than one retrieval per batch.

use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::cache::{CacheKey, CachedClassification, CachedDecision, VerdictCache};
use crate::embedding::{embed, serialize_entity, EmbeddingProvider, EmbeddingVector};
use crate::index::{Candidate, CandidateBatch, IndexError, VectorIndex};
use crate::model::{EntityRecord, EntityTable, Provenance, RelationCatalog, RelationSpec, RelationVerdict};
use crate::prompt::{
    build_naive_prompt, build_prompt, parse_response, BackendResponse, ClassificationRequest,
    ParseError,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    /// Network-level trouble; worth retrying.
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend rejected the request: {0}")]
    Fatal(String),
}

/// A language model (or stand-in) that answers classification prompts.
pub trait Backend: Send + Sync {
    /// Model name; part of every cache key.
    fn model_hint(&self) -> String;
    fn complete(&self, request: &ClassificationRequest) -> Result<BackendResponse, BackendError>;
}

impl<B: Backend + ?Sized> Backend for &B {
    fn model_hint(&self) -> String {
        (**self).model_hint()
    }
    fn complete(&self, request: &ClassificationRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn model_hint(&self) -> String {
        (**self).model_hint()
    }
    fn complete(&self, request: &ClassificationRequest) -> Result<BackendResponse, BackendError> {
        (**self).complete(request)
    }
}

/// Counts calls that reach the wrapped backend.
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicUsize,
}

impl<B> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: Backend> Backend for CountingBackend<B> {
    fn model_hint(&self) -> String {
        self.inner.model_hint()
    }

    fn complete(&self, request: &ClassificationRequest) -> Result<BackendResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClassifyError {
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    BackendUnavailable { attempts: u32, message: String },
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Sends requests through the verdict cache to a backend.
#[derive(Clone, Copy)]
pub struct Classifier<'a> {
    pub backend: &'a dyn Backend,
    pub cache: &'a dyn VerdictCache,
    pub retry: RetryPolicy,
}

impl<'a> Classifier<'a> {
    pub fn new(backend: &'a dyn Backend, cache: &'a dyn VerdictCache) -> Self {
        Self {
            backend,
            cache,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn model_hint(&self) -> String {
        self.backend.model_hint()
    }

    pub fn classify_batch(
        &self,
        request: &ClassificationRequest,
    ) -> Result<Vec<RelationVerdict>, ClassifyError> {
        classify_batch(request, self.backend, self.cache, self.retry)
    }
}

fn complete_with_retry(
    request: &ClassificationRequest,
    backend: &dyn Backend,
    retry: RetryPolicy,
) -> Result<BackendResponse, ClassifyError> {
    let attempts = retry.max_attempts.max(1);
    let mut backoff = retry.initial_backoff;
    let mut attempt = 0;
    loop {
        attempt += 1;
        match backend.complete(request) {
            Ok(response) => return Ok(response),
            Err(BackendError::Transport(_)) if attempt < attempts => {
                thread::sleep(backoff);
                backoff = backoff.saturating_mul(2);
            }
            Err(BackendError::Transport(message) | BackendError::Fatal(message)) => {
                return Err(ClassifyError::BackendUnavailable {
                    attempts: attempt,
                    message,
                })
            }
        }
    }
}

/// Classifies one prompt, consulting the cache first.
pub fn classify_batch(
    request: &ClassificationRequest,
    backend: &dyn Backend,
    cache: &dyn VerdictCache,
    retry: RetryPolicy,
) -> Result<Vec<RelationVerdict>, ClassifyError> {
    let key = CacheKey::for_request(request);
    if let Some(hit) = cache.get(&key) {
        if let Some(verdicts) = verdicts_from_cache(&hit, request) {
            return Ok(verdicts);
        }
    }
    let response = complete_with_retry(request, backend, retry)?;
    match parse_response(&response, request) {
        Ok(verdicts) => {
            let entry = CachedClassification {
                model_hint: request.model_hint.clone(),
                rationale: verdicts.first().map(|v| v.rationale.clone()).unwrap_or_default(),
                decisions: verdicts
                    .iter()
                    .map(|v| CachedDecision {
                        target_id: v.target_id.clone(),
                        decision: v.decision,
                    })
                    .collect(),
            };
            cache.put(&key, &entry);
            Ok(verdicts)
        }
        Err(err) => {
            cache.record_failure(&key, &response.raw_text);
            Err(err.into())
        }
    }
}

fn verdicts_from_cache(
    hit: &CachedClassification,
    request: &ClassificationRequest,
) -> Option<Vec<RelationVerdict>> {
    if hit.decisions.len() != request.candidate_ids.len() {
        return None;
    }
    hit.decisions
        .iter()
        .zip(&request.candidate_ids)
        .map(|(d, id)| {
            (d.target_id == *id).then(|| RelationVerdict {
                relation_id: request.relation_id.clone(),
                source_id: request.source_id.clone(),
                target_id: id.clone(),
                decision: d.decision,
                rationale: hit.rationale.clone(),
                provenance: Provenance::Cache,
            })
        })
        .collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("continuation threshold must lie in [0, 1], got {0}")]
    Threshold(f64),
    #[error("max batches must be at least 1")]
    ZeroMaxBatches,
}

/// How many candidates to fetch per round and when to keep going.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalPolicy {
    pub k: usize,
    pub continuation_threshold: f64,
    pub max_batches: usize,
}

impl Default for RetrievalPolicy {
    fn default() -> Self {
        Self {
            k: 10,
            continuation_threshold: 0.30,
            max_batches: 5,
        }
    }
}

impl RetrievalPolicy {
    pub fn new(k: usize, continuation_threshold: f64, max_batches: usize) -> Result<Self, PolicyError> {
        let policy = Self {
            k,
            continuation_threshold,
            max_batches,
        };
        policy.validate()?;
        Ok(policy)
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.k == 0 {
            return Err(PolicyError::ZeroK);
        }
        if !(0.0..=1.0).contains(&self.continuation_threshold) {
            return Err(PolicyError::Threshold(self.continuation_threshold));
        }
        if self.max_batches == 0 {
            return Err(PolicyError::ZeroMaxBatches);
        }
        Ok(())
    }

    /// Whether a batch with `confirmed` of `size` positives earns another batch.
    pub fn continues(&self, confirmed: usize, size: usize) -> bool {
        size > 0 && confirmed as f64 / size as f64 >= self.continuation_threshold
    }
}

/// Lazily pages through the neighbor ranking of one probe, memoizing every
/// batch it has fetched.
pub struct BatchCursor<'a> {
    index: &'a VectorIndex,
    probe: EmbeddingVector,
    k: usize,
    batches: Vec<CandidateBatch>,
}

impl<'a> BatchCursor<'a> {
    pub fn new(index: &'a VectorIndex, probe: EmbeddingVector, k: usize) -> Self {
        Self {
            index,
            probe,
            k,
            batches: Vec::new(),
        }
    }

    /// Batch `n`, or `None` once the ranking is exhausted.
    pub fn batch(&mut self, n: usize) -> Result<Option<&CandidateBatch>, IndexError> {
        while self.batches.len() <= n {
            let offset = self.batches.len() * self.k;
            if offset >= self.index.len() {
                return Ok(None);
            }
            let batch = self.index.query_topk(&self.probe, self.k, offset)?;
            self.batches.push(batch);
        }
        Ok(self.batches.get(n))
    }

    /// True when nothing lies beyond batch `n`.
    pub fn exhausted_after(&self, n: usize) -> bool {
        (n + 1).saturating_mul(self.k) >= self.index.len()
    }

    pub fn fetched(&self) -> &[CandidateBatch] {
        &self.batches
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    BackendUnavailable,
    Parse,
    Embedding,
    Retrieval,
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FailureKind::BackendUnavailable => "backend_unavailable",
            FailureKind::Parse => "parse_error",
            FailureKind::Embedding => "embedding_error",
            FailureKind::Retrieval => "retrieval_error",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairFailure {
    pub kind: FailureKind,
    pub batch_index: Option<usize>,
    pub message: String,
}

impl From<&ClassifyError> for FailureKind {
    fn from(err: &ClassifyError) -> Self {
        match err {
            ClassifyError::BackendUnavailable { .. } => FailureKind::BackendUnavailable,
            ClassifyError::Parse(_) => FailureKind::Parse,
        }
    }
}

/// Outcome of one batch inside the retrieval loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchStat {
    pub size: usize,
    pub confirmed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RelationStats {
    pub batches_fetched: usize,
    pub candidates_examined: usize,
    pub per_batch: Vec<BatchStat>,
    pub failure: Option<PairFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationOutcome {
    pub relation_id: String,
    pub verdicts: Vec<RelationVerdict>,
    pub stats: RelationStats,
}

/// Everything needed to classify one source entity.
#[derive(Clone, Copy)]
pub struct MatchContext<'a> {
    pub targets: &'a TargetLookup<'a>,
    pub index: &'a VectorIndex,
    pub classifier: Classifier<'a>,
    pub policy: RetrievalPolicy,
}

/// Id-keyed view over the target table.
pub struct TargetLookup<'a> {
    by_id: HashMap<&'a str, &'a EntityRecord>,
}

impl<'a> TargetLookup<'a> {
    pub fn new(table: &'a EntityTable) -> Self {
        Self {
            by_id: table.records().iter().map(|r| (r.id(), r)).collect(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&'a EntityRecord> {
        self.by_id.get(id).copied()
    }
}

fn records_for<'a>(
    lookup: &TargetLookup<'a>,
    batch: &CandidateBatch,
) -> Result<Vec<&'a EntityRecord>, String> {
    batch
        .ids()
        .map(|id| {
            lookup
                .get(id)
                .ok_or_else(|| format!("indexed entity `{id}` is missing from the target table"))
        })
        .collect()
}

fn run_relation_loop(
    source: &EntityRecord,
    relation: &RelationSpec,
    ctx: &MatchContext<'_>,
    cursor: &mut BatchCursor<'_>,
) -> RelationOutcome {
    let mut stats = RelationStats::default();
    let mut verdicts = Vec::new();
    let model_hint = ctx.classifier.model_hint();
    let mut n = 0;
    while stats.batches_fetched < ctx.policy.max_batches {
        let batch = match cursor.batch(n) {
            Ok(Some(batch)) => batch,
            Ok(None) => break,
            Err(e) => {
                stats.failure = Some(PairFailure {
                    kind: FailureKind::Retrieval,
                    batch_index: Some(n),
                    message: e.to_string(),
                });
                break;
            }
        };
        stats.batches_fetched += 1;
        let candidates = match records_for(ctx.targets, batch) {
            Ok(c) => c,
            Err(message) => {
                stats.failure = Some(PairFailure {
                    kind: FailureKind::Retrieval,
                    batch_index: Some(n),
                    message,
                });
                break;
            }
        };
        let request = build_prompt(source, &candidates, relation, &model_hint);
        let batch_verdicts = match ctx.classifier.classify_batch(&request) {
            Ok(v) => v,
            Err(err) => {
                stats.failure = Some(PairFailure {
                    kind: FailureKind::from(&err),
                    batch_index: Some(n),
                    message: err.to_string(),
                });
                break;
            }
        };
        let confirmed = batch_verdicts.iter().filter(|v| v.decision).count();
        stats.candidates_examined += batch_verdicts.len();
        stats.per_batch.push(BatchStat {
            size: batch_verdicts.len(),
            confirmed,
        });
        verdicts.extend(batch_verdicts);
        if !ctx.policy.continues(confirmed, candidates.len()) || cursor.exhausted_after(n) {
            break;
        }
        n += 1;
    }
    RelationOutcome {
        relation_id: relation.id.clone(),
        verdicts,
        stats,
    }
}

/// Runs the adaptive retrieval loop for one (source, relation) pair using a
/// fresh cursor over `probe`'s neighbors.
pub fn match_relation(
    source: &EntityRecord,
    probe: EmbeddingVector,
    relation: &RelationSpec,
    ctx: &MatchContext<'_>,
) -> RelationOutcome {
    let mut cursor = BatchCursor::new(ctx.index, probe, ctx.policy.k);
    run_relation_loop(source, relation, ctx, &mut cursor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceOutcome {
    pub source_id: String,
    /// One entry per catalog relation, in priority order.
    pub relations: Vec<RelationOutcome>,
    /// Every candidate retrieved for this source, in ranking order.
    pub retrieved: Vec<Candidate>,
    pub embed_failure: Option<PairFailure>,
}

impl SourceOutcome {
    pub fn batches_fetched(&self) -> usize {
        self.relations
            .iter()
            .map(|r| r.stats.batches_fetched)
            .max()
            .unwrap_or(0)
    }

    pub fn candidates_examined(&self) -> usize {
        self.relations
            .iter()
            .map(|r| r.stats.candidates_examined)
            .max()
            .unwrap_or(0)
    }

    pub fn distances(&self) -> HashMap<String, f64> {
        self.retrieved
            .iter()
            .map(|c| (c.entity_id.clone(), c.distance))
            .collect()
    }

    pub fn verdicts(&self) -> impl Iterator<Item = &RelationVerdict> {
        self.relations.iter().flat_map(|r| r.verdicts.iter())
    }

    pub fn failures(&self) -> Vec<(&str, &PairFailure)> {
        self.relations
            .iter()
            .filter_map(|r| r.stats.failure.as_ref().map(|f| (r.relation_id.as_str(), f)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchRun {
    pub sources: Vec<SourceOutcome>,
}

impl MatchRun {
    pub fn verdicts(&self) -> impl Iterator<Item = &RelationVerdict> {
        self.sources.iter().flat_map(SourceOutcome::verdicts)
    }

    pub fn pair_count(&self) -> usize {
        self.sources.iter().map(|s| s.relations.len()).sum()
    }

    pub fn failed_pairs(&self) -> Vec<(&str, &str, &PairFailure)> {
        self.sources
            .iter()
            .flat_map(|s| {
                s.failures()
                    .into_iter()
                    .map(move |(rel, f)| (s.source_id.as_str(), rel, f))
            })
            .collect()
    }
}

/// Matches one source entity against every relation of the catalog.
pub fn match_source(
    source: &EntityRecord,
    source_schema: &[String],
    catalog: &RelationCatalog,
    provider: &dyn EmbeddingProvider,
    ctx: &MatchContext<'_>,
) -> SourceOutcome {
    let probe = match embed(&serialize_entity(source, source_schema), provider) {
        Ok(p) => p,
        Err(e) => {
            let failure = PairFailure {
                kind: FailureKind::Embedding,
                batch_index: None,
                message: e.to_string(),
            };
            return SourceOutcome {
                source_id: source.id().to_string(),
                relations: catalog
                    .relations()
                    .iter()
                    .map(|r| RelationOutcome {
                        relation_id: r.id.clone(),
                        verdicts: Vec::new(),
                        stats: RelationStats {
                            failure: Some(failure.clone()),
                            ..RelationStats::default()
                        },
                    })
                    .collect(),
                retrieved: Vec::new(),
                embed_failure: Some(failure),
            };
        }
    };
    let mut cursor = BatchCursor::new(ctx.index, probe, ctx.policy.k);
    let relations = catalog
        .relations()
        .iter()
        .map(|relation| run_relation_loop(source, relation, ctx, &mut cursor))
        .collect();
    SourceOutcome {
        source_id: source.id().to_string(),
        relations,
        retrieved: cursor
            .fetched()
            .iter()
            .flat_map(|b| b.candidates.iter().cloned())
            .collect(),
        embed_failure: None,
    }
}

/// Runs every (source, relation) pair. Sources are processed by up to `jobs`
/// worker threads; the result is in source-table order regardless.
pub fn match_all(
    sources: &EntityTable,
    catalog: &RelationCatalog,
    provider: &dyn EmbeddingProvider,
    ctx: &MatchContext<'_>,
    jobs: usize,
) -> MatchRun {
    let records = sources.records();
    let slots: Vec<Mutex<Option<SourceOutcome>>> = records.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = jobs.clamp(1, records.len().max(1));
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(record) = records.get(i) else { break };
                let outcome = match_source(record, sources.schema(), catalog, provider, ctx);
                *slots[i].lock().expect("slot poisoned") = Some(outcome);
            });
        }
    });
    MatchRun {
        sources: slots
            .into_iter()
            .map(|s| s.into_inner().expect("slot poisoned").expect("every source processed"))
            .collect(),
    }
}

/// Asks the plain "same entity?" question about a list of candidates.
pub fn naive_match(
    source: &EntityRecord,
    candidates: &[&EntityRecord],
    classifier: &Classifier<'_>,
) -> Result<Vec<RelationVerdict>, ClassifyError> {
    let request = build_naive_prompt(source, candidates, &classifier.model_hint());
    classifier.classify_batch(&request)
}
