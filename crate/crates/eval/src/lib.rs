//! Offline evaluation for relmatch: synthetic taxonomy corpora with known
//! relation truth, a structure-aware mock embedder, an oracle backend, and
//! metrics comparing three matching strategies on the same retrieval:
//!
//! * embedding top-1: the nearest target is taken as the match
//! * naive match: the backend is asked "same entity?" about the first batch
//! * relation-based: the full per-relation pipeline

pub mod metrics;
pub mod mock_embed;
pub mod oracle;
pub mod taxonomy;

use std::collections::BTreeSet;

use relmatch_core::classifier::TargetLookup;
use relmatch_core::embedding::serialize_entity;
use relmatch_core::{
    embed, embed_table, match_all, naive_match, Classifier, CountingBackend, EmbedError,
    IndexError, MatchContext, MatchRun, MemoryCache, PolicyError, RelationCatalog,
    RelationVerdict, RetrievalPolicy, VectorIndex,
};
use serde::Serialize;
use thiserror::Error;

pub use metrics::{compute_metrics, examined_from_verdicts, Examined, Metrics, RelationMetrics, Score};
pub use mock_embed::{mock_dimension, mock_embed, MockEmbedError, MockEmbedder};
pub use oracle::{oracle_classify, OracleBackend, ScriptedBackend};
pub use taxonomy::{
    generate_taxonomy, relations_between, Corpus, Entity, Forest, GenerateError, GeneratorParams,
    GroundTruth, TaxonomyNode, TruthTriple, ALL_RELATIONS, EXACTLY_THE_SAME,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    MockEmbed(#[from] MockEmbedError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("baseline classification failed: {0}")]
    Classify(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub seed: u64,
    pub params: GeneratorParams,
    pub policy: RetrievalPolicy,
    pub embed_seed: u64,
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            params: GeneratorParams::default(),
            policy: RetrievalPolicy::default(),
            embed_seed: 0,
            jobs: 4,
        }
    }
}

/// Pair-level scores of a strategy that predicts plain (source, target)
/// matches without naming a relation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairMetrics {
    pub predicted: usize,
    pub correct_exact: usize,
    pub precision_exact: Score,
    pub recall_exact: Score,
    pub correct_any: usize,
    pub precision_any: Score,
    pub recall_any: Score,
}

fn pair_metrics(predicted: &BTreeSet<(String, String)>, truth: &GroundTruth, sources: &BTreeSet<String>) -> PairMetrics {
    let exact: BTreeSet<(String, String)> = truth
        .for_relation(EXACTLY_THE_SAME)
        .filter(|t| sources.contains(&t.source_id))
        .map(|t| (t.source_id.clone(), t.target_id.clone()))
        .collect();
    let any: BTreeSet<(String, String)> = truth
        .triples()
        .filter(|t| sources.contains(&t.source_id))
        .map(|t| (t.source_id.clone(), t.target_id.clone()))
        .collect();
    let correct_exact = predicted.intersection(&exact).count();
    let correct_any = predicted.intersection(&any).count();
    PairMetrics {
        predicted: predicted.len(),
        correct_exact,
        precision_exact: Score::ratio(correct_exact, predicted.len()),
        recall_exact: Score::ratio(correct_exact, exact.len()),
        correct_any,
        precision_any: Score::ratio(correct_any, predicted.len()),
        recall_any: Score::ratio(correct_any, any.len()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub sources: usize,
    pub targets: usize,
    pub truth_triples: usize,
    pub multi_relation_pairs: usize,
    pub embedding_dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub k: usize,
    pub continuation_threshold: f64,
    pub max_batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub seed: u64,
    pub params: GeneratorParams,
    pub policy: PolicySummary,
    pub corpus: CorpusSummary,
    pub embedding_top1: PairMetrics,
    pub naive_match: PairMetrics,
    pub relation_based: Metrics,
    /// Union of relations, scored like the pair-level baselines.
    pub relation_based_pairs: PairMetrics,
    pub backend_calls: usize,
}

impl EvalMetrics {
    /// Pretty JSON with keys in sorted order.
    pub fn to_canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("metrics serialize");
        let mut text = serde_json::to_string_pretty(&value).expect("metrics serialize");
        text.push('\n');
        text
    }
}

#[derive(Debug)]
pub struct EvalOutcome {
    pub corpus: Corpus,
    pub run: MatchRun,
    pub naive_verdicts: Vec<RelationVerdict>,
    pub metrics: EvalMetrics,
}

/// Builds the exact index over the corpus targets with the mock embedder.
pub fn build_index(corpus: &Corpus, provider: &MockEmbedder) -> Result<VectorIndex, EvalError> {
    Ok(VectorIndex::build(embed_table(&corpus.target_table(), provider)?)?)
}

/// Runs the relation-based pipeline with the oracle backend.
pub fn run_pipeline(
    corpus: &Corpus,
    provider: &MockEmbedder,
    index: &VectorIndex,
    policy: RetrievalPolicy,
    jobs: usize,
) -> Result<(MatchRun, usize), EvalError> {
    policy.validate()?;
    let catalog = RelationCatalog::esg_default();
    let targets = corpus.target_table();
    let lookup = TargetLookup::new(&targets);
    let backend = CountingBackend::new(OracleBackend::new(corpus.truth.clone()));
    let cache = MemoryCache::new();
    let ctx = MatchContext {
        targets: &lookup,
        index,
        classifier: Classifier::new(&backend, &cache),
        policy,
    };
    let run = match_all(&corpus.source_table(), &catalog, provider, &ctx, jobs);
    Ok((run, backend.calls()))
}

/// Generates the corpus and scores all three strategies.
pub fn run_eval(config: &EvalConfig) -> Result<EvalOutcome, EvalError> {
    config.policy.validate()?;
    let corpus = generate_taxonomy(config.seed, &config.params)?;
    let provider = MockEmbedder::new(&corpus, config.embed_seed)?;
    let index = build_index(&corpus, &provider)?;
    let sources_table = corpus.source_table();
    let targets_table = corpus.target_table();
    let lookup = TargetLookup::new(&targets_table);
    let source_ids: BTreeSet<String> = corpus.sources.iter().map(|s| s.id.clone()).collect();

    let mut top1 = BTreeSet::new();
    let mut naive_verdicts = Vec::new();
    let naive_backend = OracleBackend::new(corpus.truth.clone());
    let naive_cache = MemoryCache::new();
    let naive_classifier = Classifier::new(&naive_backend, &naive_cache);
    for record in sources_table.records() {
        let probe = embed(&serialize_entity(record, sources_table.schema()), &provider)?;
        let batch = index.query_topk(&probe, config.policy.k, 0)?;
        if let Some(first) = batch.candidates.first() {
            top1.insert((record.id().to_string(), first.entity_id.clone()));
        }
        let candidates: Vec<_> = batch
            .ids()
            .map(|id| lookup.get(id).expect("indexed ids come from the target table"))
            .collect();
        let verdicts = naive_match(record, &candidates, &naive_classifier)
            .map_err(|e| EvalError::Classify(e.to_string()))?;
        naive_verdicts.extend(verdicts);
    }
    let naive_pairs: BTreeSet<(String, String)> = naive_verdicts
        .iter()
        .filter(|v| v.decision)
        .map(|v| (v.source_id.clone(), v.target_id.clone()))
        .collect();

    let (run, backend_calls) = run_pipeline(&corpus, &provider, &index, config.policy, config.jobs)?;
    let verdicts: Vec<RelationVerdict> = run.verdicts().cloned().collect();
    let relation_metrics = compute_metrics(
        &verdicts,
        &corpus.truth,
        &examined_from_verdicts(&verdicts),
        &ALL_RELATIONS,
        &source_ids,
    );
    let relation_pairs: BTreeSet<(String, String)> = verdicts
        .iter()
        .filter(|v| v.decision)
        .map(|v| (v.source_id.clone(), v.target_id.clone()))
        .collect();

    let metrics = EvalMetrics {
        seed: config.seed,
        params: config.params,
        policy: PolicySummary {
            k: config.policy.k,
            continuation_threshold: config.policy.continuation_threshold,
            max_batches: config.policy.max_batches,
        },
        corpus: CorpusSummary {
            sources: corpus.sources.len(),
            targets: corpus.targets.len(),
            truth_triples: corpus.truth.len(),
            multi_relation_pairs: corpus.truth.multi_relation_pairs().len(),
            embedding_dimension: index.dimension(),
        },
        embedding_top1: pair_metrics(&top1, &corpus.truth, &source_ids),
        naive_match: pair_metrics(&naive_pairs, &corpus.truth, &source_ids),
        relation_based: relation_metrics,
        relation_based_pairs: pair_metrics(&relation_pairs, &corpus.truth, &source_ids),
        backend_calls,
    };
    Ok(EvalOutcome {
        corpus,
        run,
        naive_verdicts,
        metrics,
    })
}
