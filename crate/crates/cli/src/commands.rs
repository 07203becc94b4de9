//! The `index`, `match`, `eval` and `generate` commands, independent of
//! argument parsing so tests can inject providers and backends.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use relmatch_core::classifier::FailureKind;
use relmatch_core::model::parse_table;
use relmatch_core::{
    atomic_write, embed_table, load_catalog, match_all, Backend, CacheKey, CachedClassification,
    Classifier, CountingBackend, EmbeddingProvider, EntityTable, MatchContext, MatchReport,
    ModelError, RelationCatalog, RetrievalPolicy, RunInfo, TargetLookup, VectorIndex, VerdictCache,
};
use relmatch_eval::{generate_taxonomy, run_eval, EvalConfig, EvalError, GenerateError, GeneratorParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const INDEX_FILE: &str = "index.bin";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TABLE_FILE: &str = "target.csv";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexManifest {
    pub provider_id: String,
    pub model: String,
    pub dimension: usize,
    pub rows: usize,
    pub csv_sha256: String,
}

impl IndexManifest {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Input(format!("cannot read index manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("invalid index manifest {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexOutcome {
    pub rebuilt: bool,
    pub rows: usize,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
    }
    atomic_write(path, bytes).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

/// Embeds the target table and writes index, manifest and a copy of the
/// table into `out_dir`. Skips all work when the manifest already matches
/// the CSV content and provider.
pub fn cmd_index(
    target_csv: &Path,
    out_dir: &Path,
    provider: &dyn EmbeddingProvider,
) -> Result<IndexOutcome, CliError> {
    let bytes = read_file(target_csv)?;
    let csv_sha256 = hex::encode(Sha256::digest(&bytes));
    if let Ok(existing) = IndexManifest::load(out_dir) {
        if existing.csv_sha256 == csv_sha256
            && existing.provider_id == provider.id()
            && out_dir.join(INDEX_FILE).is_file()
            && out_dir.join(TABLE_FILE).is_file()
        {
            return Ok(IndexOutcome {
                rebuilt: false,
                rows: existing.rows,
            });
        }
    }
    let table = parse_table(&bytes, "target", &target_csv.display().to_string())
        .map_err(|e| CliError::Input(e.to_string()))?;
    let vectors = embed_table(&table, provider).map_err(|e| CliError::Provider(e.to_string()))?;
    let index = VectorIndex::build(vectors).map_err(|e| CliError::Input(e.to_string()))?;
    let manifest = IndexManifest {
        provider_id: provider.id(),
        model: provider.model(),
        dimension: provider.dimension(),
        rows: index.len(),
        csv_sha256,
    };
    let index_bytes = index.to_bytes().map_err(|e| CliError::Input(e.to_string()))?;
    write_file(&out_dir.join(INDEX_FILE), &index_bytes)?;
    write_file(&out_dir.join(TABLE_FILE), &bytes)?;
    let manifest_json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    write_file(&out_dir.join(MANIFEST_FILE), manifest_json.as_bytes())?;
    Ok(IndexOutcome {
        rebuilt: true,
        rows: manifest.rows,
    })
}

/// Counts cache hits on the way through.
struct CountingCache<'a> {
    inner: &'a dyn VerdictCache,
    hits: AtomicUsize,
}

impl VerdictCache for CountingCache<'_> {
    fn get(&self, key: &CacheKey) -> Option<CachedClassification> {
        let hit = self.inner.get(key);
        if hit.is_some() {
            self.hits.fetch_add(1, Ordering::Relaxed);
        }
        hit
    }

    fn put(&self, key: &CacheKey, entry: &CachedClassification) {
        self.inner.put(key, entry)
    }

    fn record_failure(&self, key: &CacheKey, raw_text: &str) {
        self.inner.record_failure(key, raw_text)
    }
}

#[derive(Debug, Clone)]
pub struct MatchOptions {
    pub source_csv: PathBuf,
    pub index_dir: PathBuf,
    pub catalog: Option<PathBuf>,
    pub policy: RetrievalPolicy,
    pub report: PathBuf,
    pub jobs: usize,
}

#[derive(Debug)]
pub struct MatchOutcome {
    pub exit_code: u8,
    pub report: MatchReport,
    pub backend_calls: usize,
    pub cache_hits: usize,
    pub failed_pairs: usize,
    pub total_pairs: usize,
}

/// Path of the text summary written next to a JSON report.
pub fn text_report_path(report: &Path) -> PathBuf {
    report.with_extension("txt")
}

fn load_sources(path: &Path) -> Result<EntityTable, CliError> {
    let bytes = read_file(path)?;
    match parse_table(&bytes, "source", &path.display().to_string()) {
        Ok(table) => Ok(table),
        // No source rows simply means nothing to match.
        Err(ModelError::EmptyTable { .. }) => {
            Ok(EntityTable::new("source", Vec::new(), Vec::new()).expect("empty table is valid"))
        }
        Err(e) => Err(CliError::Input(e.to_string())),
    }
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Runs matching and writes the JSON and text reports.
pub fn cmd_match(
    options: &MatchOptions,
    provider: &dyn EmbeddingProvider,
    backend: &dyn Backend,
    cache: &dyn VerdictCache,
) -> Result<MatchOutcome, CliError> {
    options
        .policy
        .validate()
        .map_err(|e| CliError::Input(format!("invalid retrieval policy: {e}")))?;
    let manifest = IndexManifest::load(&options.index_dir)?;
    if manifest.provider_id != provider.id() {
        return Err(CliError::Input(format!(
            "index was built with embedding provider `{}` but `{}` is configured; \
             embeddings from different providers are not comparable",
            manifest.provider_id,
            provider.id()
        )));
    }
    let index = VectorIndex::load(&options.index_dir.join(INDEX_FILE))
        .map_err(|e| CliError::Input(e.to_string()))?;
    let targets = parse_table(
        &read_file(&options.index_dir.join(TABLE_FILE))?,
        "target",
        TABLE_FILE,
    )
    .map_err(|e| CliError::Input(e.to_string()))?;
    if targets.len() != index.len() || index.len() != manifest.rows {
        return Err(CliError::Input(format!(
            "index directory {} is inconsistent: {} table rows, {} vectors, manifest says {}",
            options.index_dir.display(),
            targets.len(),
            index.len(),
            manifest.rows
        )));
    }
    let sources = load_sources(&options.source_csv)?;
    let catalog = match &options.catalog {
        Some(path) => load_catalog(path).map_err(|e| CliError::Input(e.to_string()))?,
        None => RelationCatalog::esg_default(),
    };

    let counting = CountingBackend::new(backend);
    let counting_cache = CountingCache {
        inner: cache,
        hits: AtomicUsize::new(0),
    };
    let lookup = TargetLookup::new(&targets);
    let ctx = MatchContext {
        targets: &lookup,
        index: &index,
        classifier: Classifier::new(&counting, &counting_cache),
        policy: options.policy,
    };
    let run = match_all(&sources, &catalog, provider, &ctx, options.jobs);

    let info = RunInfo {
        source_table: file_label(&options.source_csv),
        target_rows: targets.len(),
        embedding_provider: provider.id(),
        embedding_dimension: provider.dimension(),
        backend_model: backend.model_hint(),
        k: options.policy.k,
        continuation_threshold: options.policy.continuation_threshold,
        max_batches: options.policy.max_batches,
        relations: catalog.relations().iter().map(|r| r.id.clone()).collect(),
    };
    let report = MatchReport::build(info, &run, &catalog).map_err(|e| CliError::Internal(e.to_string()))?;
    write_file(&options.report, report.to_canonical_json().as_bytes())?;
    write_file(&text_report_path(&options.report), report.to_text().as_bytes())?;

    let failed = run.failed_pairs();
    let total = run.pair_count();
    let exit_code = if failed.is_empty() {
        0
    } else if failed.len() == total
        && failed
            .iter()
            .any(|(_, _, f)| f.kind == FailureKind::BackendUnavailable)
    {
        3
    } else {
        4
    };
    Ok(MatchOutcome {
        exit_code,
        report,
        backend_calls: counting.calls(),
        cache_hits: counting_cache.hits.load(Ordering::Relaxed),
        failed_pairs: failed.len(),
        total_pairs: total,
    })
}

fn generate_error(e: GenerateError) -> CliError {
    CliError::Input(e.to_string())
}

/// Runs the three-way evaluation and writes the metrics JSON.
pub fn cmd_eval(config: &EvalConfig, out: &Path) -> Result<relmatch_eval::EvalMetrics, CliError> {
    let outcome = run_eval(config).map_err(|e| match e {
        EvalError::Generate(g) => generate_error(g),
        EvalError::Policy(p) => CliError::Input(format!("invalid retrieval policy: {p}")),
        other => CliError::Internal(other.to_string()),
    })?;
    write_file(out, outcome.metrics.to_canonical_json().as_bytes())?;
    Ok(outcome.metrics)
}

pub const GENERATED_FILES: [&str; 4] = ["source.csv", "target.csv", "truth.json", "corpus.json"];

/// Writes a synthetic corpus as CSV tables, truth triples and the corpus
/// file the mock provider reads.
pub fn cmd_generate(seed: u64, params: &GeneratorParams, out_dir: &Path) -> Result<(), CliError> {
    let corpus = generate_taxonomy(seed, params).map_err(generate_error)?;
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out_dir.display())))?;
    corpus
        .source_table()
        .write_csv(&out_dir.join(GENERATED_FILES[0]))
        .map_err(|e| CliError::Input(e.to_string()))?;
    corpus
        .target_table()
        .write_csv(&out_dir.join(GENERATED_FILES[1]))
        .map_err(|e| CliError::Input(e.to_string()))?;
    write_file(&out_dir.join(GENERATED_FILES[2]), (corpus.truth.to_json() + "\n").as_bytes())?;
    write_file(&out_dir.join(GENERATED_FILES[3]), corpus.to_json().as_bytes())?;
    Ok(())
}
