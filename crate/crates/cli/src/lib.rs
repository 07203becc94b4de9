//! `relmatch` command-line interface.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 provider or
//! backend exhaustion, 4 partial failure (report written, failures flagged).

pub mod commands;
pub mod settings;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use relmatch_core::{DirCache, MemoryCache, VerdictCache};
use relmatch_eval::{EvalConfig, GeneratorParams};
use thiserror::Error;

use commands::{cmd_eval, cmd_generate, cmd_index, cmd_match, text_report_path, MatchOptions};
use settings::{BackendFlags, ConfigFile, PolicyFlags, ProviderFlags, DEFAULT_CACHE_DIR, DEFAULT_JOBS};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("embedding provider failed: {0}")]
    Provider(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Provider(_) => 3,
            CliError::Internal(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "relmatch", version, about = "Relation-based entity matching")]
pub struct Cli {
    /// TOML config file; command-line flags take precedence over it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Embed a target table and write an exact nearest-neighbor index
    Index(IndexArgs),
    /// Match source entities against an index and write a report
    Match(MatchArgs),
    /// Score baselines and the relation pipeline on a synthetic corpus
    Eval(EvalArgs),
    /// Write a synthetic corpus (tables, truth triples, corpus file)
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Target table CSV
    #[arg(long)]
    pub target: PathBuf,
    /// Output directory for index, manifest and table copy
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub provider: ProviderFlags,
    /// Cache directory for remote embeddings [default: .relmatch-cache]
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Source table CSV
    #[arg(long)]
    pub source: PathBuf,
    /// Directory written by `relmatch index`
    #[arg(long)]
    pub index: PathBuf,
    /// Relation catalog JSON [default: built-in ESG catalog]
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[command(flatten)]
    pub policy: PolicyFlags,
    #[command(flatten)]
    pub provider: ProviderFlags,
    #[command(flatten)]
    pub backend: BackendFlags,
    /// JSON report path; a text summary is written next to it with .txt
    #[arg(long, default_value = "relmatch-report.json")]
    pub report: PathBuf,
    /// Verdict cache directory [default: .relmatch-cache]
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Keep verdicts in memory only
    #[arg(long)]
    pub no_cache: bool,
    /// Concurrent source entities [default: 4]
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct GeneratorFlags {
    /// Generator seed
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Taxonomy depth (at least 2)
    #[arg(long, default_value_t = GeneratorParams::default().tree_depth)]
    pub depth: usize,
    /// Children per taxonomy node
    #[arg(long, default_value_t = GeneratorParams::default().branching)]
    pub branching: usize,
    /// Target table size
    #[arg(long, default_value_t = GeneratorParams::default().targets_count)]
    pub targets: usize,
    /// Source table size
    #[arg(long, default_value_t = GeneratorParams::default().sources_count)]
    pub sources: usize,
    /// Probability of rendering a synonym instead of the canonical word
    #[arg(long, default_value_t = GeneratorParams::default().synonym_rate)]
    pub synonym_rate: f64,
    /// Probability of filling each detail slot
    #[arg(long, default_value_t = GeneratorParams::default().detail_rate)]
    pub detail_rate: f64,
}

impl GeneratorFlags {
    pub fn params(&self) -> GeneratorParams {
        GeneratorParams {
            tree_depth: self.depth,
            branching: self.branching,
            targets_count: self.targets,
            sources_count: self.sources,
            synonym_rate: self.synonym_rate,
            detail_rate: self.detail_rate,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub generator: GeneratorFlags,
    #[command(flatten)]
    pub policy: PolicyFlags,
    /// Mock embedder noise seed
    #[arg(long, default_value_t = 0)]
    pub embed_seed: u64,
    /// Metrics JSON path
    #[arg(long, default_value = "metrics.json")]
    pub out: PathBuf,
    /// Concurrent source entities [default: 4]
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub generator: GeneratorFlags,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
}

fn execute(cli: Cli, err: &mut dyn Write) -> Result<u8, CliError> {
    let config = ConfigFile::load(cli.config.as_deref())?;
    let cache_dir = |flag: &Option<PathBuf>| {
        flag.clone()
            .or_else(|| config.cache_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_CACHE_DIR))
    };
    let jobs = |flag: Option<usize>| flag.or(config.jobs).unwrap_or(DEFAULT_JOBS).max(1);
    match cli.command {
        Command::Index(args) => {
            let spec = args.provider.resolve(&config.provider)?;
            let provider = spec.build(Some(&cache_dir(&args.cache_dir)))?;
            let outcome = cmd_index(&args.target, &args.out, provider.as_ref())?;
            let _ = writeln!(
                err,
                "{} {} rows into {}",
                if outcome.rebuilt { "indexed" } else { "index up to date:" },
                outcome.rows,
                args.out.display()
            );
            Ok(0)
        }
        Command::Match(args) => {
            let policy = args.policy.resolve(&config.policy)?;
            let dir = cache_dir(&args.cache_dir);
            let spec = args.provider.resolve(&config.provider)?;
            let provider = spec.build(Some(&dir))?;
            let backend = args.backend.build(&config.backend)?;
            let cache: Box<dyn VerdictCache> = if args.no_cache {
                Box::new(MemoryCache::new())
            } else {
                Box::new(DirCache::open(&dir).map_err(|e| {
                    CliError::Input(format!("cannot open cache directory {}: {e}", dir.display()))
                })?)
            };
            let options = MatchOptions {
                source_csv: args.source,
                index_dir: args.index,
                catalog: args.catalog,
                policy,
                report: args.report,
                jobs: jobs(args.jobs),
            };
            let outcome = cmd_match(&options, provider.as_ref(), backend.as_ref(), cache.as_ref())?;
            let _ = writeln!(
                err,
                "backend calls: {}, cache hits: {}, failed pairs: {}/{}",
                outcome.backend_calls, outcome.cache_hits, outcome.failed_pairs, outcome.total_pairs
            );
            let _ = writeln!(
                err,
                "report: {} and {}",
                options.report.display(),
                text_report_path(&options.report).display()
            );
            Ok(outcome.exit_code)
        }
        Command::Eval(args) => {
            let eval = EvalConfig {
                seed: args.generator.seed,
                params: args.generator.params(),
                policy: args.policy.resolve(&config.policy)?,
                embed_seed: args.embed_seed,
                jobs: jobs(args.jobs),
            };
            let metrics = cmd_eval(&eval, &args.out)?;
            let _ = writeln!(
                err,
                "evaluated {} sources x {} targets ({} truth triples); backend calls: {}; metrics: {}",
                metrics.corpus.sources,
                metrics.corpus.targets,
                metrics.corpus.truth_triples,
                metrics.backend_calls,
                args.out.display()
            );
            Ok(0)
        }
        Command::Generate(args) => {
            cmd_generate(args.generator.seed, &args.generator.params(), &args.out)?;
            let _ = writeln!(err, "wrote corpus to {}", args.out.display());
            Ok(0)
        }
    }
}

/// Parses `args` and runs the chosen command, returning the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(rendered.as_bytes())
            } else {
                err.write_all(rendered.as_bytes())
            };
            return if code == 0 { 0 } else { 2 };
        }
    };
    match execute(cli, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
