//! Layered configuration: command-line flags, then the TOML config file,
//! then built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use relmatch_core::remote::{RemoteChatBackend, RemoteConfig, RemoteEmbedder};
use relmatch_core::{Backend, CachingProvider, EmbeddingProvider, LocalHashEmbedder, RetrievalPolicy};
use relmatch_eval::{Corpus, GroundTruth, MockEmbedder, OracleBackend};
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_CACHE_DIR: &str = ".relmatch-cache";
pub const DEFAULT_DIMENSION: usize = 64;
pub const DEFAULT_EMBED_ENDPOINT: &str = "https://api.openai.com/v1/embeddings";
pub const DEFAULT_EMBED_MODEL: &str = "text-embedding-ada-002";
pub const DEFAULT_REMOTE_DIMENSION: usize = 1536;
pub const DEFAULT_CHAT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const DEFAULT_CHAT_MODEL: &str = "gpt-4";
pub const DEFAULT_JOBS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// Hash-seeded vectors; deterministic, no network.
    Local,
    /// Structure-aware vectors for a generated corpus (needs --corpus).
    Mock,
    /// OpenAI-compatible embeddings endpoint.
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// Answers from a ground-truth file (needs --truth).
    Oracle,
    /// OpenAI-compatible chat-completions endpoint.
    Remote,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub k: Option<usize>,
    pub threshold: Option<f64>,
    pub max_batches: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSection {
    pub kind: Option<ProviderKind>,
    pub dimension: Option<usize>,
    pub seed: Option<u64>,
    pub corpus: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub kind: Option<BackendKind>,
    pub truth: Option<PathBuf>,
    pub endpoint: Option<String>,
    pub model: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub provider: ProviderSection,
    #[serde(default)]
    pub backend: BackendSection,
    pub cache_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Input(format!("invalid config {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct PolicyFlags {
    /// Candidates per retrieval batch [default: 10]
    #[arg(long)]
    pub k: Option<usize>,
    /// Minimum confirmed fraction of a batch to fetch the next one [default: 0.30]
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Upper bound on batches per (source, relation) [default: 5]
    #[arg(long)]
    pub max_batches: Option<usize>,
}

impl PolicyFlags {
    pub fn resolve(&self, file: &PolicySection) -> Result<RetrievalPolicy, CliError> {
        let defaults = RetrievalPolicy::default();
        RetrievalPolicy::new(
            self.k.or(file.k).unwrap_or(defaults.k),
            self.threshold.or(file.threshold).unwrap_or(defaults.continuation_threshold),
            self.max_batches.or(file.max_batches).unwrap_or(defaults.max_batches),
        )
        .map_err(|e| CliError::Input(format!("invalid retrieval policy: {e}")))
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct ProviderFlags {
    /// Embedding provider [default: local]
    #[arg(long, value_enum)]
    pub provider: Option<ProviderKind>,
    /// Vector dimension for the local and remote providers
    #[arg(long)]
    pub dimension: Option<usize>,
    /// Seed for the local and mock providers [default: 0]
    #[arg(long)]
    pub embed_seed: Option<u64>,
    /// Corpus file written by `relmatch generate` (mock provider)
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Embeddings endpoint (remote provider)
    #[arg(long)]
    pub embed_endpoint: Option<String>,
    /// Embedding model name (remote provider)
    #[arg(long)]
    pub embed_model: Option<String>,
}

/// Fully resolved provider choice.
#[derive(Debug, Clone, PartialEq)]
pub enum ProviderSpec {
    Local { dimension: usize, seed: u64 },
    Mock { corpus: PathBuf, seed: u64 },
    Remote { endpoint: String, model: String, dimension: usize },
}

impl ProviderFlags {
    pub fn resolve(&self, file: &ProviderSection) -> Result<ProviderSpec, CliError> {
        let seed = self.embed_seed.or(file.seed).unwrap_or(0);
        match self.provider.or(file.kind).unwrap_or(ProviderKind::Local) {
            ProviderKind::Local => {
                let dimension = self.dimension.or(file.dimension).unwrap_or(DEFAULT_DIMENSION);
                if dimension == 0 {
                    return Err(CliError::Input("dimension must be positive".into()));
                }
                Ok(ProviderSpec::Local { dimension, seed })
            }
            ProviderKind::Mock => {
                let corpus = self
                    .corpus
                    .clone()
                    .or_else(|| file.corpus.clone())
                    .ok_or_else(|| CliError::Input("the mock provider needs --corpus".into()))?;
                Ok(ProviderSpec::Mock { corpus, seed })
            }
            ProviderKind::Remote => Ok(ProviderSpec::Remote {
                endpoint: self
                    .embed_endpoint
                    .clone()
                    .or_else(|| file.endpoint.clone())
                    .unwrap_or_else(|| DEFAULT_EMBED_ENDPOINT.into()),
                model: self
                    .embed_model
                    .clone()
                    .or_else(|| file.model.clone())
                    .unwrap_or_else(|| DEFAULT_EMBED_MODEL.into()),
                dimension: self
                    .dimension
                    .or(file.dimension)
                    .unwrap_or(DEFAULT_REMOTE_DIMENSION),
            }),
        }
    }
}

impl ProviderSpec {
    pub fn build(&self, cache_dir: Option<&Path>) -> Result<Box<dyn EmbeddingProvider>, CliError> {
        Ok(match self {
            ProviderSpec::Local { dimension, seed } => Box::new(LocalHashEmbedder::new(*dimension, *seed)),
            ProviderSpec::Mock { corpus, seed } => {
                let corpus = Corpus::load(corpus).map_err(|e| CliError::Input(e.to_string()))?;
                Box::new(MockEmbedder::new(&corpus, *seed).map_err(|e| CliError::Input(e.to_string()))?)
            }
            ProviderSpec::Remote {
                endpoint,
                model,
                dimension,
            } => {
                let remote = RemoteEmbedder::new(RemoteConfig::from_env(endpoint, model), *dimension);
                match cache_dir {
                    Some(dir) => Box::new(CachingProvider::with_dir(remote, dir.join("embeddings"))),
                    None => Box::new(CachingProvider::new(remote)),
                }
            }
        })
    }
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct BackendFlags {
    /// Classification backend [default: remote]
    #[arg(long, value_enum)]
    pub backend: Option<BackendKind>,
    /// Ground-truth triples for the oracle backend
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Chat-completions endpoint (remote backend)
    #[arg(long)]
    pub chat_endpoint: Option<String>,
    /// Chat model name (remote backend)
    #[arg(long)]
    pub chat_model: Option<String>,
}

impl BackendFlags {
    pub fn build(&self, file: &BackendSection) -> Result<Box<dyn Backend>, CliError> {
        match self.backend.or(file.kind).unwrap_or(BackendKind::Remote) {
            BackendKind::Oracle => {
                let path = self
                    .truth
                    .clone()
                    .or_else(|| file.truth.clone())
                    .ok_or_else(|| CliError::Input("the oracle backend needs --truth".into()))?;
                let truth = GroundTruth::load(&path).map_err(|e| CliError::Input(e.to_string()))?;
                Ok(Box::new(OracleBackend::new(truth)))
            }
            BackendKind::Remote => {
                let endpoint = self
                    .chat_endpoint
                    .clone()
                    .or_else(|| file.endpoint.clone())
                    .unwrap_or_else(|| DEFAULT_CHAT_ENDPOINT.into());
                let model = self
                    .chat_model
                    .clone()
                    .or_else(|| file.model.clone())
                    .unwrap_or_else(|| DEFAULT_CHAT_MODEL.into());
                Ok(Box::new(RemoteChatBackend::new(RemoteConfig::from_env(endpoint, model))))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config_which_overrides_defaults() {
        let file: ConfigFile = toml::from_str("[policy]\nk = 7\nthreshold = 0.5\n").unwrap();
        let flags = PolicyFlags {
            k: Some(3),
            ..PolicyFlags::default()
        };
        let policy = flags.resolve(&file.policy).unwrap();
        assert_eq!((policy.k, policy.continuation_threshold, policy.max_batches), (3, 0.5, 5));
        let defaults = PolicyFlags::default().resolve(&PolicySection::default()).unwrap();
        assert_eq!(defaults, RetrievalPolicy::default());
    }

    #[test]
    fn zero_k_is_an_input_error() {
        let flags = PolicyFlags {
            k: Some(0),
            ..PolicyFlags::default()
        };
        let err = flags.resolve(&PolicySection::default()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("k must be at least 1"));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(toml::from_str::<ConfigFile>("[policy]\nkk = 1\n").is_err());
    }

    #[test]
    fn provider_resolution() {
        let file: ConfigFile = toml::from_str("[provider]\nkind = \"local\"\ndimension = 12\n").unwrap();
        let spec = ProviderFlags::default().resolve(&file.provider).unwrap();
        assert_eq!(spec, ProviderSpec::Local { dimension: 12, seed: 0 });
        let mock = ProviderFlags {
            provider: Some(ProviderKind::Mock),
            ..ProviderFlags::default()
        };
        assert_eq!(mock.resolve(&file.provider).unwrap_err().exit_code(), 2);
    }
}
