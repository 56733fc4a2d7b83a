//! Pipeline configuration (TOML).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::chunking::{ChunkParams, ChunkParamsError};
use crate::encode::{DEFAULT_MINING_THRESHOLD, MOCK_DENSE_DIM, MULTI_VECTOR_WIDTH};
use crate::index::{DEFAULT_K_PRIME, DEFAULT_K_VISUAL};
use crate::layout::LayoutParams;
use crate::rerank::DEFAULT_K;
use crate::visualpatch::{PatchError, PatchParams, DEFAULT_IMAGE_TOKENS};

/// Overrides `endpoint` for every backend set to `"remote"`.
pub const ENDPOINT_ENV: &str = "DOCRAG_ENDPOINT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error(transparent)]
    Chunk(#[from] ChunkParamsError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error("{0}")]
    Invalid(String),
}

/// Where a model role is served from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    /// Hashing mock encoder.
    Mock,
    /// Token-overlap reranker.
    Lexical,
    /// Generator that knows the gold answers.
    Oracle,
    /// Generator echoing the first context line.
    Echo,
    /// HTTP backend at the configured `endpoint`.
    Remote,
    /// HTTP backend at an explicit base URL.
    Url(String),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "mock" => BackendSpec::Mock,
            "lexical" => BackendSpec::Lexical,
            "oracle" => BackendSpec::Oracle,
            "echo" => BackendSpec::Echo,
            "remote" => BackendSpec::Remote,
            url if url.starts_with("http://") || url.starts_with("https://") => BackendSpec::Url(url.to_string()),
            other => return Err(format!("unknown backend {other:?}")),
        })
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendSpec::Mock => f.write_str("mock"),
            BackendSpec::Lexical => f.write_str("lexical"),
            BackendSpec::Oracle => f.write_str("oracle"),
            BackendSpec::Echo => f.write_str("echo"),
            BackendSpec::Remote => f.write_str("remote"),
            BackendSpec::Url(u) => f.write_str(u),
        }
    }
}

impl Serialize for BackendSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BackendSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Retrieve only among units of the question's document.
    PerDocument,
    Collection,
}

/// Order in which the selected chunks are placed in the generator context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextOrder {
    Rank,
    Document,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkStrategy {
    Window,
    Layout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisualConfig {
    pub patch_size: u32,
    pub step: u32,
    pub k: usize,
    pub image_tokens: usize,
}

impl Default for VisualConfig {
    fn default() -> Self {
        let p = PatchParams::default();
        Self {
            patch_size: p.patch_size,
            step: p.step,
            k: DEFAULT_K_VISUAL,
            image_tokens: DEFAULT_IMAGE_TOKENS,
        }
    }
}

impl VisualConfig {
    pub fn patch_params(&self) -> PatchParams {
        PatchParams {
            patch_size: self.patch_size,
            step: self.step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    /// Region JSON-lines file produced by a layout detector.
    pub regions: Option<PathBuf>,
    /// TOML label table replacing the built-in mapping.
    pub labels: Option<PathBuf>,
    pub min_area: f64,
    pub max_nested_overlap: f64,
    pub seed: u64,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        let p = LayoutParams::default();
        Self {
            regions: None,
            labels: None,
            min_area: p.min_area,
            max_nested_overlap: p.max_nested_overlap,
            seed: p.seed,
        }
    }
}

impl LayoutConfig {
    pub fn params(&self) -> LayoutParams {
        LayoutParams {
            min_area: self.min_area,
            max_nested_overlap: self.max_nested_overlap,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub encoder: BackendSpec,
    pub multi_encoder: BackendSpec,
    pub scorer: BackendSpec,
    pub generator: BackendSpec,
    /// Base URL for backends set to `"remote"`.
    pub endpoint: Option<String>,
    pub retries: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
    pub mock_dense_dim: usize,
    pub mock_multi_width: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            encoder: BackendSpec::Mock,
            multi_encoder: BackendSpec::Mock,
            scorer: BackendSpec::Lexical,
            generator: BackendSpec::Oracle,
            endpoint: None,
            retries: 3,
            backoff_ms: 200,
            timeout_secs: 120,
            mock_dense_dim: MOCK_DENSE_DIM,
            mock_multi_width: MULTI_VECTOR_WIDTH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub chunking: ChunkParams,
    pub chunk_strategy: ChunkStrategy,
    /// First-stage candidates.
    pub k_prime: usize,
    /// Chunks kept after reranking.
    pub k: usize,
    pub visual: VisualConfig,
    pub layout: LayoutConfig,
    pub scope: Scope,
    pub context_order: ContextOrder,
    pub mining_threshold: f64,
    /// Evidence tokens above which the generator is not called.
    pub max_context_tokens: Option<usize>,
    /// Evaluation threads; 0 uses every core.
    pub workers: usize,
    pub backends: BackendConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            chunking: ChunkParams::default(),
            chunk_strategy: ChunkStrategy::Window,
            k_prime: DEFAULT_K_PRIME,
            k: DEFAULT_K,
            visual: VisualConfig::default(),
            layout: LayoutConfig::default(),
            scope: Scope::PerDocument,
            context_order: ContextOrder::Rank,
            mining_threshold: DEFAULT_MINING_THRESHOLD,
            max_context_tokens: None,
            workers: 0,
            backends: BackendConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text, path)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.chunking.validate()?;
        self.visual.patch_params().validate()?;
        if self.k == 0 || self.k_prime == 0 || self.visual.k == 0 {
            return Err(ConfigError::Invalid("retrieval depths must be positive".into()));
        }
        if self.k > self.k_prime {
            return Err(ConfigError::Invalid(format!(
                "k ({}) cannot exceed k_prime ({})",
                self.k, self.k_prime
            )));
        }
        if self.visual.image_tokens == 0 {
            return Err(ConfigError::Invalid("image_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Applies the endpoint environment override.
    pub fn with_env_overrides(mut self) -> Self {
        if let Ok(url) = std::env::var(ENDPOINT_ENV) {
            if !url.is_empty() {
                self.backends.endpoint = Some(url);
            }
        }
        self
    }

    /// Base URL for a backend spec, `None` for in-process backends.
    pub fn remote_url(&self, spec: &BackendSpec) -> Result<Option<String>, ConfigError> {
        match spec {
            BackendSpec::Url(u) => Ok(Some(u.clone())),
            BackendSpec::Remote => self.backends.endpoint.clone().map(Some).ok_or_else(|| {
                ConfigError::Invalid(format!(
                    "backend set to \"remote\" but no endpoint (set {ENDPOINT_ENV})"
                ))
            }),
            _ => Ok(None),
        }
    }
}
