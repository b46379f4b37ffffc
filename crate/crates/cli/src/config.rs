//! Service and CLI configuration. Loaded from TOML; secrets are never part
//! of it, only the names of the environment variables that hold them.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use agqr_core::embed::{RemoteEmbedder, RemoteEmbedderConfig};
use agqr_core::lexical::{EntityTypeLexicon, WordList};
use agqr_core::rewrite::{ChatClient, LlmConfig, LlmRewriter, PromptTemplate, REWRITE_SLOTS};
use agqr_core::{Embedder, EmbedderSpec, HashingEmbedder, MockRewriter, Rewriter};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    pub checkpoint: Option<PathBuf>,
    /// Overrides the threshold stored in the checkpoint.
    pub threshold: Option<f64>,
    #[serde(default = "default_history_window")]
    pub history_window: usize,
    #[serde(default = "default_request_timeout_ms")]
    pub request_timeout_ms: u64,
    pub entity_types: Option<PathBuf>,
    pub common_words: Option<PathBuf>,
    /// When absent, the embedder is rebuilt from the checkpoint's identity.
    pub embedder: Option<EmbedderConfig>,
    #[serde(default)]
    pub rewriter: RewriterConfig,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}
fn default_history_window() -> usize {
    5
}
fn default_request_timeout_ms() -> u64 {
    30_000
}
fn default_token_env() -> String {
    "AGQR_LLM_TOKEN".into()
}
fn default_embed_token_env() -> String {
    "AGQR_EMBED_TOKEN".into()
}

impl Default for ServiceConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbedderConfig {
    Hashing {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
    Remote {
        endpoint: String,
        model: String,
        dim: usize,
        #[serde(default = "default_embed_token_env")]
        token_env: String,
        #[serde(default = "default_embed_timeout_ms")]
        timeout_ms: u64,
        #[serde(default = "default_in_flight")]
        max_in_flight: usize,
    },
}

fn default_dim() -> usize {
    768
}
fn default_embed_timeout_ms() -> u64 {
    5_000
}
fn default_in_flight() -> usize {
    8
}

impl EmbedderConfig {
    pub fn build(&self) -> Arc<dyn Embedder> {
        match self {
            EmbedderConfig::Hashing { dim, seed } => Arc::new(HashingEmbedder::new(*dim, *seed)),
            EmbedderConfig::Remote { endpoint, model, dim, token_env, timeout_ms, max_in_flight } => {
                Arc::new(RemoteEmbedder::new(RemoteEmbedderConfig {
                    endpoint: endpoint.clone(),
                    model: model.clone(),
                    dim: *dim,
                    token: std::env::var(token_env).ok(),
                    timeout: Duration::from_millis(*timeout_ms),
                    max_in_flight: *max_in_flight,
                }))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RewriterConfig {
    /// Lookup table (JSON object query → rewrite); unmapped queries echo.
    Mock { table: Option<PathBuf> },
    Llm(LlmRewriterConfig),
    #[default]
    Echo,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmRewriterConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    pub timeout_ms: Option<u64>,
    pub max_retries: Option<u32>,
    pub initial_backoff_ms: Option<u64>,
    pub max_in_flight: Option<usize>,
    #[serde(default)]
    pub debug_bodies: bool,
    #[serde(default = "default_token_env")]
    pub token_env: String,
    pub template: Option<PathBuf>,
}

impl LlmRewriterConfig {
    pub fn client_config(&self) -> LlmConfig {
        let mut c = LlmConfig::new(self.endpoint.clone(), self.model.clone());
        c.temperature = self.temperature;
        c.debug_bodies = self.debug_bodies;
        if let Some(v) = self.timeout_ms {
            c.timeout_ms = v;
        }
        if let Some(v) = self.max_retries {
            c.max_retries = v;
        }
        if let Some(v) = self.initial_backoff_ms {
            c.initial_backoff_ms = v;
        }
        if let Some(v) = self.max_in_flight {
            c.max_in_flight = v;
        }
        c
    }
}

impl RewriterConfig {
    pub fn build(&self) -> Result<Arc<dyn Rewriter>, CliError> {
        Ok(match self {
            RewriterConfig::Echo | RewriterConfig::Mock { table: None } => Arc::new(MockRewriter::echo()),
            RewriterConfig::Mock { table: Some(path) } => {
                let text = read(path)?;
                Arc::new(MockRewriter::from_json(&text).map_err(|e| CliError::config(path, e))?)
            }
            RewriterConfig::Llm(llm) => {
                let template = match &llm.template {
                    Some(path) => PromptTemplate::parse(&read(path)?, REWRITE_SLOTS)
                        .map_err(|e| CliError::config(path, e))?,
                    None => PromptTemplate::default_rewrite(),
                };
                let client = ChatClient::new(llm.client_config(), std::env::var(&llm.token_env).ok());
                Arc::new(LlmRewriter::new(client, template))
            }
        })
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        Self::parse(&read(path)?).map_err(|e| CliError::config(path, e))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.message().to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        if !(1..=5).contains(&self.history_window) {
            return Err(format!("history_window must be in 1..=5, got {}", self.history_window));
        }
        if let Some(t) = self.threshold {
            if !(t > 0.0 && t < 1.0) {
                return Err(format!("threshold must be in (0, 1), got {t}"));
            }
        }
        if self.request_timeout_ms == 0 {
            return Err("request_timeout_ms must be positive".into());
        }
        Ok(())
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_millis(self.request_timeout_ms)
    }

    pub fn lexicons(&self) -> Result<(EntityTypeLexicon, WordList), CliError> {
        load_lexicons(self.entity_types.as_deref(), self.common_words.as_deref())
    }

    /// The configured embedder, or the one the checkpoint was trained with.
    pub fn embedder_for(&self, spec: &EmbedderSpec) -> Result<Arc<dyn Embedder>, CliError> {
        match &self.embedder {
            Some(cfg) => Ok(cfg.build()),
            None => embedder_from_spec(spec),
        }
    }
}

pub fn embedder_from_spec(spec: &EmbedderSpec) -> Result<Arc<dyn Embedder>, CliError> {
    HashingEmbedder::from_spec(spec)
        .map(|e| Arc::new(e) as Arc<dyn Embedder>)
        .ok_or_else(|| {
            CliError::Usage(format!(
                "checkpoint embedder {:?} cannot be rebuilt locally; configure [embedder]",
                spec.identity
            ))
        })
}

pub fn load_lexicons(
    entity_types: Option<&Path>,
    common_words: Option<&Path>,
) -> Result<(EntityTypeLexicon, WordList), CliError> {
    let types = match entity_types {
        Some(p) => {
            let words = WordList::load(p).map_err(|e| CliError::io(p, e))?;
            EntityTypeLexicon::new(words).map_err(|e| CliError::config(p, e))?
        }
        None => EntityTypeLexicon::default_types(),
    };
    let common = match common_words {
        Some(p) => WordList::load(p).map_err(|e| CliError::io(p, e))?,
        None => WordList::default_common_words(),
    };
    Ok((types, common))
}
