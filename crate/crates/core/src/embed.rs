//! Sentence embedders: an offline character-trigram hashing embedder and a
//! client for a remote embedding service.

use std::hash::Hasher;
use std::sync::Arc;
use std::time::Duration;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::error::{DimensionMismatch, EmbedError};
use crate::sync::Semaphore;

/// Dimension of the default (mpnet-sized) backbone.
pub const DEFAULT_DIM: usize = 768;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// Scales to unit L2 norm; a zero vector is returned unchanged.
    pub fn normalized(mut values: Vec<f64>) -> Self {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64, DimensionMismatch> {
    if a.dim() != b.dim() {
        return Err(DimensionMismatch { left: a.dim(), right: b.dim() });
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    let denom = a.norm() * b.norm();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / denom).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    Hashing,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub kind: EmbedderKind,
    pub dim: usize,
    pub identity: String,
}

pub trait Embedder: Send + Sync {
    fn spec(&self) -> &EmbedderSpec;

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError>;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

impl<E: Embedder + ?Sized> Embedder for Arc<E> {
    fn spec(&self) -> &EmbedderSpec {
        (**self).spec()
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        (**self).embed(text)
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        (**self).embed_batch(texts)
    }
}

/// Signed feature hashing of lowercased character trigrams into `dim`
/// buckets, followed by L2 normalization.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    spec: EmbedderSpec,
    seed: u64,
}

impl HashingEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            spec: EmbedderSpec {
                kind: EmbedderKind::Hashing,
                dim,
                identity: format!("hashing-trigram-v1:seed={seed}:dim={dim}"),
            },
            seed,
        }
    }

    /// Rebuilds an embedder from its identity string.
    pub fn from_spec(spec: &EmbedderSpec) -> Option<Self> {
        let rest = spec.identity.strip_prefix("hashing-trigram-v1:seed=")?;
        let (seed, dim) = rest.split_once(":dim=")?;
        let e = Self::new(dim.parse().ok()?, seed.parse().ok()?);
        (e.spec == *spec).then_some(e)
    }

    fn bucket(&self, gram: &[char]) -> (usize, f64) {
        let mut h = FnvHasher::with_key(0xcbf2_9ce4_8422_2325 ^ self.seed);
        for c in gram {
            h.write_u32(*c as u32);
        }
        let v = h.finish();
        let sign = if v >> 63 == 0 { 1.0 } else { -1.0 };
        ((v % self.spec.dim as u64) as usize, sign)
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_DIM, 0)
    }
}

impl Embedder for HashingEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut padded = vec![' '];
        for (i, word) in text.split_whitespace().enumerate() {
            if i > 0 {
                padded.push(' ');
            }
            padded.extend(word.chars().flat_map(char::to_lowercase));
        }
        padded.push(' ');

        let mut values = vec![0.0; self.spec.dim];
        for gram in padded.windows(3) {
            let (idx, sign) = self.bucket(gram);
            values[idx] += sign;
        }
        let e = Embedding::normalized(values);
        if e.norm() == 0.0 {
            // every trigram cancelled out; fall back to a fixed bucket
            let mut values = vec![0.0; self.spec.dim];
            values[self.bucket(&padded[..3]).0] = 1.0;
            return Ok(Embedding::new(values));
        }
        Ok(e)
    }
}

#[derive(Debug, Clone)]
pub struct RemoteEmbedderConfig {
    pub endpoint: String,
    pub model: String,
    pub dim: usize,
    /// Bearer token, read by the caller from the environment.
    pub token: Option<String>,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Client for an embedding service speaking `{texts} -> {vectors}` JSON over HTTP.
pub struct RemoteEmbedder {
    spec: EmbedderSpec,
    config: RemoteEmbedderConfig,
    agent: ureq::Agent,
    in_flight: Semaphore,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            spec: EmbedderSpec {
                kind: EmbedderKind::Remote,
                dim: config.dim,
                identity: config.model.clone(),
            },
            in_flight: Semaphore::new(config.max_in_flight.max(1)),
            config,
            agent,
        }
    }

    fn call(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let _permit = self.in_flight.acquire();
        let mut req = self.agent.post(&self.config.endpoint);
        if let Some(token) = &self.config.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = req.send_json(EmbedRequest { texts }).map_err(|e| match e {
            ureq::Error::Timeout(_) => EmbedError::Timeout,
            other => EmbedError::Transport(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(EmbedError::Status(status));
        }
        let body: EmbedResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| EmbedError::InvalidResponse(e.to_string()))?;
        Ok(body.vectors)
    }
}

impl Embedder for RemoteEmbedder {
    fn spec(&self) -> &EmbedderSpec {
        &self.spec
    }

    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        Ok(self.embed_batch(&[text])?.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding>, EmbedError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbedError::EmptyText);
        }
        let vectors = self.call(texts)?;
        if vectors.len() != texts.len() {
            return Err(EmbedError::InvalidResponse(format!(
                "expected {} vectors, got {}",
                texts.len(),
                vectors.len()
            )));
        }
        vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.spec.dim {
                    return Err(EmbedError::DimensionMismatch {
                        expected: self.spec.dim,
                        actual: v.len(),
                    });
                }
                let e = Embedding::normalized(v);
                if e.norm() == 0.0 {
                    return Err(EmbedError::InvalidResponse("zero vector".into()));
                }
                Ok(e)
            })
            .collect()
    }
}
