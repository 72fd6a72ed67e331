//! Sentence embeddings and cosine similarity.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::net::{self, CallError, RetryPolicy};
use crate::scalar::Scalar;
use crate::store::{digest, RecordStore};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("embedding batch is empty")]
    EmptyBatch,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("provider mismatch: `{0}` vs `{1}`")]
    ProviderMismatch(String, String),
    #[error("embedding provider fault: {0}")]
    ProviderFault(String),
    #[error("embedding provider failed after {attempts} attempts: {message}")]
    Provider { message: String, attempts: u32 },
    #[error("embedding config: {0}")]
    Config(String),
    #[error("embedding cache: {0}")]
    Cache(#[from] std::io::Error),
}

/// Unit-norm vector tagged with the provider that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector<T> {
    values: Vec<T>,
    provider_id: String,
}

impl<T: Scalar> EmbeddingVector<T> {
    /// L2-normalizes `raw`. An all-zero (or empty-norm) input becomes the
    /// basis vector e0.
    pub fn normalized(raw: Vec<T>, provider_id: impl Into<String>) -> Self {
        let norm = raw.iter().map(|&v| v * v).sum::<T>().sqrt();
        let values = if norm > T::zero() && norm.is_finite() {
            raw.into_iter().map(|v| v / norm).collect()
        } else {
            basis(raw.len())
        };
        Self { values, provider_id: provider_id.into() }
    }

    pub fn basis(dimension: usize, provider_id: impl Into<String>) -> Self {
        Self { values: basis(dimension), provider_id: provider_id.into() }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn norm(&self) -> T {
        self.values.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// Rounds every component to 9 significant digits, the precision of the
    /// on-disk cache, so fresh and cached vectors are bit-identical.
    fn quantized(self) -> Self {
        let values = self.values.iter().map(|&v| parse_decimal(&to_decimal(v))).collect();
        Self { values, provider_id: self.provider_id }
    }
}

fn basis<T: Scalar>(dimension: usize) -> Vec<T> {
    let mut v = vec![T::zero(); dimension.max(1)];
    v[0] = T::one();
    v
}

fn to_decimal<T: Scalar>(v: T) -> String {
    format!("{v:.8e}")
}

fn parse_decimal<T: Scalar>(s: &str) -> T {
    s.parse().ok().expect("decimal text written by to_decimal parses")
}

/// Dot product of two unit vectors clamped to [-1, 1].
pub fn cosine_similarity<T: Scalar>(a: &EmbeddingVector<T>, b: &EmbeddingVector<T>) -> Result<T, EmbeddingError> {
    if a.provider_id != b.provider_id {
        return Err(EmbeddingError::ProviderMismatch(a.provider_id.clone(), b.provider_id.clone()));
    }
    if a.dimension() != b.dimension() {
        return Err(EmbeddingError::DimensionMismatch { expected: a.dimension(), found: b.dimension() });
    }
    let dot: T = a.values.iter().zip(&b.values).map(|(&x, &y)| x * y).sum();
    Ok(dot.max(-T::one()).min(T::one()))
}

pub(crate) fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Token-hash histogram: lowercase, split on non-alphanumerics, add 1 to
/// bucket `fnv1a64(token) % dimension` per token, L2-normalize. Text without
/// tokens maps to e0.
///
/// Panics if `dimension < 8`.
pub fn hashed_stub_embed<T: Scalar>(text: &str, dimension: usize) -> EmbeddingVector<T> {
    assert!(dimension >= 8, "hashed_stub dimension must be at least 8");
    EmbeddingVector::normalized(hashed_counts(text, dimension), hashed_stub_id(dimension))
}

fn hashed_counts<T: Scalar>(text: &str, dimension: usize) -> Vec<T> {
    let mut counts = vec![T::zero(); dimension];
    let lower = text.to_lowercase();
    for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
        let bucket = (fnv1a64(token.as_bytes()) % dimension as u64) as usize;
        counts[bucket] = counts[bucket] + T::one();
    }
    counts
}

pub fn hashed_stub_id(dimension: usize) -> String {
    format!("hashed_stub:d{dimension}")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Http,
    #[default]
    HashedStub,
}

/// How similarity values are presented in reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportAs {
    #[default]
    Similarity,
    /// `1 - similarity`
    Distance,
}

impl ReportAs {
    pub fn apply<T: Scalar>(self, similarity: T) -> T {
        match self {
            Self::Similarity => similarity,
            Self::Distance => T::one() - similarity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub dimension: usize,
    /// Accepted for config symmetry; the hashed stub is seedless.
    pub seed: Option<u64>,
    pub batch_size: usize,
    /// Defaults to `<out_dir>/cache/embeddings`.
    pub cache_dir: Option<PathBuf>,
    pub max_retries: u32,
    pub request_timeout_secs: f64,
    pub retry_base_delay_ms: u64,
    pub report_as: ReportAs,
}

impl Default for EmbeddingProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::HashedStub,
            endpoint: None,
            model: None,
            dimension: 256,
            seed: None,
            batch_size: 32,
            cache_dir: None,
            max_retries: 3,
            request_timeout_secs: 60.0,
            retry_base_delay_ms: 500,
            report_as: ReportAs::Similarity,
        }
    }
}

impl EmbeddingProviderConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        if self.batch_size == 0 {
            return Err(EmbeddingError::Config("batch_size must be at least 1".into()));
        }
        match self.kind {
            ProviderKind::HashedStub if self.dimension < 8 => {
                Err(EmbeddingError::Config("hashed_stub dimension must be at least 8".into()))
            }
            ProviderKind::Http if self.endpoint.is_none() || self.model.is_none() => {
                Err(EmbeddingError::Config("http embedder needs endpoint and model".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Source of raw (unnormalized) vectors.
pub trait EmbeddingProvider: Send + Sync {
    fn provider_id(&self) -> String;
    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, CallError>;
}

pub struct HashedStubProvider {
    dimension: usize,
}

impl HashedStubProvider {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension >= 8, "hashed_stub dimension must be at least 8");
        Self { dimension }
    }
}

impl EmbeddingProvider for HashedStubProvider {
    fn provider_id(&self) -> String {
        hashed_stub_id(self.dimension)
    }

    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, CallError> {
        Ok(texts.iter().map(|t| hashed_counts(t, self.dimension)).collect())
    }
}

/// `POST <endpoint>/v1/embeddings` with `model` and `input`.
pub struct HttpEmbeddingProvider {
    agent: ureq::Agent,
    url: String,
    model: String,
    api_key: Option<String>,
}

impl HttpEmbeddingProvider {
    pub fn new(cfg: &EmbeddingProviderConfig) -> Result<Self, EmbeddingError> {
        cfg.validate()?;
        let (Some(endpoint), Some(model)) = (&cfg.endpoint, &cfg.model) else {
            return Err(EmbeddingError::Config("http embedder needs endpoint and model".into()));
        };
        Ok(Self {
            agent: net::agent(Duration::from_secs_f64(cfg.request_timeout_secs)),
            url: net::join_url(endpoint, "v1/embeddings"),
            model: model.clone(),
            api_key: net::api_key(),
        })
    }

    /// Overrides the key taken from the environment.
    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn provider_id(&self) -> String {
        format!("http:{}", self.model)
    }

    fn embed_raw(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, CallError> {
        let body = json!({ "model": self.model, "input": texts });
        let resp = net::post_json(&self.agent, &self.url, self.api_key.as_deref(), &body)?;
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| CallError::Fatal("response has no data array".into()))?;
        let mut rows: Vec<(usize, Vec<f64>)> = data
            .iter()
            .enumerate()
            .map(|(pos, item)| {
                let index = item.get("index").and_then(Value::as_u64).map_or(pos, |i| i as usize);
                let values = item
                    .get("embedding")
                    .and_then(Value::as_array)
                    .ok_or_else(|| CallError::Fatal(format!("data[{pos}] has no embedding")))?
                    .iter()
                    .map(|v| v.as_f64().ok_or_else(|| CallError::Fatal(format!("data[{pos}] has a non-numeric value"))))
                    .collect::<Result<Vec<f64>, _>>()?;
                Ok((index, values))
            })
            .collect::<Result<_, CallError>>()?;
        rows.sort_by_key(|r| r.0);
        Ok(rows.into_iter().map(|r| r.1).collect())
    }
}

pub fn provider_from_config(cfg: &EmbeddingProviderConfig) -> Result<Arc<dyn EmbeddingProvider>, EmbeddingError> {
    cfg.validate()?;
    Ok(match cfg.kind {
        ProviderKind::HashedStub => Arc::new(HashedStubProvider::new(cfg.dimension)),
        ProviderKind::Http => Arc::new(HttpEmbeddingProvider::new(cfg)?),
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    provider_id: String,
    text_sha256: String,
    values: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    store: RecordStore,
}

impl EmbeddingCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        Ok(Self { store: RecordStore::open(dir)? })
    }

    fn key(provider_id: &str, text: &str) -> String {
        digest(&[provider_id.as_bytes(), text.as_bytes()])
    }

    pub fn get<T: Scalar>(&self, provider_id: &str, text: &str) -> std::io::Result<Option<EmbeddingVector<T>>> {
        let rec: Option<CacheRecord> = self.store.get(&Self::key(provider_id, text))?;
        Ok(rec.map(|r| EmbeddingVector {
            values: r.values.iter().map(|s| parse_decimal(s)).collect(),
            provider_id: r.provider_id,
        }))
    }

    pub fn put<T: Scalar>(&self, text: &str, v: &EmbeddingVector<T>) -> std::io::Result<()> {
        let rec = CacheRecord {
            provider_id: v.provider_id.clone(),
            text_sha256: digest(&[text.as_bytes()]),
            values: v.values.iter().map(|&x| to_decimal(x)).collect(),
        };
        self.store.put(&Self::key(&v.provider_id, text), &rec)
    }
}

/// Provider plus cache plus retry; counts provider calls.
pub struct Embedder {
    provider: Arc<dyn EmbeddingProvider>,
    provider_id: String,
    cache: EmbeddingCache,
    batch_size: usize,
    retry: RetryPolicy,
    calls: AtomicUsize,
}

impl Embedder {
    pub fn new(provider: Arc<dyn EmbeddingProvider>, cache: EmbeddingCache, cfg: &EmbeddingProviderConfig) -> Result<Self, EmbeddingError> {
        cfg.validate()?;
        Ok(Self {
            provider_id: provider.provider_id(),
            provider,
            cache,
            batch_size: cfg.batch_size,
            retry: RetryPolicy { max_retries: cfg.max_retries, base_delay: Duration::from_millis(cfg.retry_base_delay_ms) },
            calls: AtomicUsize::new(0),
        })
    }

    pub fn provider_id(&self) -> &str {
        &self.provider_id
    }

    pub fn provider_calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    /// One unit vector per text, in order. Blank texts get e0 without a
    /// provider call; everything else goes through the cache first.
    pub fn embed_batch<T: Scalar>(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector<T>>, EmbeddingError> {
        if texts.is_empty() {
            return Err(EmbeddingError::EmptyBatch);
        }
        let mut out: Vec<Option<EmbeddingVector<T>>> = vec![None; texts.len()];
        let mut misses: Vec<usize> = Vec::new();
        for (i, t) in texts.iter().enumerate() {
            if t.trim().is_empty() {
                continue;
            }
            match self.cache.get(&self.provider_id, t)? {
                Some(v) => out[i] = Some(v),
                None if misses.iter().any(|&m| texts[m] == *t) => {}
                None => misses.push(i),
            }
        }

        for chunk in misses.chunks(self.batch_size) {
            let batch: Vec<&str> = chunk.iter().map(|&i| texts[i]).collect();
            let raw = self
                .retry
                .run(|| {
                    self.calls.fetch_add(1, Ordering::Relaxed);
                    self.provider.embed_raw(&batch)
                })
                .map_err(|(e, attempts)| match e {
                    CallError::Fatal(m) => EmbeddingError::ProviderFault(m),
                    CallError::Retryable(m) => EmbeddingError::Provider { message: m, attempts },
                })?;
            if raw.len() != batch.len() {
                return Err(EmbeddingError::ProviderFault(format!(
                    "asked for {} vectors, got {}",
                    batch.len(),
                    raw.len()
                )));
            }
            let dim = raw[0].len();
            if let Some(bad) = raw.iter().find(|r| r.len() != dim) {
                return Err(EmbeddingError::DimensionMismatch { expected: dim, found: bad.len() });
            }
            for (&i, values) in chunk.iter().zip(raw) {
                let values: Vec<T> = values.into_iter().map(T::of).collect();
                let v = EmbeddingVector::normalized(values, self.provider_id.clone()).quantized();
                self.cache.put(texts[i], &v)?;
                out[i] = Some(v);
            }
        }

        let dimension = out.iter().flatten().map(|v| v.dimension()).next();
        let mut vectors = Vec::with_capacity(texts.len());
        for (i, slot) in out.into_iter().enumerate() {
            let v = match slot {
                Some(v) => v,
                None if texts[i].trim().is_empty() => {
                    let d = match dimension {
                        Some(d) => d,
                        None => self.probe_dimension()?,
                    };
                    EmbeddingVector::basis(d, self.provider_id.clone())
                }
                // duplicate of an earlier miss in this batch
                None => self.cache.get(&self.provider_id, texts[i])?.ok_or_else(|| {
                    EmbeddingError::ProviderFault("vector missing after provider call".into())
                })?,
            };
            if let Some(d) = dimension {
                if v.dimension() != d {
                    return Err(EmbeddingError::DimensionMismatch { expected: d, found: v.dimension() });
                }
            }
            vectors.push(v);
        }
        Ok(vectors)
    }

    fn probe_dimension(&self) -> Result<usize, EmbeddingError> {
        // all-blank batch: ask the provider once for the dimension
        let probe = "dimension probe";
        if let Some(v) = self.cache.get::<f64>(&self.provider_id, probe)? {
            return Ok(v.dimension());
        }
        Ok(self.embed_batch::<f64>(&[probe])?[0].dimension())
    }
}
