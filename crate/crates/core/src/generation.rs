//! Completion collection: `samples_per_template` independent completions for
//! every (term, template), served from a content-addressed cache when possible.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::net::{self, CallError, RateLimiter, RetryPolicy};
use crate::prompting::{PromptError, PromptTemplate};
use crate::store::{digest, RecordStore};

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("generation config: {0}")]
    Config(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("completion cache: {0}")]
    Cache(#[from] std::io::Error),
    #[error("`{term}`: {failure} ({} completions kept)", .completed.len())]
    Partial { term: String, completed: Vec<Completion>, failure: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    #[default]
    Stub,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureMode {
    /// Leave `temperature` out of the request.
    #[default]
    BackendDefault,
    Explicit(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub samples_per_template: usize,
    pub temperature_mode: TemperatureMode,
    pub max_retries: u32,
    pub request_timeout_secs: f64,
    pub retry_base_delay_ms: u64,
    /// Requests per second across all workers; 0 disables the cap.
    pub rate_limit: f64,
    /// Terms generated concurrently.
    pub workers: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Stub,
            endpoint: None,
            model_name: "stub".into(),
            samples_per_template: 5,
            temperature_mode: TemperatureMode::BackendDefault,
            max_retries: 3,
            request_timeout_secs: 60.0,
            retry_base_delay_ms: 500,
            rate_limit: 0.0,
            workers: 4,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.samples_per_template == 0 {
            return Err(GenerationError::Config("samples_per_template must be at least 1".into()));
        }
        if self.backend == BackendKind::HttpChat && self.endpoint.is_none() {
            return Err(GenerationError::Config("http_chat backend needs an endpoint".into()));
        }
        if self.model_name.is_empty() {
            return Err(GenerationError::Config("model_name is empty".into()));
        }
        Ok(())
    }

    fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy { max_retries: self.max_retries, base_delay: Duration::from_millis(self.retry_base_delay_ms) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub template_id: String,
    pub sample_index: usize,
    pub prompt: String,
    /// Trimmed at both ends, otherwise verbatim.
    pub text: String,
    /// Set when the backend answered with no text.
    pub empty: bool,
    pub created_at: String,
    pub backend: Value,
}

/// All completions for one term ordered by (template position, sample index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionSet {
    pub term: String,
    pub model_name: String,
    pub completions: Vec<Completion>,
}

impl CompletionSet {
    pub fn get(&self, template_id: &str, sample_index: usize) -> Option<&Completion> {
        self.completions
            .iter()
            .find(|c| c.template_id == template_id && c.sample_index == sample_index)
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.completions.iter().map(|c| c.text.as_str())
    }

    /// Completion indices grouped by template id.
    pub fn groups(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut g: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, c) in self.completions.iter().enumerate() {
            g.entry(c.template_id.as_str()).or_default().push(i);
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub text: String,
    pub metadata: Value,
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, prompt: &str, sample_index: usize) -> Result<BackendReply, CallError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheRecord {
    model_name: String,
    template_id: String,
    prompt: String,
    sample_index: usize,
    text: String,
    empty: bool,
    created_at: String,
    backend: Value,
}

/// Completion cache keyed by (model, template id, rendered prompt, sample index).
#[derive(Debug, Clone)]
pub struct CompletionCache {
    store: RecordStore,
}

impl CompletionCache {
    pub fn open(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        Ok(Self { store: RecordStore::open(dir)? })
    }

    fn key(model: &str, template_id: &str, prompt: &str, sample_index: usize) -> String {
        digest(&[
            model.as_bytes(),
            template_id.as_bytes(),
            prompt.as_bytes(),
            sample_index.to_string().as_bytes(),
        ])
    }

    pub fn get(&self, model: &str, template_id: &str, prompt: &str, sample_index: usize) -> std::io::Result<Option<Completion>> {
        let rec: Option<CacheRecord> = self.store.get(&Self::key(model, template_id, prompt, sample_index))?;
        Ok(rec.map(|r| Completion {
            template_id: r.template_id,
            sample_index: r.sample_index,
            prompt: r.prompt,
            text: r.text,
            empty: r.empty,
            created_at: r.created_at,
            backend: r.backend,
        }))
    }

    pub fn put(&self, model: &str, c: &Completion) -> std::io::Result<()> {
        let rec = CacheRecord {
            model_name: model.to_string(),
            template_id: c.template_id.clone(),
            prompt: c.prompt.clone(),
            sample_index: c.sample_index,
            text: c.text.clone(),
            empty: c.empty,
            created_at: c.created_at.clone(),
            backend: c.backend.clone(),
        };
        self.store.put(&Self::key(model, &c.template_id, &c.prompt, c.sample_index), &rec)
    }
}

/// Drives a backend through the cache with retries, rate limiting and a
/// bounded worker pool. Counts every backend call it makes.
pub struct Generator {
    backend: Arc<dyn CompletionBackend>,
    cache: CompletionCache,
    cfg: GenerationConfig,
    limiter: RateLimiter,
    calls: AtomicUsize,
}

impl Generator {
    pub fn new(backend: Arc<dyn CompletionBackend>, cache: CompletionCache, cfg: GenerationConfig) -> Result<Self, GenerationError> {
        cfg.validate()?;
        Ok(Self { backend, cache, limiter: RateLimiter::per_second(cfg.rate_limit), cfg, calls: AtomicUsize::new(0) })
    }

    pub fn backend_calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn generate_for_term(&self, term: &str, templates: &[PromptTemplate]) -> Result<CompletionSet, GenerationError> {
        let model = &self.cfg.model_name;
        let policy = self.cfg.retry_policy();
        let mut completions = Vec::with_capacity(templates.len() * self.cfg.samples_per_template);
        for t in templates {
            let prompt = t.render(term)?;
            for sample_index in 0..self.cfg.samples_per_template {
                if let Some(hit) = self.cache.get(model, &t.id, &prompt, sample_index)? {
                    completions.push(hit);
                    continue;
                }
                let reply = policy.run(|| {
                    self.limiter.acquire();
                    self.calls.fetch_add(1, Ordering::Relaxed);
                    self.backend.complete(&prompt, sample_index)
                });
                let reply = match reply {
                    Ok(r) => r,
                    Err((e, attempts)) => {
                        return Err(GenerationError::Partial {
                            term: term.to_string(),
                            completed: completions,
                            failure: format!("{} sample {sample_index} failed after {attempts} attempts: {e}", t.id),
                        })
                    }
                };
                let text = reply.text.trim().to_string();
                if text.is_empty() {
                    log::warn!("empty completion for `{term}` ({} sample {sample_index})", t.id);
                }
                let c = Completion {
                    template_id: t.id.clone(),
                    sample_index,
                    prompt: prompt.clone(),
                    empty: text.is_empty(),
                    text,
                    created_at: now_rfc3339(),
                    backend: reply.metadata,
                };
                self.cache.put(model, &c)?;
                completions.push(c);
            }
        }
        Ok(CompletionSet { term: term.to_string(), model_name: model.clone(), completions })
    }

    /// Generates for every term with at most `workers` terms in flight. Results
    /// come back in input order regardless of scheduling.
    pub fn generate_all(&self, terms: &[String], templates: &[PromptTemplate]) -> Vec<Result<CompletionSet, GenerationError>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.workers.max(1))
            .build()
            .expect("thread pool");
        pool.install(|| terms.par_iter().map(|t| self.generate_for_term(t, templates)).collect())
    }
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

const STUB_VOCABULARY: &[&str] = &[
    "the", "of", "a", "and", "to", "in", "that", "is", "by", "or", "for", "with", "process", "change",
    "climate", "system", "carbon", "emissions", "land", "water", "energy", "human", "natural", "risk",
    "adaptation", "mitigation", "ocean", "atmosphere", "surface", "temperature", "policy", "measure",
    "response", "impact", "region", "period", "global", "local", "increase", "reduction", "resource",
    "ecosystem", "society", "activity", "level", "condition", "effect", "future", "term", "describes",
    "refers", "set", "long", "over", "time", "when", "such", "as", "its", "which", "between", "through",
    "within", "sustainable",
];

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Offline pseudo-definition. The FNV-1a 64 hash of
/// `seed (u64 LE) ‖ sample_index (u64 LE) ‖ prompt (UTF-8)` seeds a SplitMix64
/// stream; the first draw picks a length of 8..=20 words, each later draw picks
/// `STUB_VOCABULARY[draw % len]`. The first word is capitalized and a period
/// closes the sentence.
pub fn stub_complete(prompt: &str, sample_index: usize, seed: u64) -> String {
    let mut bytes = Vec::with_capacity(16 + prompt.len());
    bytes.extend_from_slice(&seed.to_le_bytes());
    bytes.extend_from_slice(&(sample_index as u64).to_le_bytes());
    bytes.extend_from_slice(prompt.as_bytes());
    let mut state = fnv1a64(&bytes);
    let n = 8 + (splitmix64(&mut state) % 13) as usize;
    let words: Vec<&str> = (0..n)
        .map(|_| STUB_VOCABULARY[(splitmix64(&mut state) % STUB_VOCABULARY.len() as u64) as usize])
        .collect();
    let mut out = words.join(" ");
    if let Some(first) = out.get(..1) {
        let upper = first.to_ascii_uppercase();
        out.replace_range(..1, &upper);
    }
    out.push('.');
    out
}

pub struct StubBackend {
    seed: u64,
}

impl StubBackend {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl CompletionBackend for StubBackend {
    fn complete(&self, prompt: &str, sample_index: usize) -> Result<BackendReply, CallError> {
        Ok(BackendReply {
            text: stub_complete(prompt, sample_index, self.seed),
            metadata: json!({ "kind": "stub", "seed": self.seed }),
        })
    }
}

/// OpenAI-compatible `POST <endpoint>/v1/chat/completions`, one user message,
/// `n = 1` per request.
pub struct HttpChatBackend {
    agent: ureq::Agent,
    url: String,
    model: String,
    temperature: TemperatureMode,
    api_key: Option<String>,
}

impl HttpChatBackend {
    pub fn new(cfg: &GenerationConfig) -> Result<Self, GenerationError> {
        let endpoint = cfg
            .endpoint
            .as_deref()
            .ok_or_else(|| GenerationError::Config("http_chat backend needs an endpoint".into()))?;
        Ok(Self {
            agent: net::agent(Duration::from_secs_f64(cfg.request_timeout_secs)),
            url: net::join_url(endpoint, "v1/chat/completions"),
            model: cfg.model_name.clone(),
            temperature: cfg.temperature_mode,
            api_key: net::api_key(),
        })
    }

    /// Overrides the key taken from the environment.
    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        let mut body = json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt }],
            "n": 1,
        });
        if let TemperatureMode::Explicit(t) = self.temperature {
            body["temperature"] = json!(t);
        }
        body
    }
}

impl CompletionBackend for HttpChatBackend {
    fn complete(&self, prompt: &str, _sample_index: usize) -> Result<BackendReply, CallError> {
        let resp = net::post_json(&self.agent, &self.url, self.api_key.as_deref(), &self.request_body(prompt))?;
        let choice = resp
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| CallError::Fatal("response has no choices".into()))?;
        let text = choice
            .pointer("/message/content")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let metadata = json!({
            "kind": "http_chat",
            "id": resp.get("id"),
            "model": resp.get("model"),
            "finish_reason": choice.get("finish_reason"),
        });
        Ok(BackendReply { text, metadata })
    }
}

pub fn backend_from_config(cfg: &GenerationConfig, seed: u64) -> Result<Arc<dyn CompletionBackend>, GenerationError> {
    Ok(match cfg.backend {
        BackendKind::Stub => Arc::new(StubBackend::new(seed)),
        BackendKind::HttpChat => Arc::new(HttpChatBackend::new(cfg)?),
    })
}
