//! HTTP plumbing shared by the chat and embedding clients.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde_json::Value;

/// Bearer token for both chat and embedding services.
pub const API_KEY_ENV: &str = "GLOSSGAUGE_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallError {
    /// Connection, timeout or non-success status; worth retrying.
    Retryable(String),
    /// The service answered with something we cannot use.
    Fatal(String),
}

impl std::fmt::Display for CallError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Retryable(m) | Self::Fatal(m) => f.write_str(m),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl RetryPolicy {
    /// Runs `call` until it succeeds, fails fatally, or `max_retries` retries
    /// are used up. The delay before retry `k` (0-based) is `base_delay * 2^k`.
    /// Returns the final error together with the number of attempts made.
    pub fn run<T>(&self, mut call: impl FnMut() -> Result<T, CallError>) -> Result<T, (CallError, u32)> {
        let mut attempt = 0;
        loop {
            match call() {
                Ok(v) => return Ok(v),
                Err(CallError::Retryable(_)) if attempt < self.max_retries => {
                    thread::sleep(self.base_delay.saturating_mul(1 << attempt.min(16)));
                    attempt += 1;
                }
                Err(e) => return Err((e, attempt + 1)),
            }
        }
    }
}

/// Spaces calls at least `1 / rate` seconds apart across all threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Option<Duration>,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    /// A non-positive or non-finite rate disables limiting.
    pub fn per_second(rate: f64) -> Self {
        let interval = (rate.is_finite() && rate > 0.0).then(|| Duration::from_secs_f64(1.0 / rate));
        Self { interval, next_slot: Mutex::new(None) }
    }

    pub fn acquire(&self) {
        let Some(interval) = self.interval else { return };
        let wait = {
            let mut slot = self.next_slot.lock().expect("rate limiter lock");
            let now = Instant::now();
            let at = slot.map_or(now, |s| s.max(now));
            *slot = Some(at + interval);
            at - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

pub fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

pub fn api_key() -> Option<String> {
    std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty())
}

/// `<endpoint>/<path>` without doubling the slash.
pub fn join_url(endpoint: &str, path: &str) -> String {
    format!("{}/{}", endpoint.trim_end_matches('/'), path.trim_start_matches('/'))
}

/// One POST with a JSON body. Status >= 400 and transport failures are
/// retryable; an unparsable success body is fatal.
pub fn post_json(agent: &ureq::Agent, url: &str, key: Option<&str>, body: &Value) -> Result<Value, CallError> {
    let mut req = agent.post(url).header("Content-Type", "application/json");
    if let Some(k) = key {
        req = req.header("Authorization", &format!("Bearer {k}"));
    }
    let mut resp = req
        .send(body.to_string())
        .map_err(|e| CallError::Retryable(format!("POST {url}: {e}")))?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| CallError::Retryable(format!("POST {url}: reading body: {e}")))?;
    if status >= 400 {
        let snippet: String = text.chars().take(200).collect();
        return Err(CallError::Retryable(format!("POST {url}: HTTP {status}: {snippet}")));
    }
    serde_json::from_str(&text).map_err(|e| CallError::Fatal(format!("POST {url}: invalid JSON response: {e}")))
}
