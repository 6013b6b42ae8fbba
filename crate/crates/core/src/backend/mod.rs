//! Model gateway: one interface over a live chat-completion client and a
//! scripted fixture backend, with an on-disk response cache, retries with
//! jittered exponential backoff and a bound on in-flight requests.

mod cache;
mod http;
mod scripted;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use chrono::{DateTime, SecondsFormat, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheEntry, CacheKey, ResponseCache};
pub use http::{request_body, HttpBackend};
pub use scripted::{write_fixtures, Fixture, ScriptedBackend};

use crate::prompt::{DecodingParams, PromptBundle, StrategyId};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    TransportError { attempts: u32, message: String },
    #[error("authentication failed: {0}")]
    AuthError(String),
    #[error("provider returned {status}: {message}")]
    ProviderError { status: u16, message: String },
    #[error("request timed out after {attempts} attempt(s) of {timeout_ms} ms")]
    TimeoutError { attempts: u32, timeout_ms: u64 },
    #[error("no fixture for prompt {prompt_hash} sample {sample_index}")]
    FixtureMiss {
        prompt_hash: String,
        sample_index: u32,
    },
    #[error("cache: {0}")]
    Cache(String),
    #[error("backend config: {0}")]
    Config(String),
    #[error("sample {index}: {source}")]
    Sample {
        index: u32,
        #[source]
        source: Box<BackendError>,
    },
}

pub type Result<T, E = BackendError> = std::result::Result<T, E>;

/// Outcome of a single attempt. Only transient failures and timeouts are
/// retried.
#[derive(Debug)]
pub enum CallError {
    Transient(String),
    Timeout,
    Fatal(BackendError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
    #[serde(default = "default_max_backoff")]
    pub max_backoff_ms: u64,
}

fn default_max_backoff() -> u64 {
    30_000
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_backoff_ms: 500,
            max_backoff_ms: default_max_backoff(),
        }
    }
}

impl RetryPolicy {
    /// Full jitter: uniform in `[0, min(cap, base × 2^attempt)]`.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let ceiling = self
            .base_backoff_ms
            .saturating_mul(1u64 << attempt.min(32))
            .min(self.max_backoff_ms);
        if ceiling == 0 {
            return Duration::ZERO;
        }
        Duration::from_millis(rand::rng().random_range(0..=ceiling))
    }
}

fn default_timeout() -> u64 {
    120_000
}

fn default_parallelism() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(alias = "backend_kind")]
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_ref: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// Fixture JSONL for the scripted backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures: Option<PathBuf>,
}

impl BackendConfig {
    pub fn scripted(model_name: impl Into<String>) -> Self {
        BackendConfig {
            kind: BackendKind::Scripted,
            endpoint: None,
            model_name: model_name.into(),
            auth_ref: None,
            timeout_ms: default_timeout(),
            retry: RetryPolicy::default(),
            parallelism: default_parallelism(),
            fixtures: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: BackendConfig =
            toml::from_str(text).map_err(|e| BackendError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Load a standalone backend file; a relative fixtures path is taken
    /// relative to the file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_toml_str(&text)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(f) = &self.fixtures {
            if f.is_relative() {
                self.fixtures = Some(base.join(f));
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(BackendError::Config(m.to_string()));
        if self.retry.max_attempts == 0 {
            return bad("retry.max_attempts must be at least 1");
        }
        if self.parallelism == 0 {
            return bad("parallelism must be at least 1");
        }
        if self.model_name.trim().is_empty() {
            return bad("model_name is empty");
        }
        match (self.kind, &self.endpoint) {
            (BackendKind::Http, None) => bad("http backend needs an endpoint"),
            (BackendKind::Scripted, Some(_)) => bad("endpoint is only valid for the http backend"),
            _ => Ok(()),
        }
    }
}

/// What a backend receives for one attempt.
#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub model: &'a str,
    pub prompt: &'a str,
    pub system: Option<&'a str>,
    pub prompt_hash: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
    pub sample_index: u32,
}

pub trait Backend: Send + Sync {
    fn call(&self, req: &CompletionRequest<'_>) -> Result<String, CallError>;
}

/// Timestamps and latencies. A frozen clock pins both, which makes run
/// artifacts byte-reproducible.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Clock {
    #[default]
    System,
    Frozen(DateTime<Utc>),
}

impl Clock {
    pub fn now(&self) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now(),
            Clock::Frozen(t) => *t,
        }
    }

    pub fn timestamp(&self) -> String {
        self.now().to_rfc3339_opts(SecondsFormat::Millis, true)
    }

    fn elapsed_ms(&self, start: Instant) -> u64 {
        match self {
            Clock::System => start.elapsed().as_millis() as u64,
            Clock::Frozen(_) => 0,
        }
    }
}

/// One model output with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub run_id: String,
    pub task_id: String,
    pub instance_id: String,
    pub strategy: StrategyId,
    pub sample_index: u32,
    pub prompt_hash: String,
    pub raw_text: String,
    pub model_name: String,
    pub decoding: DecodingParams,
    pub latency_ms: u64,
    pub created_at: String,
    pub from_cache: bool,
}

/// Who a request is for; copied onto the transcript.
#[derive(Debug, Clone, Copy)]
pub struct RequestContext<'a> {
    pub run_id: &'a str,
    pub task_id: &'a str,
    pub instance_id: &'a str,
}

struct Semaphore {
    free: Mutex<usize>,
    cond: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            free: Mutex::new(n),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("semaphore poisoned");
        while *free == 0 {
            free = self.cond.wait(free).expect("semaphore poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore poisoned") += 1;
        self.0.cond.notify_one();
    }
}

/// Cache-first access to a backend. Safe to share across threads; at most
/// `parallelism` backend calls are in flight at once.
pub struct Gateway {
    config: BackendConfig,
    backend: Box<dyn Backend>,
    cache: Option<ResponseCache>,
    clock: Clock,
    permits: Semaphore,
    calls: AtomicU64,
    in_flight: AtomicU64,
    peak_in_flight: AtomicU64,
}

impl Gateway {
    pub fn new(config: BackendConfig, backend: Box<dyn Backend>) -> Self {
        let permits = Semaphore::new(config.parallelism.max(1));
        Gateway {
            config,
            backend,
            cache: None,
            clock: Clock::System,
            permits,
            calls: AtomicU64::new(0),
            in_flight: AtomicU64::new(0),
            peak_in_flight: AtomicU64::new(0),
        }
    }

    /// Build the backend the config names.
    pub fn from_config(config: BackendConfig) -> Result<Self> {
        config.validate()?;
        let backend: Box<dyn Backend> = match config.kind {
            BackendKind::Http => Box::new(HttpBackend::new(&config)?),
            BackendKind::Scripted => {
                let path = config.fixtures.as_ref().ok_or_else(|| {
                    BackendError::Config("scripted backend needs a fixtures file".into())
                })?;
                Box::new(ScriptedBackend::from_jsonl(path)?)
            }
        };
        Ok(Self::new(config, backend))
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    /// Backend attempts made so far, retries included.
    pub fn backend_calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Most backend calls observed in flight at once.
    pub fn peak_in_flight(&self) -> u64 {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    pub fn cache_key(&self, bundle: &PromptBundle, sample_index: u32) -> CacheKey {
        CacheKey {
            model_name: self.config.model_name.clone(),
            prompt_hash: bundle.prompt_hash.clone(),
            temperature: bundle.decoding.temperature,
            max_tokens: bundle.decoding.max_tokens,
            sample_index,
            system_hash: bundle
                .system
                .as_deref()
                .map(|s| crate::digest_hex(s.as_bytes())),
        }
    }

    pub fn complete(
        &self,
        ctx: RequestContext<'_>,
        bundle: &PromptBundle,
        sample_index: u32,
    ) -> Result<Transcript> {
        if sample_index >= bundle.decoding.sample_count {
            return Err(BackendError::Config(format!(
                "sample {sample_index} requested, decoding draws {}",
                bundle.decoding.sample_count
            )));
        }
        let key = self.cache_key(bundle, sample_index);
        let transcript = |raw_text: String, latency_ms: u64, from_cache: bool| Transcript {
            run_id: ctx.run_id.to_string(),
            task_id: ctx.task_id.to_string(),
            instance_id: ctx.instance_id.to_string(),
            strategy: bundle.strategy,
            sample_index,
            prompt_hash: bundle.prompt_hash.clone(),
            raw_text,
            model_name: self.config.model_name.clone(),
            decoding: bundle.decoding,
            latency_ms,
            created_at: self.clock.timestamp(),
            from_cache,
        };

        if let Some(cache) = &self.cache {
            if let Some(entry) = cache.get(&key)? {
                log::debug!("cache hit {} sample {sample_index}", bundle.prompt_hash);
                return Ok(transcript(entry.raw_text, 0, true));
            }
        }

        let request = CompletionRequest {
            model: &self.config.model_name,
            prompt: &bundle.text,
            system: bundle.system.as_deref(),
            prompt_hash: &bundle.prompt_hash,
            temperature: bundle.decoding.temperature,
            max_tokens: bundle.decoding.max_tokens,
            sample_index,
        };
        let start = Instant::now();
        let raw_text = self.call_with_retry(&request)?;
        let latency = self.clock.elapsed_ms(start);

        if let Some(cache) = &self.cache {
            cache.put(&CacheEntry {
                key,
                raw_text: raw_text.clone(),
                created_at: self.clock.timestamp(),
            })?;
        }
        Ok(transcript(raw_text, latency, false))
    }

    fn call_with_retry(&self, request: &CompletionRequest<'_>) -> Result<String> {
        let policy = &self.config.retry;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let outcome = {
                let _permit = self.permits.acquire();
                self.calls.fetch_add(1, Ordering::SeqCst);
                let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
                self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
                let out = self.backend.call(request);
                self.in_flight.fetch_sub(1, Ordering::SeqCst);
                out
            };
            let last = match outcome {
                Ok(text) => return Ok(text),
                Err(CallError::Fatal(e)) => return Err(e),
                Err(e) => e,
            };
            if attempt >= policy.max_attempts {
                return Err(match last {
                    CallError::Timeout => BackendError::TimeoutError {
                        attempts: attempt,
                        timeout_ms: self.config.timeout_ms,
                    },
                    CallError::Transient(message) => BackendError::TransportError {
                        attempts: attempt,
                        message,
                    },
                    CallError::Fatal(_) => unreachable!("fatal errors return immediately"),
                });
            }
            let wait = policy.backoff(attempt - 1);
            log::warn!(
                "attempt {attempt}/{} for {} failed ({last:?}); retrying in {wait:?}",
                policy.max_attempts,
                request.prompt_hash
            );
            std::thread::sleep(wait);
        }
    }

    /// All samples the bundle's decoding asks for, in index order.
    ///
    /// Samples run concurrently under the gateway's in-flight bound. Each
    /// finished sample is cached before any error is returned; the error
    /// names the lowest failing index.
    pub fn complete_samples(
        &self,
        ctx: RequestContext<'_>,
        bundle: &PromptBundle,
    ) -> Result<Vec<Transcript>> {
        let n = bundle.decoding.sample_count;
        let results: Vec<Result<Transcript>> = if n == 1 || self.config.parallelism == 1 {
            (0..n).map(|i| self.complete(ctx, bundle, i)).collect()
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..n)
                    .map(|i| s.spawn(move || self.complete(ctx, bundle, i)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("sample thread panicked"))
                    .collect()
            })
        };
        let mut out = Vec::with_capacity(n as usize);
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(t) => out.push(t),
                Err(e) => {
                    return Err(BackendError::Sample {
                        index: i as u32,
                        source: Box::new(e),
                    })
                }
            }
        }
        Ok(out)
    }
}
