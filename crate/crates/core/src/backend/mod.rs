//! Chat-completion access: live HTTP, record/replay cache, throttling,
//! retries, a deterministic mock and cost accounting.
//!
//! Backends compose as layers around [`ChatBackend`]:
//! `Cached(Retrying(Throttled(Http)))` in record mode,
//! `Retrying(Throttled(Http))` in live mode and a bare `Cached` store in
//! replay mode, which never touches the network.

pub mod cache;
pub mod cost;
pub mod http;
pub mod mock;
pub mod retry;
pub mod throttle;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::digest::fields_digest;
use crate::jsonl::JsonlError;

pub use cache::{CacheMode, CachedBackend, CompletionRecord, CompletionStore};
pub use cost::{count_tokens, estimate_cost, Pricing, RunPlan};
pub use http::HttpBackend;
pub use mock::{MockBackend, RuleFollowingResponder};
pub use retry::{RetryPolicy, RetryingBackend};
pub use throttle::{Clock, RateLimiter, SystemClock, ThrottledBackend, VirtualClock};

pub const API_KEY_ENV: &str = "RUBRICATE_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CompletionRequest {
    pub prompt: String,
    /// 0 for the first ask; a re-ask uses 1 so it gets its own cache slot.
    pub attempt: u32,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            attempt: 0,
        }
    }

    pub fn reask(prompt: impl Into<String>) -> Self {
        CompletionRequest {
            prompt: prompt.into(),
            attempt: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("replay fixture missing for cache key {key}")]
    FixtureMissing { key: String },
    #[error("retryable backend error: {0}")]
    Retryable(String),
    #[error("backend error: {0}")]
    Fatal(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("completion store: {0}")]
    Store(#[from] JsonlError),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Retryable(_))
    }
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError>;
}

#[async_trait]
impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    async fn complete(&self, request: &CompletionRequest) -> Result<Completion, BackendError> {
        (**self).complete(request).await
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Live => "live",
            Mode::Record => "record",
            Mode::Replay => "replay",
        })
    }
}

impl FromStr for Mode {
    type Err = BackendError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            other => Err(BackendError::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

fn default_endpoint() -> String {
    "https://api.openai.com/v1".to_string()
}
fn default_model() -> String {
    "gpt-3.5-turbo".to_string()
}
fn default_concurrency() -> usize {
    4
}
fn default_rpm() -> u32 {
    60
}
fn default_price_in() -> f64 {
    0.0015
}
fn default_price_out() -> f64 {
    0.002
}
fn default_timeout() -> u64 {
    60
}
fn default_max_retries() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default = "default_endpoint")]
    pub endpoint_url: String,
    #[serde(default = "default_model")]
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default = "default_rpm")]
    pub requests_per_minute: u32,
    #[serde(default = "default_price_in")]
    pub price_per_1k_input_tokens: f64,
    #[serde(default = "default_price_out")]
    pub price_per_1k_output_tokens: f64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            endpoint_url: default_endpoint(),
            model_name: default_model(),
            temperature: 0.0,
            max_concurrency: default_concurrency(),
            requests_per_minute: default_rpm(),
            price_per_1k_input_tokens: default_price_in(),
            price_per_1k_output_tokens: default_price_out(),
            timeout_secs: default_timeout(),
            max_retries: default_max_retries(),
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: String| Err(BackendError::InvalidConfig(m));
        if self.model_name.trim().is_empty() {
            return bad("model_name is empty".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.max_concurrency == 0 {
            return bad("max_concurrency must be positive".into());
        }
        if self.requests_per_minute == 0 {
            return bad("requests_per_minute must be positive".into());
        }
        if self.timeout_secs == 0 {
            return bad("timeout_secs must be positive".into());
        }
        for (name, price) in [
            ("price_per_1k_input_tokens", self.price_per_1k_input_tokens),
            ("price_per_1k_output_tokens", self.price_per_1k_output_tokens),
        ] {
            if !price.is_finite() || price < 0.0 {
                return bad(format!("{name} must be a non-negative number"));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<BackendConfig, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let config: BackendConfig =
            toml::from_str(&text).map_err(|e| BackendError::InvalidConfig(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn pricing(&self) -> Pricing {
        Pricing {
            per_1k_input: self.price_per_1k_input_tokens,
            per_1k_output: self.price_per_1k_output_tokens,
        }
    }

    /// Digest of the settings that can change a response. Endpoint, caps
    /// and prices are excluded so a recorded run can be resumed in replay.
    pub fn digest(&self) -> String {
        let temperature = format!("{:?}", self.temperature);
        fields_digest([self.model_name.as_str(), temperature.as_str()])
    }
}

/// Where a backend built by [`build_backend`] keeps its completion store.
pub fn completion_store_path(cache_dir: &Path) -> PathBuf {
    cache_dir.join("completions.jsonl")
}

/// Builds the layered backend for `mode`.
pub fn build_backend(
    config: &BackendConfig,
    mode: Mode,
    cache_dir: &Path,
) -> Result<Arc<dyn ChatBackend>, BackendError> {
    config.validate()?;
    let live = || -> Result<Arc<dyn ChatBackend>, BackendError> {
        let clock: Arc<dyn Clock> = Arc::new(SystemClock::new());
        let http = HttpBackend::new(config)?;
        let throttled = ThrottledBackend::new(http, config.requests_per_minute, config.max_concurrency, clock.clone());
        Ok(Arc::new(RetryingBackend::new(
            throttled,
            RetryPolicy::new(config.max_retries, Duration::from_millis(500)),
            clock,
        )))
    };
    Ok(match mode {
        Mode::Live => live()?,
        Mode::Record => {
            let store = CompletionStore::open(&completion_store_path(cache_dir))?;
            Arc::new(CachedBackend::record(Arc::new(store), config, live()?))
        }
        Mode::Replay => {
            let store = CompletionStore::open(&completion_store_path(cache_dir))?;
            Arc::new(CachedBackend::replay(Arc::new(store), config))
        }
    })
}
