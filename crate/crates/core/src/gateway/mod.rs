//! Networked access to chat-completion and embedding backends: bounded
//! in-flight concurrency, exponential-backoff retries, and a scriptable mock
//! transport for deterministic tests.

mod http;
mod mock;

pub use http::HttpTransport;
pub use mock::{CallRecord, MockOutcome, ScriptedChat, ScriptedEmbed};

use crate::embed::{EmbedError, Embedder};
use std::sync::{Condvar, Mutex};
use std::time::Duration;
use thiserror::Error;

/// Decoding parameters forwarded to the backend.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoding {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for Decoding {
    fn default() -> Self {
        Self { temperature: 0.0, max_tokens: 4096 }
    }
}

/// One chat call: a system prompt plus a single user turn.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub decoding: Decoding,
    pub model_id: String,
}

impl ChatRequest {
    pub fn new(system: impl Into<String>, user: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            user: user.into(),
            decoding: Decoding::default(),
            model_id: model_id.into(),
        }
    }

    /// Stable hash over the full prompt, used by mock call logs and judgment
    /// logs.
    pub fn prompt_hash(&self) -> u64 {
        crate::embed::stable_hash64(&format!("{}\u{1f}{}", self.system, self.user))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryConfig {
    pub max_attempts: u32,
    pub base_backoff: Duration,
}

impl Default for RetryConfig {
    fn default() -> Self {
        Self { max_attempts: 3, base_backoff: Duration::from_millis(250) }
    }
}

/// Backend connection settings.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub endpoint: String,
    pub auth_token: Option<String>,
    pub max_in_flight: usize,
    pub retry: RetryConfig,
    pub chat_path: String,
    pub embed_path: String,
    pub request_timeout: Duration,
}

impl BackendConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            auth_token: None,
            max_in_flight: 4,
            retry: RetryConfig::default(),
            chat_path: "/v1/chat/completions".into(),
            embed_path: "/v1/embeddings".into(),
            request_timeout: Duration::from_secs(120),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_in_flight == 0 {
            return Err(GatewayError::Config("max_in_flight must be >= 1".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(GatewayError::Config("retry.max_attempts must be >= 1".into()));
        }
        Ok(())
    }

    /// Apply `{PREFIX}_ENDPOINT` / `{PREFIX}_TOKEN` environment overrides.
    pub fn apply_env_overrides(&mut self, prefix: &str) {
        if let Ok(endpoint) = std::env::var(format!("{prefix}_ENDPOINT")) {
            if !endpoint.is_empty() {
                self.endpoint = endpoint;
            }
        }
        if let Ok(token) = std::env::var(format!("{prefix}_TOKEN")) {
            if !token.is_empty() {
                self.auth_token = Some(token);
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend error after {attempts} attempt(s): {message}")]
    Backend { attempts: u32, message: String },
    #[error("request rejected by backend: {message}")]
    Request { message: String },
    #[error("backend contract violation: {0}")]
    Contract(String),
    #[error("{0}")]
    Precondition(String),
    #[error("invalid backend config: {0}")]
    Config(String),
}

/// Transport-level outcome classification; the gateway retries `Retryable`
/// failures and surfaces `Fatal` ones immediately.
#[derive(Debug, Error)]
pub enum TransportError {
    #[error("{kind}: {message}")]
    Retryable { kind: &'static str, message: String },
    #[error("{message}")]
    Fatal { message: String },
}

/// One attempt against a chat backend.
pub trait ChatTransport: Send + Sync {
    fn chat_once(&self, req: &ChatRequest) -> Result<String, TransportError>;
}

/// One attempt against an embedding backend.
pub trait EmbedTransport: Send + Sync {
    fn embed_once(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, TransportError>;
}

/// The chat capability consumed by agents and judges.
pub trait ChatBackend: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<String, GatewayError>;
}

/// Retry + concurrency wrapper around a transport.
pub struct Gateway<T> {
    transport: T,
    retry: RetryConfig,
    limiter: Semaphore,
}

impl<T> Gateway<T> {
    pub fn new(transport: T, retry: RetryConfig, max_in_flight: usize) -> Self {
        Self {
            transport,
            retry,
            limiter: Semaphore::new(max_in_flight.max(1)),
        }
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn run_with_retries<R>(
        &self,
        mut attempt_fn: impl FnMut() -> Result<R, TransportError>,
    ) -> Result<R, GatewayError> {
        let _permit = self.limiter.acquire();
        let mut last_message = String::new();
        for attempt in 1..=self.retry.max_attempts {
            match attempt_fn() {
                Ok(value) => return Ok(value),
                Err(TransportError::Fatal { message }) => {
                    return Err(GatewayError::Request { message })
                }
                Err(TransportError::Retryable { kind, message }) => {
                    last_message = format!("{kind}: {message}");
                    if attempt < self.retry.max_attempts {
                        let backoff = self.retry.base_backoff * 2u32.saturating_pow(attempt - 1);
                        if !backoff.is_zero() {
                            std::thread::sleep(backoff);
                        }
                    }
                }
            }
        }
        Err(GatewayError::Backend {
            attempts: self.retry.max_attempts,
            message: last_message,
        })
    }
}

impl Gateway<HttpTransport> {
    /// HTTP gateway from a backend config.
    pub fn http(cfg: &BackendConfig) -> Result<Self, GatewayError> {
        cfg.validate()?;
        Ok(Self::new(
            HttpTransport::new(cfg.clone()),
            cfg.retry.clone(),
            cfg.max_in_flight,
        ))
    }
}

impl<T: ChatTransport> ChatBackend for Gateway<T> {
    fn chat(&self, req: &ChatRequest) -> Result<String, GatewayError> {
        if req.user.is_empty() {
            return Err(GatewayError::Precondition("chat request user text must be non-empty".into()));
        }
        self.run_with_retries(|| self.transport.chat_once(req))
    }
}

impl<T: EmbedTransport> Embedder for Gateway<T> {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::Precondition("texts must be non-empty".into()));
        }
        let vectors = self
            .run_with_retries(|| self.transport.embed_once(texts))
            .map_err(|e| match e {
                GatewayError::Contract(msg) => EmbedError::Contract(msg),
                other => EmbedError::Backend(other.to_string()),
            })?;
        if vectors.len() != texts.len() {
            return Err(EmbedError::Contract(format!(
                "backend returned {} vectors for {} texts",
                vectors.len(),
                texts.len()
            )));
        }
        let dim = vectors.first().map(Vec::len).unwrap_or(0);
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(EmbedError::Contract("vectors of differing dimensions".into()));
        }
        Ok(vectors)
    }
}

/// One-shot chat against an HTTP backend (convenience over [`Gateway::http`]).
pub fn chat(req: &ChatRequest, cfg: &BackendConfig) -> Result<String, GatewayError> {
    Gateway::http(cfg)?.chat(req)
}

/// One-shot embedding call against an HTTP backend.
pub fn embed(texts: &[String], cfg: &BackendConfig) -> Result<Vec<Vec<f64>>, GatewayError> {
    let gateway = Gateway::http(cfg)?;
    Embedder::embed(&gateway, texts).map_err(|e| match e {
        EmbedError::Contract(msg) => GatewayError::Contract(msg),
        EmbedError::Precondition(msg) => GatewayError::Precondition(msg),
        EmbedError::Backend(msg) => GatewayError::Backend { attempts: cfg.retry.max_attempts, message: msg },
    })
}

/// Minimal counting semaphore (std has none); permits release on drop.
struct Semaphore {
    state: Mutex<usize>,
    condvar: Condvar,
}

struct Permit<'a> {
    semaphore: &'a Semaphore,
}

impl Semaphore {
    fn new(permits: usize) -> Self {
        Self {
            state: Mutex::new(permits),
            condvar: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut available = self.state.lock().unwrap();
        while *available == 0 {
            available = self.condvar.wait(available).unwrap();
        }
        *available -= 1;
        Permit { semaphore: self }
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut available = self.semaphore.state.lock().unwrap();
        *available += 1;
        self.semaphore.condvar.notify_one();
    }
}
