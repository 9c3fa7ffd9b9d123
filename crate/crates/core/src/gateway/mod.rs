//! Provider-agnostic access to chat and embedding models.
//!
//! Everything upstream talks to [`ChatProvider`] and [`Embedder`]. Two
//! families of implementation exist: an HTTP client with retry and a shared
//! rate limiter, and scripted providers that replay a fixed response list so
//! whole pipeline runs are reproducible in tests.

mod clock;
mod http;
mod metered;
mod rate_limit;
mod scripted;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clock::{Clock, ManualClock, SystemClock};
pub use http::{HttpEmbedder, HttpProvider, HttpReply, HttpTransport, RetryPolicy, TransportError, UreqTransport};
pub use metered::{MeteredProvider, TokenBudget, UsageTotals};
pub use rate_limit::RateLimiter;
pub use scripted::{hashed_embedding, ScriptEntry, ScriptedEmbedder, ScriptedProvider};

pub const DEFAULT_API_KEY_VAR: &str = "METASYNTH_API_KEY";
pub const GENERATION_TEMPERATURE: f64 = 1.0;
pub const JUDGE_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_MAX_TOKENS: u32 = 4096;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("authentication failed: {0}")]
    Authentication(String),
    #[error("environment variable {0} holding the API key is not set")]
    MissingCredentials(String),
    #[error("scripted provider exhausted after {calls} calls")]
    ScriptExhausted { calls: usize },
    #[error("scripted entry {index} expected the prompt to contain {expected:?}")]
    ScriptMismatch { index: usize, expected: String },
    #[error("provider returned an unusable response: {0}")]
    BadResponse(String),
    #[error("token budget of {limit} tokens exhausted")]
    BudgetExhausted { limit: u64 },
    #[error("invalid provider config: {0}")]
    Config(String),
}

impl GatewayError {
    /// Errors that cannot be fixed by retrying or by a later call.
    pub fn is_auth(&self) -> bool {
        matches!(self, GatewayError::Authentication(_) | GatewayError::MissingCredentials(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: Option<String>,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default)]
    pub stop_sequences: Vec<String>,
}

impl ChatRequest {
    /// A single-turn request at generation temperature.
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            system: None,
            messages: vec![Message { role: Role::User, content: content.into() }],
            temperature: GENERATION_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            stop_sequences: Vec::new(),
        }
    }

    pub fn with_system(mut self, system: impl Into<String>) -> Self {
        self.system = Some(system.into());
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest("messages must not be empty".into()));
        }
        for (i, m) in self.messages.iter().enumerate() {
            let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
            if m.role != expected {
                return Err(GatewayError::InvalidRequest(format!("message {i} should be from {expected:?}")));
            }
        }
        if !(self.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// System prompt and every message, concatenated. Used for prompt
    /// assertions and token estimates.
    pub fn prompt_text(&self) -> String {
        let mut out = String::new();
        if let Some(system) = &self.system {
            out.push_str(system);
            out.push('\n');
        }
        for m in &self.messages {
            out.push_str(&m.content);
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    #[serde(default)]
    pub usage: Usage,
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError>;
}

pub trait Embedder: Send + Sync {
    /// One vector per input text, all of the same dimension.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError>;
}

impl<P: ChatProvider + ?Sized> ChatProvider for Arc<P> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        (**self).complete(request)
    }
}

impl<E: Embedder + ?Sized> Embedder for Arc<E> {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        (**self).embed(texts)
    }
}

/// Check the `embed` postcondition: one vector per text, equal dimension.
pub(crate) fn check_embeddings(texts: usize, vectors: &[Vec<f64>]) -> Result<(), GatewayError> {
    if vectors.len() != texts {
        return Err(GatewayError::BadResponse(format!("{} vectors for {texts} texts", vectors.len())));
    }
    if let Some(first) = vectors.first() {
        if vectors.iter().any(|v| v.len() != first.len()) {
            return Err(GatewayError::BadResponse("embedding dimensions differ".into()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    HttpApi,
    Scripted,
}

fn default_api_key_var() -> String {
    DEFAULT_API_KEY_VAR.to_string()
}
fn default_max_retries() -> u32 {
    5
}
fn default_batch_size() -> usize {
    512
}
fn default_timeout_secs() -> u64 {
    120
}
fn default_backoff_ms() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingEntry {
    pub text: String,
    pub vector: Vec<f64>,
}

/// Declarative description of a provider, as it appears in run config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_api_key_var")]
    pub credentials_env_var: String,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_backoff_ms")]
    pub backoff_base_ms: u64,
    /// Inline chat script for `scripted` providers.
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
    /// JSONL file of script entries, appended after `script`.
    #[serde(default)]
    pub script_path: Option<PathBuf>,
    /// Fixed text→vector table for scripted embedders.
    #[serde(default)]
    pub embeddings: Vec<EmbeddingEntry>,
    /// Dimension of the feature-hashing fallback for scripted embedders.
    #[serde(default)]
    pub hash_dim: Option<usize>,
}

impl ProviderConfig {
    pub fn scripted(script: Vec<ScriptEntry>) -> Self {
        Self {
            kind: ProviderKind::Scripted,
            endpoint: None,
            model: None,
            credentials_env_var: default_api_key_var(),
            max_retries: default_max_retries(),
            requests_per_minute: None,
            batch_size: default_batch_size(),
            timeout_secs: default_timeout_secs(),
            backoff_base_ms: default_backoff_ms(),
            script,
            script_path: None,
            embeddings: Vec::new(),
            hash_dim: None,
        }
    }

    pub fn http(endpoint: impl Into<String>) -> Self {
        Self { kind: ProviderKind::HttpApi, endpoint: Some(endpoint.into()), ..Self::scripted(Vec::new()) }
    }

    pub fn is_scripted(&self) -> bool {
        self.kind == ProviderKind::Scripted
    }

    /// Every problem with the config, not just the first.
    pub fn problems(&self, as_embedder: bool) -> Vec<String> {
        let mut out = Vec::new();
        match self.kind {
            ProviderKind::HttpApi => {
                if self.endpoint.as_deref().map_or(true, str::is_empty) {
                    out.push("http_api provider needs an endpoint".into());
                }
                if self.credentials_env_var.is_empty() {
                    out.push("credentials_env_var must name an environment variable".into());
                }
            }
            ProviderKind::Scripted if as_embedder => {
                if self.embeddings.is_empty() && self.hash_dim.is_none() {
                    out.push("scripted embedder needs `embeddings` or `hash_dim`".into());
                }
            }
            ProviderKind::Scripted => {
                if self.script.is_empty() && self.script_path.is_none() {
                    out.push("scripted provider needs a nonempty script".into());
                }
            }
        }
        if self.batch_size == 0 {
            out.push("batch_size must be positive".into());
        }
        if self.requests_per_minute == Some(0) {
            out.push("requests_per_minute must be positive".into());
        }
        out
    }

    /// For HTTP providers, resolve the API key from the environment.
    pub fn credentials(&self) -> Result<Option<String>, GatewayError> {
        match self.kind {
            ProviderKind::Scripted => Ok(None),
            ProviderKind::HttpApi => match std::env::var(&self.credentials_env_var) {
                Ok(key) if !key.is_empty() => Ok(Some(key)),
                _ => Err(GatewayError::MissingCredentials(self.credentials_env_var.clone())),
            },
        }
    }

    /// Inline script followed by entries from `script_path`.
    pub fn load_script(&self) -> Result<Vec<ScriptEntry>, GatewayError> {
        let mut entries = self.script.clone();
        if let Some(path) = &self.script_path {
            let body = std::fs::read_to_string(path)
                .map_err(|e| GatewayError::Config(format!("reading {}: {e}", path.display())))?;
            for (i, line) in body.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let entry: ScriptEntry = serde_json::from_str(line)
                    .map_err(|e| GatewayError::Config(format!("{} line {}: {e}", path.display(), i + 1)))?;
                entries.push(entry);
            }
        }
        if entries.is_empty() {
            return Err(GatewayError::Config("scripted provider needs a nonempty script".into()));
        }
        Ok(entries)
    }

    /// Build a chat provider. Scripted providers get a fresh cursor each time
    /// and substitute `{worker}` in responses with `worker`.
    pub fn build_chat(&self, worker: usize) -> Result<Arc<dyn ChatProvider>, GatewayError> {
        match self.kind {
            ProviderKind::Scripted => Ok(Arc::new(ScriptedProvider::for_worker(self.load_script()?, worker))),
            ProviderKind::HttpApi => Ok(Arc::new(HttpProvider::from_config(self, Arc::new(UreqTransport), Arc::new(SystemClock::new()))?)),
        }
    }

    pub fn build_embedder(&self) -> Result<Arc<dyn Embedder>, GatewayError> {
        match self.kind {
            ProviderKind::Scripted => {
                let problems = self.problems(true);
                if !problems.is_empty() {
                    return Err(GatewayError::Config(problems.join("; ")));
                }
                let mut embedder = ScriptedEmbedder::new(self.embeddings.iter().map(|e| (e.text.clone(), e.vector.clone())));
                if let Some(dim) = self.hash_dim {
                    embedder = embedder.with_hash_fallback(dim);
                }
                Ok(Arc::new(embedder.with_batch_size(self.batch_size)))
            }
            ProviderKind::HttpApi => Ok(Arc::new(HttpEmbedder::new(HttpProvider::from_config(
                self,
                Arc::new(UreqTransport),
                Arc::new(SystemClock::new()),
            )?))),
        }
    }
}
