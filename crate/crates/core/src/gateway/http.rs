use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use super::{
    check_embeddings, ChatProvider, ChatRequest, ChatResponse, Clock, Embedder, FinishReason, GatewayError,
    ProviderConfig, RateLimiter, Usage,
};

#[derive(Debug, Clone, PartialEq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    Timeout,
    Connection(String),
}

/// Minimal JSON POST abstraction so retry behaviour can be tested offline.
pub trait HttpTransport: Send + Sync {
    fn post_json(&self, url: &str, bearer: &str, body: &Value, timeout: Duration) -> Result<HttpReply, TransportError>;
}

pub struct UreqTransport;

impl HttpTransport for UreqTransport {
    fn post_json(&self, url: &str, bearer: &str, body: &Value, timeout: Duration) -> Result<HttpReply, TransportError> {
        let result = ureq::post(url)
            .timeout(timeout)
            .set("Authorization", &format!("Bearer {bearer}"))
            .send_json(body.clone());
        match result {
            Ok(resp) => {
                let status = resp.status();
                let body = resp.into_string().map_err(|e| TransportError::Connection(e.to_string()))?;
                Ok(HttpReply { status, body })
            }
            Err(ureq::Error::Status(status, resp)) => Ok(HttpReply { status, body: resp.into_string().unwrap_or_default() }),
            Err(ureq::Error::Transport(t)) => {
                let message = t.to_string();
                if message.to_lowercase().contains("timed out") {
                    Err(TransportError::Timeout)
                } else {
                    Err(TransportError::Connection(message))
                }
            }
        }
    }
}

/// Exponential backoff with multiplicative jitter.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base: Duration,
    pub factor: f64,
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 5, base: Duration::from_secs(1), factor: 2.0, jitter: 0.2 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `attempt + 1`, given a uniform draw in [-1, 1].
    pub fn delay(&self, attempt: u32, unit: f64) -> Duration {
        let nominal = self.base.as_secs_f64() * self.factor.powi(attempt as i32);
        Duration::from_secs_f64((nominal * (1.0 + self.jitter * unit.clamp(-1.0, 1.0))).max(0.0))
    }
}

enum Outcome {
    Done(Value),
    Retry(String),
}

/// Chat client for a JSON completion endpoint.
///
/// Request body: `{model, system, messages: [{role, content}], temperature,
/// max_tokens, stop}`. Response body: `{content, finish_reason, usage:
/// {input_tokens, output_tokens}}`.
pub struct HttpProvider {
    endpoint: String,
    model: Option<String>,
    api_key: String,
    timeout: Duration,
    retry: RetryPolicy,
    batch_size: usize,
    transport: Arc<dyn HttpTransport>,
    clock: Arc<dyn Clock>,
    limiter: Option<Arc<RateLimiter>>,
    rng: Mutex<ChaCha8Rng>,
}

impl HttpProvider {
    pub fn from_config(
        config: &ProviderConfig,
        transport: Arc<dyn HttpTransport>,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, GatewayError> {
        let problems = config.problems(false);
        if !problems.is_empty() {
            return Err(GatewayError::Config(problems.join("; ")));
        }
        let api_key = config.credentials()?.unwrap_or_default();
        let limiter = config.requests_per_minute.map(|rpm| Arc::new(RateLimiter::per_minute(rpm, clock.clone())));
        Ok(Self {
            endpoint: config.endpoint.clone().unwrap_or_default(),
            model: config.model.clone(),
            api_key,
            timeout: Duration::from_secs(config.timeout_secs),
            retry: RetryPolicy {
                max_retries: config.max_retries,
                base: Duration::from_millis(config.backoff_base_ms),
                ..RetryPolicy::default()
            },
            batch_size: config.batch_size.max(1),
            transport,
            clock,
            limiter,
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(0x5eed)),
        })
    }

    pub fn with_limiter(mut self, limiter: Arc<RateLimiter>) -> Self {
        self.limiter = Some(limiter);
        self
    }

    fn post_with_retry(&self, body: &Value) -> Result<Value, GatewayError> {
        let attempts = self.retry.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            match self.attempt(body)? {
                Outcome::Done(value) => return Ok(value),
                Outcome::Retry(reason) => {
                    log::warn!("transient provider failure (attempt {}): {reason}", attempt + 1);
                    last = reason;
                }
            }
            if attempt + 1 < attempts {
                let unit = self.rng.lock().expect("rng poisoned").gen_range(-1.0..=1.0);
                self.clock.sleep(self.retry.delay(attempt, unit));
            }
        }
        Err(GatewayError::RetriesExhausted { attempts, last })
    }

    fn attempt(&self, body: &Value) -> Result<Outcome, GatewayError> {
        match self.transport.post_json(&self.endpoint, &self.api_key, body, self.timeout) {
            Err(TransportError::Timeout) => Ok(Outcome::Retry("timeout".into())),
            Err(TransportError::Connection(e)) => Ok(Outcome::Retry(format!("connection: {e}"))),
            Ok(HttpReply { status: 200..=299, body }) => serde_json::from_str(&body)
                .map(Outcome::Done)
                .map_err(|e| GatewayError::BadResponse(format!("invalid JSON: {e}"))),
            Ok(HttpReply { status: 401 | 403, body }) => Err(GatewayError::Authentication(body)),
            Ok(HttpReply { status, body }) if status == 408 || status == 429 || status >= 500 => {
                Ok(Outcome::Retry(format!("HTTP {status}: {body}")))
            }
            Ok(HttpReply { status, body }) => Err(GatewayError::BadResponse(format!("HTTP {status}: {body}"))),
        }
    }
}

impl ChatProvider for HttpProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let body = json!({
            "model": self.model,
            "system": request.system,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "stop": request.stop_sequences,
        });
        let value = self.post_with_retry(&body)?;
        let content = value
            .get("content")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::BadResponse("missing `content`".into()))?
            .to_string();
        let finish_reason = match value.get("finish_reason").and_then(Value::as_str) {
            Some("length") => FinishReason::Length,
            Some("error") => FinishReason::Error,
            _ => FinishReason::Stop,
        };
        let usage = value.get("usage").and_then(|u| serde_json::from_value::<Usage>(u.clone()).ok()).unwrap_or_default();
        Ok(ChatResponse { content, finish_reason, usage })
    }
}

/// Embedding client sharing [`HttpProvider`]'s retry and rate limiting.
///
/// Request body: `{model, input: [text]}`; response `{embeddings: [[f64]]}`.
pub struct HttpEmbedder {
    inner: HttpProvider,
}

impl HttpEmbedder {
    pub fn new(inner: HttpProvider) -> Self {
        Self { inner }
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::Precondition("embed called with no texts".into()));
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.inner.batch_size) {
            let value = self.inner.post_with_retry(&json!({ "model": self.inner.model, "input": chunk }))?;
            let vectors: Vec<Vec<f64>> = value
                .get("embeddings")
                .cloned()
                .and_then(|v| serde_json::from_value(v).ok())
                .ok_or_else(|| GatewayError::BadResponse("missing `embeddings`".into()))?;
            check_embeddings(chunk.len(), &vectors)?;
            out.extend(vectors);
        }
        check_embeddings(texts.len(), &out)?;
        Ok(out)
    }
}
