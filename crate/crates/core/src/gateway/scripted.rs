use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{check_embeddings, ChatProvider, ChatRequest, ChatResponse, Embedder, FinishReason, GatewayError, Usage};
use crate::text::{count_words, lexical_tokens};

/// One scripted reply. `expect`, when set, must occur in the request's
/// prompt text or the call fails with [`GatewayError::ScriptMismatch`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ScriptEntryRepr")]
pub struct ScriptEntry {
    pub response: String,
    pub expect: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptEntryRepr {
    Plain(String),
    Full {
        response: String,
        #[serde(default)]
        expect: Option<String>,
    },
}

impl From<ScriptEntryRepr> for ScriptEntry {
    fn from(repr: ScriptEntryRepr) -> Self {
        match repr {
            ScriptEntryRepr::Plain(response) => Self { response, expect: None },
            ScriptEntryRepr::Full { response, expect } => Self { response, expect },
        }
    }
}

impl From<&str> for ScriptEntry {
    fn from(response: &str) -> Self {
        Self { response: response.to_string(), expect: None }
    }
}

impl From<String> for ScriptEntry {
    fn from(response: String) -> Self {
        Self { response, expect: None }
    }
}

impl ScriptEntry {
    pub fn expecting(response: impl Into<String>, expect: impl Into<String>) -> Self {
        Self { response: response.into(), expect: Some(expect.into()) }
    }
}

/// Replays a fixed list of responses in call order.
pub struct ScriptedProvider {
    entries: Vec<ScriptEntry>,
    state: Mutex<ScriptState>,
}

#[derive(Default)]
struct ScriptState {
    cursor: usize,
    captured: Vec<ChatRequest>,
}

impl ScriptedProvider {
    pub fn new(entries: impl IntoIterator<Item = impl Into<ScriptEntry>>) -> Self {
        Self { entries: entries.into_iter().map(Into::into).collect(), state: Mutex::default() }
    }

    /// Same script with every `{worker}` replaced by the worker index.
    pub fn for_worker(entries: Vec<ScriptEntry>, worker: usize) -> Self {
        let tag = worker.to_string();
        Self::new(entries.into_iter().map(|e| ScriptEntry {
            response: e.response.replace("{worker}", &tag),
            expect: e.expect.map(|x| x.replace("{worker}", &tag)),
        }))
    }

    pub fn calls(&self) -> usize {
        self.state.lock().expect("script poisoned").cursor
    }

    pub fn remaining(&self) -> usize {
        self.entries.len() - self.calls()
    }

    /// Every request received so far.
    pub fn captured(&self) -> Vec<ChatRequest> {
        self.state.lock().expect("script poisoned").captured.clone()
    }
}

impl ChatProvider for ScriptedProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let mut state = self.state.lock().expect("script poisoned");
        let index = state.cursor;
        let entry = self.entries.get(index).ok_or(GatewayError::ScriptExhausted { calls: index })?;
        let prompt = request.prompt_text();
        if let Some(expected) = &entry.expect {
            if !prompt.contains(expected.as_str()) {
                return Err(GatewayError::ScriptMismatch { index, expected: expected.clone() });
            }
        }
        state.cursor += 1;
        state.captured.push(request.clone());
        Ok(ChatResponse {
            content: entry.response.clone(),
            finish_reason: FinishReason::Stop,
            usage: Usage { input_tokens: count_words(&prompt) as u64, output_tokens: count_words(&entry.response) as u64 },
        })
    }
}

/// Deterministic unit-norm embedding by signed feature hashing of lexical
/// tokens. Texts without tokens map to the first basis vector.
pub fn hashed_embedding(text: &str, dim: usize) -> Vec<f64> {
    let dim = dim.max(1);
    let mut v = vec![0.0; dim];
    for token in lexical_tokens(text) {
        let h = fnv1a(token.as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        v[(h % dim as u64) as usize] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Looks embeddings up in a fixed table, optionally falling back to
/// [`hashed_embedding`] for unknown texts.
pub struct ScriptedEmbedder {
    table: HashMap<String, Vec<f64>>,
    hash_dim: Option<usize>,
    batch_size: usize,
    batches: AtomicUsize,
}

impl ScriptedEmbedder {
    pub fn new(table: impl IntoIterator<Item = (String, Vec<f64>)>) -> Self {
        Self { table: table.into_iter().collect(), hash_dim: None, batch_size: 512, batches: AtomicUsize::new(0) }
    }

    /// Pure feature-hashing embedder.
    pub fn hashing(dim: usize) -> Self {
        Self::new([]).with_hash_fallback(dim)
    }

    pub fn with_hash_fallback(mut self, dim: usize) -> Self {
        self.hash_dim = Some(dim);
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    /// Number of batches served, counting each `batch_size` chunk.
    pub fn batches(&self) -> usize {
        self.batches.load(Ordering::Relaxed)
    }
}

impl Embedder for ScriptedEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::Precondition("embed called with no texts".into()));
        }
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            self.batches.fetch_add(1, Ordering::Relaxed);
            for text in chunk {
                let v = match (self.table.get(text), self.hash_dim) {
                    (Some(v), _) => v.clone(),
                    (None, Some(dim)) => hashed_embedding(text, dim),
                    (None, None) => {
                        return Err(GatewayError::BadResponse(format!("no scripted embedding for {text:?}")))
                    }
                };
                out.push(v);
            }
        }
        check_embeddings(texts.len(), &out)?;
        Ok(out)
    }
}
