//! Seed initialisation from random keywords and the topic-aware adaptive
//! kNN refresh of seed documents.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{load_corpus, CorpusError, Document, Record, ValidationRules};
use crate::gateway::{ChatProvider, ChatRequest, Embedder, GatewayError, JUDGE_TEMPERATURE};
use crate::text::{first_tagged, normalize_whitespace, parse_keyword_list};
use crate::vector::{dot, normalized};

/// Neighbour count a refresh starts from.
pub const INITIAL_K: usize = 5;
/// Synthesized documents between two refreshes.
pub const DEFAULT_REFRESH_PERIOD: usize = 50;

#[derive(Debug, Error)]
pub enum SeedError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("zero-length embedding for {0}")]
    ZeroVector(String),
    #[error("topic saturation: no pool document outside the recent topics (tried k = {attempted_k:?})")]
    TopicSaturation { attempted_k: Vec<usize> },
    #[error("topic labeler returned an empty label")]
    EmptyLabel,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// One line of a pool file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub id: String,
    pub text: String,
    pub topic: String,
    pub embedding: Vec<f64>,
}

impl Record for PoolEntry {
    fn key(&self) -> Option<&str> {
        Some(&self.id)
    }

    fn validate(&self, _rules: &ValidationRules) -> Result<(), String> {
        if self.embedding.is_empty() {
            return Err("embedding is empty".into());
        }
        if self.embedding.iter().any(|x| !x.is_finite()) {
            return Err("embedding has non-finite values".into());
        }
        Ok(())
    }
}

/// Read-only embedded pool with unit-normalised vectors.
#[derive(Debug, Clone)]
pub struct EmbeddedPool {
    entries: Vec<PoolEntry>,
    units: Vec<Vec<f64>>,
    dim: usize,
}

impl EmbeddedPool {
    pub fn new(entries: Vec<PoolEntry>) -> Result<Self, SeedError> {
        let dim = entries.first().map(|e| e.embedding.len()).unwrap_or(0);
        let mut units = Vec::with_capacity(entries.len());
        for e in &entries {
            if e.embedding.len() != dim {
                return Err(SeedError::DimensionMismatch { expected: dim, got: e.embedding.len() });
            }
            units.push(normalized(&e.embedding).ok_or_else(|| SeedError::ZeroVector(e.id.clone()))?);
        }
        Ok(Self { entries, units, dim })
    }

    pub fn load(path: &Path) -> Result<Self, SeedError> {
        let loaded = load_corpus::<PoolEntry>(path, true)?;
        Self::new(loaded.corpus.records)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&PoolEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// All pool indices by ascending cosine distance to `query`, ties by id.
    fn ranking(&self, query: &[f64], label: &str) -> Result<Vec<(usize, f64)>, SeedError> {
        if query.len() != self.dim {
            return Err(SeedError::DimensionMismatch { expected: self.dim, got: query.len() });
        }
        let q = normalized(query).ok_or_else(|| SeedError::ZeroVector(label.to_string()))?;
        let mut ranked: Vec<(usize, f64)> = self.units.iter().enumerate().map(|(i, u)| (i, 1.0 - dot(&q, u))).collect();
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| self.entries[a.0].id.cmp(&self.entries[b.0].id)));
        Ok(ranked)
    }
}

/// The `k` pool ids nearest to `query` by cosine distance, ties broken by
/// ascending id. Exact scan.
pub fn nearest_neighbors(query: &[f64], pool: &EmbeddedPool, k: usize) -> Result<Vec<String>, SeedError> {
    if k > pool.len() {
        return Err(SeedError::Precondition(format!("k = {k} exceeds pool size {}", pool.len())));
    }
    let ranked = pool.ranking(query, "query")?;
    Ok(ranked.into_iter().take(k).map(|(i, _)| pool.entries[i].id.clone()).collect())
}

/// Per-worker seed-refresh state over a shared pool.
#[derive(Debug, Clone)]
pub struct SeedPoolState {
    pub pool: Arc<EmbeddedPool>,
    pub current_seeds: Vec<String>,
    pub k: usize,
    pub refresh_period: usize,
    /// Topic labels of the documents synthesized since the last refresh.
    pub recent_topics: Vec<String>,
}

impl SeedPoolState {
    pub fn new(pool: Arc<EmbeddedPool>, current_seeds: Vec<String>) -> Self {
        Self { pool, current_seeds, k: INITIAL_K, refresh_period: DEFAULT_REFRESH_PERIOD, recent_topics: Vec::new() }
    }

    /// Record the topic label of a newly synthesized document, keeping the
    /// last `refresh_period` labels.
    pub fn record_topic(&mut self, topic: &str) {
        self.recent_topics.push(topic.trim().to_lowercase());
        let excess = self.recent_topics.len().saturating_sub(self.refresh_period);
        self.recent_topics.drain(..excess);
    }

    pub fn refresh_due(&self) -> bool {
        self.recent_topics.len() >= self.refresh_period
    }

    pub fn seed_documents(&self) -> Vec<&PoolEntry> {
        self.current_seeds.iter().filter_map(|id| self.pool.get(id)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefreshOutcome {
    pub seeds: Vec<String>,
    /// Every k tried, in order.
    pub attempted_k: Vec<usize>,
}

/// Pick new seeds near the synthesized batch whose topics differ from the
/// batch's topics, growing k until enough qualify.
///
/// Each synthesized document is queried on its own and the neighbour sets
/// are unioned. Candidates are ranked by their best distance to any query.
/// If the pool is exhausted with some but too few qualifying candidates,
/// those are returned with a warning; with none, the refresh fails with
/// [`SeedError::TopicSaturation`]. On success `k` resets to [`INITIAL_K`]
/// and `recent_topics` is cleared.
pub fn refresh_seeds(
    state: &mut SeedPoolState,
    synthesized: &[Document],
    embedder: &dyn Embedder,
) -> Result<RefreshOutcome, SeedError> {
    if synthesized.len() != state.refresh_period {
        return Err(SeedError::Precondition(format!(
            "refresh needs {} synthesized documents, got {}",
            state.refresh_period,
            synthesized.len()
        )));
    }
    if state.pool.is_empty() {
        return Err(SeedError::Precondition("seed pool is empty".into()));
    }
    let texts: Vec<String> = synthesized.iter().map(|d| d.text.clone()).collect();
    let vectors = embedder.embed(&texts)?;
    if vectors.len() != texts.len() {
        return Err(SeedError::Gateway(GatewayError::BadResponse(format!("{} vectors for {} texts", vectors.len(), texts.len()))));
    }
    let rankings = synthesized
        .iter()
        .zip(&vectors)
        .map(|(doc, v)| state.pool.ranking(v, &doc.id))
        .collect::<Result<Vec<_>, _>>()?;

    let recent: HashSet<&str> = state.recent_topics.iter().map(String::as_str).collect();
    let required = state.current_seeds.len().max(1);
    let pool = &state.pool;
    let mut attempted_k = Vec::new();
    let mut k = state.k.max(1).min(pool.len());
    loop {
        attempted_k.push(k);
        let mut best: HashMap<usize, f64> = HashMap::new();
        for ranking in &rankings {
            for &(i, d) in &ranking[..k] {
                best.entry(i).and_modify(|b| *b = b.min(d)).or_insert(d);
            }
        }
        let mut qualifying: Vec<(usize, f64)> =
            best.into_iter().filter(|(i, _)| !recent.contains(pool.entries[*i].topic.trim().to_lowercase().as_str())).collect();
        qualifying.sort_by(|a, b| match a.1.total_cmp(&b.1) {
            Ordering::Equal => pool.entries[a.0].id.cmp(&pool.entries[b.0].id),
            other => other,
        });
        let exhausted = k >= pool.len();
        if qualifying.len() >= required || (exhausted && !qualifying.is_empty()) {
            if qualifying.len() < required {
                log::warn!("only {} of {required} replacement seeds qualify after exhausting the pool", qualifying.len());
            }
            let seeds: Vec<String> = qualifying.iter().take(required).map(|(i, _)| pool.entries[*i].id.clone()).collect();
            state.current_seeds = seeds.clone();
            state.k = INITIAL_K;
            state.recent_topics.clear();
            return Ok(RefreshOutcome { seeds, attempted_k });
        }
        if exhausted {
            return Err(SeedError::TopicSaturation { attempted_k });
        }
        k += 1;
    }
}

/// Ask an agent for `count` domain keywords, re-prompting once if the
/// reply has too few distinct ones.
pub fn random_keyword_seeds(domain: &str, count: usize, provider: &dyn ChatProvider) -> Result<Vec<String>, SeedError> {
    if count == 0 {
        return Err(SeedError::Precondition("keyword count must be at least 1".into()));
    }
    let mut keywords: Vec<String> = Vec::new();
    for attempt in 0..2 {
        let missing = count - keywords.len();
        let mut prompt = format!(
            "Generate {missing} distinct, specific keywords for the {domain} domain. \
             Present them as <seed keywords>[keyword 1, keyword 2, ...]</seed keywords>."
        );
        if attempt > 0 {
            prompt.push_str(&format!(" Do not repeat any of these: [{}].", keywords.join(", ")));
        }
        let request = ChatRequest::user(prompt).with_system("You are Seed Keyword Generation Expert.");
        let reply = provider.complete(&request)?.content;
        let body = first_tagged(&reply, "seed keywords").unwrap_or(reply);
        for kw in parse_keyword_list(&body) {
            let kw = normalize_whitespace(&kw).to_lowercase();
            if !kw.is_empty() && !keywords.contains(&kw) && keywords.len() < count {
                keywords.push(kw);
            }
        }
        if keywords.len() == count {
            return Ok(keywords);
        }
    }
    log::warn!("keyword agent produced {} of {count} requested keywords", keywords.len());
    Ok(keywords)
}

fn normalize_label(reply: &str) -> String {
    let line = reply.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let line = line.strip_prefix("Topic:").or_else(|| line.strip_prefix("topic:")).unwrap_or(line);
    let trimmed = line.trim().trim_matches(|c: char| c == '"' || c == '\'' || c == '.' || c == '*');
    normalize_whitespace(trimmed).to_lowercase()
}

/// Short lowercase topic label for a document, requested at temperature 0.
pub fn label_topic(doc: &Document, provider: &dyn ChatProvider) -> Result<String, SeedError> {
    if doc.text.trim().is_empty() {
        return Err(SeedError::Precondition(format!("document {} has no text", doc.id)));
    }
    let prompt = format!(
        "Give a short topic label, at most five words, for the following document. Reply with the label only.\n<document>\n{}\n</document>",
        doc.text.trim()
    );
    let request = ChatRequest::user(prompt).with_system("You are Topic Labeling Expert.").with_temperature(JUDGE_TEMPERATURE);
    let label = normalize_label(&provider.complete(&request)?.content);
    if label.is_empty() {
        return Err(SeedError::EmptyLabel);
    }
    Ok(label)
}
