//! Document synthesis: the agentic generate-then-verify loop and the
//! template-prompting baseline.
//!
//! The agentic run hands the meta engine a [`tracker::DocTracker`], which
//! interprets expert replies by role. Replies from writer experts become
//! drafts. A draft can be accepted only after the Summarizer Expert has
//! summarised it and the Content Analyst Expert has judged it distinct.
//! Accepted drafts are recorded in an [`InstanceMemory`] so later Content
//! Analyst calls compare against summaries rather than full texts.

mod template;
mod tracker;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use template::{template_generate, template_prompt, verbatim_overlap, TemplateConfig, TemplateError};
pub use tracker::{classify_expert, parse_verdict, ExpertRole, Verdict};

use crate::corpus::{Document, LengthWindow, DEFAULT_DOCUMENT_WINDOW, TARGET_DOCUMENT_WORDS};
use crate::engine::{EngineConfig, ExecutionHistory, HistoryEntry, MetaEngine, RunStatus};
use crate::gateway::{ChatProvider, ChatRequest, GatewayError};
use crate::prompts::{render, DOC_META_SYSTEM, DOC_META_USER, DOC_TASK};

#[derive(Debug, Error)]
pub enum DocSynthError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionEvent {
    pub round: u32,
    pub added: Vec<String>,
}

/// Keywords and optional seed documents that anchor a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedState {
    /// Ordered, case-insensitively unique.
    pub keywords: Vec<String>,
    pub seed_documents: Vec<Document>,
    /// Number of accepted instances so far.
    pub generation: u32,
    pub expansion_log: Vec<ExpansionEvent>,
}

impl SeedState {
    pub fn from_keywords<S: Into<String>>(keywords: impl IntoIterator<Item = S>) -> Self {
        let mut state = Self::default();
        state.add_keywords(keywords.into_iter().map(Into::into));
        state
    }

    pub fn from_documents(documents: Vec<Document>) -> Self {
        Self { seed_documents: documents, ..Self::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty() && self.seed_documents.is_empty()
    }

    /// Add keywords not already present (case-insensitive), keeping the
    /// casing of the first occurrence. Returns the ones added.
    pub fn add_keywords(&mut self, keywords: impl IntoIterator<Item = String>) -> Vec<String> {
        let mut added = Vec::new();
        for keyword in keywords {
            let keyword = keyword.trim().to_string();
            if keyword.is_empty() {
                continue;
            }
            let lower = keyword.to_lowercase();
            if !self.keywords.iter().any(|k| k.to_lowercase() == lower) {
                self.keywords.push(keyword.clone());
                added.push(keyword);
            }
        }
        added
    }

    pub fn render_keywords(&self) -> String {
        format!("[{}]", self.keywords.join(", "))
    }
}

/// Union `suggested` into the keywords and log the expansion, even when it
/// adds nothing.
pub fn expand_seeds(state: &SeedState, suggested: &[String], round: u32) -> SeedState {
    let mut next = state.clone();
    let added = next.add_keywords(suggested.iter().cloned());
    next.expansion_log.push(ExpansionEvent { round, added });
    next
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRow {
    pub instance_id: String,
    pub summary: String,
    pub category: String,
}

/// The instance classification table: one row per accepted instance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InstanceMemory {
    pub rows: Vec<MemoryRow>,
}

impl InstanceMemory {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn render_table(&self) -> String {
        let mut out = String::from("<instance classification table>\n| id | category | summary |\n");
        for row in &self.rows {
            let summary = row.summary.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" / ");
            out.push_str(&format!("| {} | {} | {} |\n", row.instance_id, row.category, summary));
        }
        out.push_str("</instance classification table>");
        out
    }
}

fn default_max_expansions() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocRunConfig {
    pub n_documents: usize,
    pub domain: String,
    pub target_words: usize,
    pub window: LengthWindow,
    /// Keyword expansions allowed between two drafts.
    #[serde(default = "default_max_expansions")]
    pub max_expansions_per_draft: usize,
    /// Also require a reviewer expert's approval before acceptance.
    #[serde(default)]
    pub require_reviewer: bool,
    /// Prefix for document ids: accepted are `{prefix}-d{n}`, rejected `{prefix}-r{n}`.
    pub id_prefix: String,
    pub engine: EngineConfig,
}

impl DocRunConfig {
    pub fn new(n_documents: usize, domain: impl Into<String>) -> Self {
        Self {
            n_documents,
            domain: domain.into(),
            target_words: TARGET_DOCUMENT_WORDS,
            window: DEFAULT_DOCUMENT_WINDOW,
            max_expansions_per_draft: 3,
            require_reviewer: false,
            id_prefix: "doc".into(),
            engine: EngineConfig::documents(),
        }
    }
}

/// Hooks for streaming results to disk while a run is in progress.
pub trait DocRunObserver {
    fn accepted(&mut self, _doc: &Document) {}
    fn rejected(&mut self, _doc: &Document) {}
    fn entry(&mut self, _entry: &HistoryEntry) {}
}

impl DocRunObserver for () {}

#[derive(Debug, Clone)]
pub struct DocRunOutput {
    pub accepted: Vec<Document>,
    pub rejected: Vec<Document>,
    pub memory: InstanceMemory,
    pub seeds: SeedState,
    pub status: RunStatus,
    pub history: ExecutionHistory,
    pub error: Option<GatewayError>,
}

/// The seed block placed after the task description.
pub fn render_seed_block(seeds: &SeedState) -> String {
    let mut out = String::new();
    if !seeds.seed_documents.is_empty() {
        out.push_str("<seed documents>\n");
        for doc in &seeds.seed_documents {
            out.push_str(&format!("<document>\n{}\n</document>\n", doc.text.trim()));
        }
        out.push_str("</seed documents>\n");
    }
    if !seeds.keywords.is_empty() {
        out.push_str(&format!("<seed keywords>{}</seed keywords>\n", seeds.render_keywords()));
    }
    out
}

/// Initial history for a document run.
pub fn document_history(seeds: &SeedState, config: &DocRunConfig) -> Result<ExecutionHistory, DocSynthError> {
    let target = config.target_words.to_string();
    let limit = config.engine.round_limit.to_string();
    let n = config.n_documents.to_string();
    let vars = [
        ("domain", config.domain.as_str()),
        ("target_words", target.as_str()),
        ("round_limit", limit.as_str()),
        ("n_documents", n.as_str()),
    ];
    ExecutionHistory::init(
        &render(DOC_META_SYSTEM, &vars),
        &render(DOC_META_USER, &vars),
        &render(DOC_TASK, &vars),
        &render_seed_block(seeds),
        config.engine.round_limit,
    )
    .map_err(|e| DocSynthError::Precondition(e.to_string()))
}

/// Run one agentic document synthesis session.
///
/// Returns whatever was accepted even when the run ends early; check
/// `status` for how it ended.
pub fn synthesize_documents(
    seeds: SeedState,
    config: &DocRunConfig,
    meta: Arc<dyn ChatProvider>,
    experts: Arc<dyn ChatProvider>,
    observer: &mut dyn DocRunObserver,
) -> Result<DocRunOutput, DocSynthError> {
    if seeds.is_empty() {
        return Err(DocSynthError::Precondition("need at least one seed keyword or seed document".into()));
    }
    if config.n_documents == 0 {
        return Err(DocSynthError::Precondition("n_documents must be at least 1".into()));
    }
    if !config.window.contains(config.target_words) {
        return Err(DocSynthError::Precondition("target_words must lie inside the length window".into()));
    }
    let problems = config.engine.problems();
    if !problems.is_empty() {
        return Err(DocSynthError::Precondition(problems.join("; ")));
    }
    let history = document_history(&seeds, config)?;
    let mut tracker = tracker::DocTracker::new(config, seeds, observer);
    let outcome = MetaEngine::new(config.engine.clone(), meta, experts).run(history, &mut tracker);
    let (accepted, rejected, memory, seeds) = tracker.finish();
    Ok(DocRunOutput { accepted, rejected, memory, seeds, status: outcome.status, history: outcome.history, error: outcome.error })
}

/// Ask the Summarizer Expert for a three-line summary of `text`.
pub fn summarize_instance(text: &str, provider: &dyn ChatProvider) -> Result<String, DocSynthError> {
    if text.trim().is_empty() {
        return Err(DocSynthError::Precondition("cannot summarise an empty document".into()));
    }
    let instruction = format!(
        "You are Summarizer Expert. Please provide a three-line summary of the following document: <summarize> {} </summarize>.",
        text.trim()
    );
    let request = ChatRequest::user(instruction).with_system("You are Summarizer Expert.");
    Ok(provider.complete(&request)?.content.trim().to_string())
}
