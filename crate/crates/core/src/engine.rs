//! The meta-prompting loop.
//!
//! A meta model sees the whole [`ExecutionHistory`] and, each round, either
//! calls one expert, presents answer payloads, or ends the run. Experts see
//! only the instruction written for them. Callers customise the loop through
//! [`Orchestrator`] hooks: the injected instruction of each round, vetting
//! expert calls, receiving payloads, and deciding whether an end is allowed.

use std::io::Write;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatProvider, ChatRequest, GatewayError, Message, Role, DEFAULT_MAX_TOKENS, GENERATION_TEMPERATURE};
use crate::text::extract_tagged;

pub const DEFAULT_INJECTED_INSTRUCTION: &str =
    "Based on the information given, what are the most logical next steps or conclusions?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    InitialTask,
    MetaOutput,
    ExpertResult,
    InjectedInstruction,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub round: u32,
    pub kind: EntryKind,
    pub content: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("{0} must not be empty")]
    EmptyPrompt(&'static str),
    #[error("round limit must be positive")]
    ZeroRoundLimit,
}

/// The meta model's transcript. Entries are only ever appended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionHistory {
    entries: Vec<HistoryEntry>,
    round: u32,
    round_limit: u32,
}

impl ExecutionHistory {
    /// Build the first entry from the system prompt, meta prompt, task and
    /// rendered seeds, in that order.
    pub fn init(system: &str, meta: &str, task: &str, seeds: &str, round_limit: u32) -> Result<Self, EngineError> {
        for (label, value) in [("system prompt", system), ("meta prompt", meta), ("task description", task), ("seed block", seeds)] {
            if value.trim().is_empty() {
                return Err(EngineError::EmptyPrompt(label));
            }
        }
        if round_limit == 0 {
            return Err(EngineError::ZeroRoundLimit);
        }
        let content = [system.trim(), meta.trim(), task.trim(), seeds.trim()].join("\n\n");
        Ok(Self { entries: vec![HistoryEntry { round: 1, kind: EntryKind::InitialTask, content }], round: 1, round_limit })
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn round_limit(&self) -> u32 {
        self.round_limit
    }

    pub fn kinds(&self) -> Vec<EntryKind> {
        self.entries.iter().map(|e| e.kind).collect()
    }

    fn push(&mut self, kind: EntryKind, content: String) -> &HistoryEntry {
        self.entries.push(HistoryEntry { round: self.round, kind, content });
        self.entries.last().expect("just pushed")
    }

    /// Total characters the meta model would be sent.
    pub fn char_len(&self) -> usize {
        self.entries.iter().map(|e| e.content.len()).sum()
    }

    /// The meta model's request: meta outputs become assistant turns and
    /// everything else user turns, with adjacent same-role entries merged.
    pub fn to_request(&self, temperature: f64, max_tokens: u32) -> ChatRequest {
        let mut messages: Vec<Message> = Vec::new();
        for entry in &self.entries {
            let role = if entry.kind == EntryKind::MetaOutput { Role::Assistant } else { Role::User };
            match messages.last_mut() {
                Some(last) if last.role == role => {
                    last.content.push_str("\n\n");
                    last.content.push_str(&entry.content);
                }
                _ => messages.push(Message { role, content: entry.content.clone() }),
            }
        }
        ChatRequest { system: None, messages, temperature, max_tokens, stop_sequences: Vec::new() }
    }

    /// Write the transcript as JSONL of `{round, kind, content}`.
    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for entry in &self.entries {
            serde_json::to_writer(&mut out, entry)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

fn default_round_limit() -> u32 {
    256
}
fn default_error_retries() -> u32 {
    3
}
fn default_end_token() -> String {
    "<END>".into()
}
fn default_answer_tag() -> String {
    "document".into()
}
fn default_temperature() -> f64 {
    GENERATION_TEMPERATURE
}
fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(default = "default_round_limit")]
    pub round_limit: u32,
    /// Consecutive format errors tolerated before the run is discarded.
    #[serde(default = "default_error_retries")]
    pub max_error_retries: u32,
    #[serde(default)]
    pub required_expert_names: Vec<String>,
    /// Names accepted as experts even without the ` Expert` suffix.
    #[serde(default)]
    pub expert_aliases: Vec<String>,
    #[serde(default = "default_answer_tag")]
    pub answer_tag: String,
    /// When set, payloads are the `item_tag` blocks inside each `answer_tag` block.
    #[serde(default)]
    pub item_tag: Option<String>,
    #[serde(default = "default_end_token")]
    pub end_token: String,
    /// History size at which the run stops with a context-overflow status.
    #[serde(default)]
    pub max_history_chars: Option<usize>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self::documents()
    }
}

impl EngineConfig {
    pub fn documents() -> Self {
        Self {
            round_limit: 256,
            max_error_retries: 3,
            required_expert_names: [
                "Seed Keyword Extraction Expert",
                "Summarizer Expert",
                "Content Analyst Expert",
                "Seed Keyword Expansion Expert",
                "Domain Expert",
            ]
            .map(String::from)
            .to_vec(),
            expert_aliases: Vec::new(),
            answer_tag: "document".into(),
            item_tag: None,
            end_token: "<END>".into(),
            max_history_chars: None,
            temperature: GENERATION_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn instructions() -> Self {
        Self {
            round_limit: 128,
            required_expert_names: [
                "Document Transformation Expert",
                "Persona Suggestion Expert",
                "Question Generation Expert",
                "Evaluation Expert",
                "Complexity Expert",
                "Question Editor Expert",
            ]
            .map(String::from)
            .to_vec(),
            answer_tag: "questions".into(),
            item_tag: Some("question".into()),
            ..Self::documents()
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.round_limit == 0 {
            out.push("engine.round_limit must be positive".into());
        }
        if self.max_error_retries == 0 {
            out.push("engine.max_error_retries must be at least 1".into());
        }
        if self.answer_tag.trim().is_empty() {
            out.push("engine.answer_tag must not be empty".into());
        }
        if self.end_token.trim().is_empty() {
            out.push("engine.end_token must not be empty".into());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetaAction {
    ExpertCall { name: String, instruction: String },
    FinalAnswer { payloads: Vec<String>, end_follows: bool },
    End,
    FormatError(String),
}

fn call_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"(?m)^[ \t>#*-]*([^\n:"]+?)[ \t*]*:[ \t*]*(?:\r?\n[ \t]*)?""""#).expect("valid regex"))
}

fn expert_name_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[A-Za-z/ ]+ Expert$").expect("valid regex"))
}

fn is_expert_name(name: &str, aliases: &[String]) -> bool {
    expert_name_regex().is_match(name) || aliases.iter().any(|a| a.eq_ignore_ascii_case(name))
}

/// Every well-formed expert call in `text`, in order.
pub fn expert_calls(text: &str, config: &EngineConfig) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut offset = 0;
    while let Some(caps) = call_regex().captures(&text[offset..]) {
        let whole = caps.get(0).expect("match");
        let name = caps[1].trim().to_string();
        let body_start = offset + whole.end();
        let Some(close) = text[body_start..].find(r#"""""#) else { break };
        let instruction = text[body_start..body_start + close].trim().to_string();
        offset = body_start + close + 3;
        if is_expert_name(&name, &config.expert_aliases) && !instruction.is_empty() {
            out.push((name, instruction));
        }
    }
    out
}

/// `text` with every triple-quoted block removed, so answer tags and end
/// tokens quoted inside an expert instruction are not mistaken for the meta
/// model's own answer.
fn outside_quotes(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut parts = text.split(r#"""""#);
    if let Some(first) = parts.next() {
        out.push_str(first);
    }
    for (i, part) in parts.enumerate() {
        if i % 2 == 1 {
            out.push_str(part);
        }
    }
    out
}

fn answer_payloads(text: &str, config: &EngineConfig) -> Vec<String> {
    let blocks = extract_tagged(text, &config.answer_tag);
    let payloads: Vec<String> = match &config.item_tag {
        Some(item) => blocks.iter().flat_map(|b| extract_tagged(b, item)).collect(),
        None => blocks,
    };
    payloads.into_iter().filter(|p| !p.is_empty()).collect()
}

/// Classify one meta model output. Never fails.
pub fn parse_meta_output(text: &str, config: &EngineConfig) -> MetaAction {
    let outside = outside_quotes(text);
    let has_end = outside.to_lowercase().contains(&config.end_token.to_lowercase());
    let payloads = answer_payloads(&outside, config);
    if has_end && payloads.is_empty() {
        return MetaAction::End;
    }
    if !payloads.is_empty() {
        return MetaAction::FinalAnswer { payloads, end_follows: has_end };
    }
    if let Some((name, instruction)) = expert_calls(text, config).into_iter().next() {
        return MetaAction::ExpertCall { name, instruction };
    }
    let reason = if text.trim().is_empty() { "empty output" } else { "no expert call, answer, or end token found" };
    MetaAction::FormatError(reason.into())
}

/// The request an expert receives: its role framing and the instruction,
/// nothing else.
pub fn render_expert_prompt(name: &str, instruction: &str) -> Result<ChatRequest, EngineError> {
    if name.trim().is_empty() {
        return Err(EngineError::EmptyPrompt("expert name"));
    }
    if instruction.trim().is_empty() {
        return Err(EngineError::EmptyPrompt("expert instruction"));
    }
    Ok(ChatRequest::user(instruction).with_system(format!(
        "You are {}. Follow the instruction you are given. You have no other context.",
        name.trim()
    )))
}

fn format_expert_result(name: &str, reply: &str) -> String {
    format!("{name}'s output:\n\"\"\"\n{}\n\"\"\"", reply.trim())
}

fn format_error_message(reason: &str, config: &EngineConfig) -> String {
    let answer = match &config.item_tag {
        Some(item) => format!("<{0}><{1}>...</{1}></{0}>", config.answer_tag, item),
        None => format!("<{0}>...</{0}>", config.answer_tag),
    };
    format!(
        "Formatting error ({reason}). Reply with exactly one of: an expert call written as Expert Name: \"\"\"instructions\"\"\", an answer in {answer} tags, or {}.",
        config.end_token
    )
}

/// Caller hooks into the loop. Every method has a permissive default.
pub trait Orchestrator {
    /// Text appended as the injected instruction at the start of each round.
    fn injected_instruction(&mut self, _history: &ExecutionHistory) -> String {
        DEFAULT_INJECTED_INSTRUCTION.to_string()
    }

    /// Vet or rewrite an expert call before dispatch. `Err` refuses the call;
    /// the message is shown to the meta model next round.
    fn prepare_expert_call(&mut self, _name: &str, instruction: &str, _round: u32) -> Result<String, String> {
        Ok(instruction.to_string())
    }

    /// Observe an expert reply. A returned note is shown next round.
    fn on_expert_result(&mut self, _name: &str, _instruction: &str, _reply: &str, _round: u32) -> Option<String> {
        None
    }

    /// Receive answer payloads. A returned note is shown next round.
    fn on_payloads(&mut self, _payloads: &[String], _round: u32) -> Option<String> {
        None
    }

    /// Allow or refuse an end token. A refusal keeps the loop running.
    fn accept_end(&mut self) -> Result<(), String> {
        Ok(())
    }

    /// Called for every entry appended to the history.
    fn on_entry(&mut self, _entry: &HistoryEntry) {}
}

/// Orchestrator that takes all defaults.
pub struct PassThrough;
impl Orchestrator for PassThrough {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Discarded,
    Incomplete,
    ContextOverflow,
    Failed,
}

/// What one round produced.
#[derive(Debug, Clone, PartialEq)]
pub enum RoundResult {
    Continue,
    Finished(RunStatus),
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub history: ExecutionHistory,
    pub payloads: Vec<String>,
    pub error: Option<GatewayError>,
}

/// Runs the loop against a meta model and an expert model, which may be the
/// same provider.
pub struct MetaEngine {
    pub config: EngineConfig,
    meta: Arc<dyn ChatProvider>,
    experts: Arc<dyn ChatProvider>,
    consecutive_errors: u32,
    pending_end: bool,
    notes: Vec<String>,
    payloads: Vec<String>,
}

impl MetaEngine {
    pub fn new(config: EngineConfig, meta: Arc<dyn ChatProvider>, experts: Arc<dyn ChatProvider>) -> Self {
        Self { config, meta, experts, consecutive_errors: 0, pending_end: false, notes: Vec::new(), payloads: Vec::new() }
    }

    fn append(&self, history: &mut ExecutionHistory, orch: &mut dyn Orchestrator, kind: EntryKind, content: String) {
        let entry = history.push(kind, content);
        orch.on_entry(entry);
    }

    /// One iteration: inject, query the meta model, act on its output.
    pub fn run_round(
        &mut self,
        history: &mut ExecutionHistory,
        orch: &mut dyn Orchestrator,
    ) -> Result<RoundResult, GatewayError> {
        if history.round > history.round_limit {
            return Ok(RoundResult::Finished(RunStatus::Incomplete));
        }
        if self.pending_end {
            self.pending_end = false;
            match orch.accept_end() {
                Ok(()) => return Ok(RoundResult::Finished(RunStatus::Completed)),
                Err(note) => self.notes.push(note),
            }
        }

        let mut injected = orch.injected_instruction(history);
        for note in self.notes.drain(..) {
            injected.push_str("\n\n");
            injected.push_str(&note);
        }
        self.append(history, orch, EntryKind::InjectedInstruction, injected);
        if self.config.max_history_chars.is_some_and(|max| history.char_len() > max) {
            return Ok(RoundResult::Finished(RunStatus::ContextOverflow));
        }

        let output = self.meta.complete(&history.to_request(self.config.temperature, self.config.max_tokens))?.content;
        self.append(history, orch, EntryKind::MetaOutput, output.clone());
        let round = history.round;

        match parse_meta_output(&output, &self.config) {
            MetaAction::ExpertCall { name, instruction } => {
                self.consecutive_errors = 0;
                let extra = expert_calls(&output, &self.config).len().saturating_sub(1);
                if extra > 0 {
                    self.notes.push(format!(
                        "Warning: {extra} additional expert call(s) in your last output were ignored. Call one expert at a time."
                    ));
                }
                match orch.prepare_expert_call(&name, &instruction, round) {
                    Err(refusal) => self.notes.push(refusal),
                    Ok(instruction) => {
                        let request = render_expert_prompt(&name, &instruction)
                            .map_err(|e| GatewayError::InvalidRequest(e.to_string()))?;
                        let reply = self.experts.complete(&request)?.content;
                        self.append(history, orch, EntryKind::ExpertResult, format_expert_result(&name, &reply));
                        if let Some(note) = orch.on_expert_result(&name, &instruction, &reply, round) {
                            self.notes.push(note);
                        }
                    }
                }
            }
            MetaAction::FinalAnswer { payloads, end_follows } => {
                self.consecutive_errors = 0;
                if let Some(note) = orch.on_payloads(&payloads, round) {
                    self.notes.push(note);
                }
                self.payloads.extend(payloads);
                self.pending_end = end_follows;
            }
            MetaAction::End => {
                self.consecutive_errors = 0;
                match orch.accept_end() {
                    Ok(()) => return Ok(RoundResult::Finished(RunStatus::Completed)),
                    Err(note) => self.notes.push(note),
                }
            }
            MetaAction::FormatError(reason) => {
                let message = format_error_message(&reason, &self.config);
                self.append(history, orch, EntryKind::Error, message);
                self.consecutive_errors += 1;
                if self.consecutive_errors >= self.config.max_error_retries {
                    return Ok(RoundResult::Finished(RunStatus::Discarded));
                }
            }
        }

        if history.round >= history.round_limit {
            return Ok(RoundResult::Finished(RunStatus::Incomplete));
        }
        history.round += 1;
        Ok(RoundResult::Continue)
    }

    /// Run rounds until a terminal status. Provider failures end the run with
    /// [`RunStatus::Failed`] and the error attached.
    pub fn run(mut self, mut history: ExecutionHistory, orch: &mut dyn Orchestrator) -> RunOutcome {
        for entry in history.entries.clone() {
            orch.on_entry(&entry);
        }
        loop {
            match self.run_round(&mut history, orch) {
                Ok(RoundResult::Continue) => {}
                Ok(RoundResult::Finished(status)) => {
                    return RunOutcome { status, history, payloads: self.payloads, error: None };
                }
                Err(error) => {
                    return RunOutcome { status: RunStatus::Failed, history, payloads: self.payloads, error: Some(error) };
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedProvider;

    fn cfg() -> EngineConfig {
        EngineConfig::documents()
    }

    fn history(limit: u32) -> ExecutionHistory {
        ExecutionHistory::init("sys", "meta", "task", "seeds", limit).unwrap()
    }

    #[test]
    fn init_orders_blocks() {
        let h = history(5);
        assert_eq!(h.entries().len(), 1);
        assert_eq!(h.round(), 1);
        assert_eq!(h.entries()[0].content, "sys\n\nmeta\n\ntask\n\nseeds");
        assert_eq!(ExecutionHistory::init("sys", "meta", " ", "seeds", 5), Err(EngineError::EmptyPrompt("task description")));
    }

    #[test]
    fn parses_expert_call() {
        let action = parse_meta_output(r#"Content Analyst Expert: """Compare these summaries...""""#, &cfg());
        assert_eq!(
            action,
            MetaAction::ExpertCall { name: "Content Analyst Expert".into(), instruction: "Compare these summaries...".into() }
        );
        let multiline = "I will ask.\n\n**Writing/Linguistics Expert**:\n\"\"\"\nCheck style.\n\"\"\"";
        assert!(matches!(parse_meta_output(multiline, &cfg()), MetaAction::ExpertCall { name, .. } if name == "Writing/Linguistics Expert"));
    }

    #[test]
    fn parses_answers_and_end() {
        assert_eq!(
            parse_meta_output("<document>Alpha beta.</document>", &cfg()),
            MetaAction::FinalAnswer { payloads: vec!["Alpha beta.".into()], end_follows: false }
        );
        assert_eq!(parse_meta_output("<END>", &cfg()), MetaAction::End);
        assert!(matches!(parse_meta_output("just thinking aloud", &cfg()), MetaAction::FormatError(_)));
        assert_eq!(
            parse_meta_output("<document>x</document>\n<END>", &cfg()),
            MetaAction::FinalAnswer { payloads: vec!["x".into()], end_follows: true }
        );
    }

    #[test]
    fn tags_inside_instructions_are_not_answers() {
        let text = "Domain Expert: \"\"\"Write it and wrap it in <document> </document> tags. Do not output <END>.\"\"\"";
        assert!(matches!(parse_meta_output(text, &cfg()), MetaAction::ExpertCall { .. }));
    }

    #[test]
    fn item_tags_for_questions() {
        let c = EngineConfig::instructions();
        let text = "<questions><question>Q1?</question><question> </question><question>Q2?</question></questions>";
        assert_eq!(
            parse_meta_output(text, &c),
            MetaAction::FinalAnswer { payloads: vec!["Q1?".into(), "Q2?".into()], end_follows: false }
        );
    }

    #[test]
    fn names_must_end_in_expert_unless_aliased() {
        let text = r#"Venture Capitalist: """Write a pitch.""""#;
        assert!(matches!(parse_meta_output(text, &cfg()), MetaAction::FormatError(_)));
        let mut c = cfg();
        c.expert_aliases.push("Venture Capitalist".into());
        assert!(matches!(parse_meta_output(text, &c), MetaAction::ExpertCall { .. }));
    }

    #[test]
    fn expert_round_appends_output_and_result() {
        let meta = Arc::new(ScriptedProvider::new([r#"Summarizer Expert: """Summarize: X""""#]));
        let experts = Arc::new(ScriptedProvider::new(["OK"]));
        let mut engine = MetaEngine::new(cfg(), meta, experts.clone());
        let mut h = history(5);
        assert_eq!(engine.run_round(&mut h, &mut PassThrough).unwrap(), RoundResult::Continue);
        assert_eq!(
            h.kinds(),
            vec![EntryKind::InitialTask, EntryKind::InjectedInstruction, EntryKind::MetaOutput, EntryKind::ExpertResult]
        );
        assert_eq!(h.round(), 2);
        let sent = &experts.captured()[0];
        assert_eq!(sent.messages.len(), 1);
        assert_eq!(sent.messages[0].content, "Summarize: X");
    }

    #[test]
    fn three_format_errors_discard() {
        let meta = Arc::new(ScriptedProvider::new(["hmm", "still thinking", "no idea"]));
        let engine = MetaEngine::new(cfg(), meta.clone(), meta);
        let out = engine.run(history(10), &mut PassThrough);
        assert_eq!(out.status, RunStatus::Discarded);
        assert_eq!(out.history.kinds().iter().filter(|k| **k == EntryKind::Error).count(), 3);
    }

    #[test]
    fn round_limit_marks_incomplete() {
        let meta = Arc::new(ScriptedProvider::new(["<document>a</document>"; 3]));
        let out = MetaEngine::new(cfg(), meta.clone(), meta).run(history(3), &mut PassThrough);
        assert_eq!(out.status, RunStatus::Incomplete);
        assert_eq!(out.history.round(), 3);
        assert_eq!(out.payloads.len(), 3);
    }

    #[test]
    fn answer_with_end_finishes_next_round_without_a_call() {
        let meta = Arc::new(ScriptedProvider::new(["<document>a</document><END>"]));
        let out = MetaEngine::new(cfg(), meta.clone(), meta.clone()).run(history(5), &mut PassThrough);
        assert_eq!(out.status, RunStatus::Completed);
        assert_eq!(meta.calls(), 1);
        assert_eq!(out.payloads, vec!["a"]);
    }

    #[test]
    fn extra_calls_produce_a_warning() {
        let text = "A Expert: \"\"\"one\"\"\"\nB Expert: \"\"\"two\"\"\"";
        let meta = Arc::new(ScriptedProvider::new([text, "<END>"]));
        let experts = Arc::new(ScriptedProvider::new(["r"]));
        let out = MetaEngine::new(cfg(), meta, experts.clone()).run(history(5), &mut PassThrough);
        assert_eq!(experts.calls(), 1);
        let injected: Vec<_> = out.history.entries().iter().filter(|e| e.kind == EntryKind::InjectedInstruction).collect();
        assert!(injected[1].content.contains("1 additional expert call"));
    }

    #[test]
    fn context_overflow() {
        let mut c = cfg();
        c.max_history_chars = Some(10);
        let meta = Arc::new(ScriptedProvider::new(["<END>"]));
        let out = MetaEngine::new(c, meta.clone(), meta).run(history(5), &mut PassThrough);
        assert_eq!(out.status, RunStatus::ContextOverflow);
    }

    #[test]
    fn provider_failure_is_reported() {
        let meta = Arc::new(ScriptedProvider::new(Vec::<String>::new()));
        let out = MetaEngine::new(cfg(), meta.clone(), meta).run(history(5), &mut PassThrough);
        assert_eq!(out.status, RunStatus::Failed);
        assert!(matches!(out.error, Some(GatewayError::ScriptExhausted { .. })));
    }
}
