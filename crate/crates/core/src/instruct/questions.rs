use std::collections::HashSet;
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Instruction, MAX_INSTRUCTION_WORDS};
use crate::engine::{EngineConfig, ExecutionHistory, HistoryEntry, MetaEngine, Orchestrator, RunStatus};
use crate::gateway::{ChatProvider, GatewayError};
use crate::prompts::{render, TaskPreset, INSTRUCT_META_SYSTEM, INSTRUCT_META_USER};
use crate::text::{count_words, extract_tagged, first_tagged, normalize_whitespace};

fn default_max_words() -> usize {
    100
}

fn default_accept_words() -> usize {
    MAX_INSTRUCTION_WORDS
}

fn default_max_per_doc() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructRunConfig {
    pub task_description: String,
    /// Length the task description asks for.
    #[serde(default = "default_max_words")]
    pub max_words: usize,
    /// Hard cap applied to emitted instructions.
    #[serde(default = "default_accept_words")]
    pub accept_words: usize,
    #[serde(default = "default_max_per_doc")]
    pub max_instructions_per_doc: usize,
    pub engine: EngineConfig,
}

impl InstructRunConfig {
    pub fn new(task_description: impl Into<String>) -> Self {
        Self {
            task_description: task_description.into(),
            max_words: default_max_words(),
            accept_words: default_accept_words(),
            max_instructions_per_doc: default_max_per_doc(),
            engine: EngineConfig::instructions(),
        }
    }

    pub fn preset(preset: TaskPreset) -> Self {
        Self::new(preset.text())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstructionRole {
    DocumentTransformation,
    PersonaSuggestion,
    QuestionGeneration,
    Evaluation,
    Complexity,
    QuestionEditor,
    Other,
}

impl InstructionRole {
    pub fn of(name: &str) -> Self {
        let n = name.to_lowercase();
        if n.contains("transformation") {
            Self::DocumentTransformation
        } else if n.contains("persona") {
            Self::PersonaSuggestion
        } else if n.contains("question generation") {
            Self::QuestionGeneration
        } else if n.contains("evaluation") {
            Self::Evaluation
        } else if n.contains("complexity") {
            Self::Complexity
        } else if n.contains("editor") {
            Self::QuestionEditor
        } else {
            Self::Other
        }
    }

    fn action(self) -> &'static str {
        match self {
            Self::DocumentTransformation => "transform",
            Self::PersonaSuggestion => "suggest_personas",
            Self::QuestionGeneration => "generate",
            Self::Evaluation => "evaluate",
            Self::Complexity => "complexify",
            Self::QuestionEditor => "edit",
            Self::Other => "consult",
        }
    }
}

/// Question payloads from every `<questions>` block, in order, with a
/// warning for each malformed region.
pub fn parse_questions_with_warnings(text: &str) -> (Vec<String>, Vec<String>) {
    let mut warnings = Vec::new();
    let mut out = Vec::new();
    for block in extract_tagged(text, "questions") {
        let found = extract_tagged(&block, "question");
        let opens = block.matches("<question>").count();
        if opens > found.len() {
            warnings.push(format!("{} unterminated <question> tag(s) skipped", opens - found.len()));
        }
        for q in found {
            if q.is_empty() {
                warnings.push("empty <question> skipped".into());
            } else {
                out.push(q);
            }
        }
    }
    let opens = text.matches("<questions>").count();
    let closes = text.matches("</questions>").count();
    if opens > closes {
        warnings.push("unterminated <questions> block skipped".into());
    }
    (out, warnings)
}

pub fn parse_questions(text: &str) -> Vec<String> {
    let (out, warnings) = parse_questions_with_warnings(text);
    for w in warnings {
        log::warn!("{w}");
    }
    out
}

fn as_a_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\bAs an?\b").expect("valid regex"))
}

fn contains_word_phrase(text: &str, phrase: &str) -> bool {
    let phrase = phrase.trim();
    if phrase.is_empty() {
        return false;
    }
    let pattern = format!(r"(?i)\b{}\b", regex::escape(phrase));
    Regex::new(&pattern).map(|re| re.is_match(text)).unwrap_or(false)
}

/// Why `question` may not be emitted, if it breaks the phrase or name bans.
pub fn banned_reason(question: &str, names: &[String]) -> Option<String> {
    let lower = question.to_lowercase();
    for phrase in ["based on the document", "according to the document"] {
        if lower.contains(phrase) {
            return Some(format!("contains banned phrase \"{phrase}\""));
        }
    }
    if as_a_regex().is_match(question) {
        return Some("contains banned phrase \"As a\"".into());
    }
    names.iter().find(|n| contains_word_phrase(question, n)).map(|n| format!("mentions expert or persona name \"{}\"", n.trim()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredQuestion {
    pub text: String,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct InstructRunOutput {
    pub instructions: Vec<Instruction>,
    pub filtered: Vec<FilteredQuestion>,
    pub status: RunStatus,
    pub history: ExecutionHistory,
    pub error: Option<GatewayError>,
}

fn parse_personas(reply: &str) -> Vec<String> {
    let body = first_tagged(reply, "personas").unwrap_or_else(|| reply.to_string());
    let mut out = Vec::new();
    for line in body.lines() {
        let item = line.trim().trim_start_matches(|c: char| c.is_ascii_digit() || "-*.)• ".contains(c));
        let item = item.split(':').next().unwrap_or("").trim().trim_matches('*').trim();
        if !item.is_empty() && count_words(item) <= 6 {
            out.push(item.to_string());
        }
    }
    if out.len() <= 1 && body.contains(',') {
        out = body.split(',').map(|s| s.trim().trim_matches(['[', ']', '.']).trim().to_string()).filter(|s| !s.is_empty()).collect();
    }
    out
}

fn rejects(reply: &str) -> bool {
    if let Some(v) = first_tagged(reply, "verdict") {
        let v = v.to_lowercase();
        return v.contains("reject") || v.contains("not");
    }
    let t = reply.to_lowercase();
    ["not sufficiently complex", "not complex enough", "reject", "too simple", "not sufficiently difficult"]
        .iter()
        .any(|p| t.contains(p))
}

struct InstructTracker<'a> {
    doc: &'a Document,
    config: &'a InstructRunConfig,
    personas: Vec<String>,
    persona: Option<String>,
    called: Vec<String>,
    trace: Vec<(String, String)>,
    needs_evolution: bool,
    complexity_done: bool,
    seen: HashSet<String>,
    instructions: Vec<Instruction>,
    filtered: Vec<FilteredQuestion>,
}

impl InstructTracker<'_> {
    fn banned_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.config.engine.required_expert_names.clone();
        names.extend(self.called.iter().cloned());
        names.extend(self.personas.iter().cloned());
        names
    }

    fn consider(&mut self, text: &str) -> Result<(), String> {
        if self.instructions.len() >= self.config.max_instructions_per_doc {
            return Err(format!("the limit of {} questions per document is reached", self.config.max_instructions_per_doc));
        }
        let words = count_words(text);
        if words > self.config.accept_words {
            return Err(format!("has {words} words, limit is {}", self.config.accept_words));
        }
        if let Some(reason) = banned_reason(text, &self.banned_names()) {
            return Err(reason);
        }
        let key = normalize_whitespace(text).to_lowercase();
        if !self.seen.insert(key) {
            return Err("duplicates an earlier question".into());
        }
        let id = format!("{}-q{}", self.doc.id, self.instructions.len() + 1);
        self.instructions.push(Instruction {
            id,
            text: text.to_string(),
            parent_document_id: self.doc.id.clone(),
            persona: self.persona.clone(),
            evolution_trace: self.trace.clone(),
            word_count: words,
        });
        Ok(())
    }
}

impl Orchestrator for InstructTracker<'_> {
    fn on_expert_result(&mut self, name: &str, instruction: &str, reply: &str, _round: u32) -> Option<String> {
        let role = InstructionRole::of(name);
        if !self.called.iter().any(|c| c.eq_ignore_ascii_case(name)) {
            self.called.push(name.to_string());
        }
        let mut action = role.action().to_string();
        match role {
            InstructionRole::PersonaSuggestion => {
                for p in parse_personas(reply) {
                    if !self.personas.iter().any(|q| q.eq_ignore_ascii_case(&p)) {
                        self.personas.push(p);
                    }
                }
            }
            InstructionRole::QuestionGeneration => {
                let lower = instruction.to_lowercase();
                self.persona = self
                    .personas
                    .iter()
                    .filter_map(|p| lower.rfind(&p.to_lowercase()).map(|at| (at, p)))
                    .max_by_key(|(at, _)| *at)
                    .map(|(_, p)| p.clone());
                self.trace.clear();
                self.needs_evolution = false;
                self.complexity_done = false;
            }
            InstructionRole::Evaluation => {
                let rejected = rejects(reply);
                action = if rejected { "evaluate:reject".into() } else { "evaluate:accept".into() };
                if rejected {
                    self.needs_evolution = true;
                    self.complexity_done = false;
                }
            }
            InstructionRole::Complexity => {
                if self.needs_evolution {
                    self.complexity_done = true;
                }
            }
            InstructionRole::QuestionEditor => {
                if self.needs_evolution && self.complexity_done {
                    self.needs_evolution = false;
                }
            }
            _ => {}
        }
        self.trace.push((name.to_string(), action));
        None
    }

    fn on_payloads(&mut self, payloads: &[String], _round: u32) -> Option<String> {
        if self.needs_evolution {
            return Some(
                "Evaluation Expert rejected the current questions. Call Complexity Expert and then Question Editor Expert to evolve them before presenting any questions."
                    .into(),
            );
        }
        let mut notes = Vec::new();
        for p in payloads {
            if let Err(reason) = self.consider(p) {
                notes.push(format!("A presented question was not accepted: it {reason}."));
                self.filtered.push(FilteredQuestion { text: p.clone(), reason });
            }
        }
        if self.instructions.len() >= self.config.max_instructions_per_doc {
            notes.push(format!("{} questions have been accepted for this document; output {} now.", self.instructions.len(), self.config.engine.end_token));
        }
        (!notes.is_empty()).then(|| notes.join("\n"))
    }
}

struct Forward<'a, 'b> {
    inner: &'a mut InstructTracker<'b>,
    observer: &'a mut dyn FnMut(&HistoryEntry),
}

impl Orchestrator for Forward<'_, '_> {
    fn on_expert_result(&mut self, name: &str, instruction: &str, reply: &str, round: u32) -> Option<String> {
        self.inner.on_expert_result(name, instruction, reply, round)
    }
    fn on_payloads(&mut self, payloads: &[String], round: u32) -> Option<String> {
        self.inner.on_payloads(payloads, round)
    }
    fn on_entry(&mut self, entry: &HistoryEntry) {
        (self.observer)(entry)
    }
}

/// Run one instruction-synthesis session over `doc`.
pub fn synthesize_instructions(
    doc: &Document,
    config: &InstructRunConfig,
    meta: Arc<dyn ChatProvider>,
    experts: Arc<dyn ChatProvider>,
    on_entry: &mut dyn FnMut(&HistoryEntry),
) -> Result<InstructRunOutput, String> {
    if config.task_description.trim().is_empty() {
        return Err("task description is empty".into());
    }
    if doc.text.trim().is_empty() {
        return Err(format!("document {} has no text", doc.id));
    }
    let problems = config.engine.problems();
    if !problems.is_empty() {
        return Err(problems.join("; "));
    }
    let limit = config.engine.round_limit.to_string();
    let vars = [("task_description", config.task_description.trim()), ("round_limit", limit.as_str())];
    let history = ExecutionHistory::init(
        &render(INSTRUCT_META_SYSTEM, &vars),
        &render(INSTRUCT_META_USER, &vars),
        config.task_description.trim(),
        &format!("<document>\n{}\n</document>", doc.text.trim()),
        config.engine.round_limit,
    )
    .map_err(|e| e.to_string())?;
    let mut tracker = InstructTracker {
        doc,
        config,
        personas: Vec::new(),
        persona: None,
        called: Vec::new(),
        trace: Vec::new(),
        needs_evolution: false,
        complexity_done: false,
        seen: HashSet::new(),
        instructions: Vec::new(),
        filtered: Vec::new(),
    };
    let outcome = {
        let mut fwd = Forward { inner: &mut tracker, observer: on_entry };
        MetaEngine::new(config.engine.clone(), meta, experts).run(history, &mut fwd)
    };
    Ok(InstructRunOutput {
        instructions: tracker.instructions,
        filtered: tracker.filtered,
        status: outcome.status,
        history: outcome.history,
        error: outcome.error,
    })
}
