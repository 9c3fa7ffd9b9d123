//! Typed corpus records and JSONL persistence.
//!
//! Every corpus is a JSONL file with one record per line. Files are only ever
//! appended to; a [`CorpusSink`] owns the single writer for a path and rejects
//! records that break their type invariants before anything touches disk.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::count_words;

/// Default accepted word-count window for synthesized documents.
pub const DEFAULT_DOCUMENT_WINDOW: LengthWindow = LengthWindow { min: 200, max: 520 };
/// Target length requested from document writers.
pub const TARGET_DOCUMENT_WORDS: usize = 400;
/// Instructions are requested at 100 words and accepted up to this many.
pub const MAX_INSTRUCTION_WORDS: usize = 120;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus file {0} does not exist")]
    MissingFile(PathBuf),
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("invalid record: {0}")]
    Validation(String),
    #[error("a sink is already open for {0}")]
    SinkInUse(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization failed: {0}")]
    Serialize(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthWindow {
    pub min: usize,
    pub max: usize,
}

impl LengthWindow {
    pub fn contains(&self, words: usize) -> bool {
        (self.min..=self.max).contains(&words)
    }
}

impl Default for LengthWindow {
    fn default() -> Self {
        DEFAULT_DOCUMENT_WINDOW
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LengthCheck {
    pub words: usize,
    pub pass: bool,
}

/// Measure `text` and test it against `window`.
///
/// `target_words` must lie inside the window; it is informational only, the
/// pass/fail decision is the window test.
pub fn validate_length(text: &str, target_words: usize, window: LengthWindow) -> LengthCheck {
    debug_assert!(window.contains(target_words), "target outside acceptance window");
    let words = count_words(text);
    LengthCheck { words, pass: window.contains(words) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentSource {
    Metasynth,
    Template,
    Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub word_count: usize,
    pub source: DocumentSource,
    pub domain: String,
    pub seed_snapshot: Vec<String>,
    pub summary: Option<String>,
    pub category: Option<String>,
    pub created_round: u64,
    /// Feedback that caused a draft to be rejected. Only set in rejected corpora.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection_reason: Option<String>,
}

impl Document {
    /// Build a document with `word_count` derived from `text`.
    pub fn new(id: impl Into<String>, text: impl Into<String>, source: DocumentSource, domain: impl Into<String>) -> Self {
        let text = text.into();
        Self {
            id: id.into(),
            word_count: count_words(&text),
            text,
            source,
            domain: domain.into(),
            seed_snapshot: Vec::new(),
            summary: None,
            category: None,
            created_round: 0,
            rejection_reason: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instruction {
    pub id: String,
    pub text: String,
    pub parent_document_id: String,
    pub persona: Option<String>,
    /// `(expert_name, action)` pairs in the order they touched this instruction.
    pub evolution_trace: Vec<(String, String)>,
    pub word_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptFormat {
    FreeForm,
    Cot,
    ConstrainedCot,
}

impl PromptFormat {
    pub const ALL: [PromptFormat; 3] = [PromptFormat::FreeForm, PromptFormat::Cot, PromptFormat::ConstrainedCot];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub instruction_id: String,
    pub prompt_format: PromptFormat,
    pub word_limit: Option<u32>,
    pub response_text: String,
}

/// Any JSON object carrying a `text` field. Used for reference and target
/// corpora whose schema we do not control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
}

/// Invariant checks applied by [`CorpusSink::append`].
#[derive(Debug, Clone, Default)]
pub struct ValidationRules {
    pub document_window: LengthWindow,
    /// When false, synthesized documents of any length are accepted
    /// (used for the rejected-draft corpus).
    pub skip_length_window: bool,
    /// Ids of documents that instructions may point at. `None` skips the check.
    pub known_documents: Option<HashSet<String>>,
}

pub trait Record: Serialize + DeserializeOwned + Clone + Send + Sync {
    /// Unique key within a corpus, if the type has one.
    fn key(&self) -> Option<&str>;
    fn validate(&self, rules: &ValidationRules) -> Result<(), String>;
}

impl Record for Document {
    fn key(&self) -> Option<&str> {
        Some(&self.id)
    }

    fn validate(&self, rules: &ValidationRules) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("document id is empty".into());
        }
        let measured = count_words(&self.text);
        if measured != self.word_count {
            return Err(format!("word_count {} does not match text ({measured} words)", self.word_count));
        }
        let synthesized = matches!(self.source, DocumentSource::Metasynth | DocumentSource::Template);
        if synthesized && !rules.skip_length_window && !rules.document_window.contains(measured) {
            return Err(format!(
                "{measured} words is outside the window {}..={}",
                rules.document_window.min, rules.document_window.max
            ));
        }
        Ok(())
    }
}

impl Record for Instruction {
    fn key(&self) -> Option<&str> {
        Some(&self.id)
    }

    fn validate(&self, rules: &ValidationRules) -> Result<(), String> {
        let measured = count_words(&self.text);
        if measured != self.word_count {
            return Err(format!("word_count {} does not match text ({measured} words)", self.word_count));
        }
        if measured > MAX_INSTRUCTION_WORDS {
            return Err(format!("instruction has {measured} words, limit is {MAX_INSTRUCTION_WORDS}"));
        }
        if let Some(known) = &rules.known_documents {
            if !known.contains(&self.parent_document_id) {
                return Err(format!("unknown parent document {}", self.parent_document_id));
            }
        }
        Ok(())
    }
}

impl Record for ResponseRecord {
    fn key(&self) -> Option<&str> {
        None
    }

    fn validate(&self, _rules: &ValidationRules) -> Result<(), String> {
        match (self.prompt_format, self.word_limit) {
            (PromptFormat::ConstrainedCot, Some(limit)) if valid_word_limit(limit) => Ok(()),
            (PromptFormat::ConstrainedCot, Some(limit)) => Err(format!("word limit {limit} is not a multiple of 50 in [50, 500]")),
            (PromptFormat::ConstrainedCot, None) => Err("constrained_cot requires a word limit".into()),
            (_, Some(_)) => Err("word limit is only allowed for constrained_cot".into()),
            (_, None) => Ok(()),
        }
    }
}

impl Record for TextRecord {
    fn key(&self) -> Option<&str> {
        self.id.as_deref()
    }

    fn validate(&self, _rules: &ValidationRules) -> Result<(), String> {
        Ok(())
    }
}

pub fn valid_word_limit(limit: u32) -> bool {
    (50..=500).contains(&limit) && limit % 50 == 0
}

#[derive(Debug, Clone)]
pub struct Corpus<R> {
    pub records: Vec<R>,
    pub path: PathBuf,
}

#[derive(Debug)]
pub struct LoadedCorpus<R> {
    pub corpus: Corpus<R>,
    /// Lines that failed to parse, with 1-based line numbers.
    pub errors: Vec<LineError>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

/// Read a JSONL corpus.
///
/// Blank lines are ignored. In non-strict mode malformed lines are collected
/// and loading continues; in strict mode the first one is returned as an error.
pub fn load_corpus<R: Record>(path: &Path, strict: bool) -> Result<LoadedCorpus<R>, CorpusError> {
    if !path.exists() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<R>(&line).map_err(|e| e.to_string()).and_then(|record| {
            match record.key() {
                Some(key) if !seen.insert(key.to_string()) => Err(format!("duplicate id {key}")),
                _ => Ok(record),
            }
        });
        match parsed {
            Ok(record) => records.push(record),
            Err(message) if strict => return Err(CorpusError::Line { line: line_no, message }),
            Err(message) => errors.push(LineError { line: line_no, message }),
        }
    }
    Ok(LoadedCorpus { corpus: Corpus { records, path: path.to_path_buf() }, errors })
}

fn open_sinks() -> &'static Mutex<HashSet<PathBuf>> {
    static OPEN: OnceLock<Mutex<HashSet<PathBuf>>> = OnceLock::new();
    OPEN.get_or_init(Default::default)
}

struct SinkState {
    file: File,
    keys: HashSet<String>,
    appended: usize,
}

/// The single append handle for one corpus file.
///
/// Appends from many threads are serialized internally; each record is
/// written with one `write_all` of a complete line, so readers never observe
/// a partial line from a finished append.
pub struct CorpusSink<R> {
    path: PathBuf,
    rules: ValidationRules,
    state: Mutex<SinkState>,
    _record: PhantomData<fn(R)>,
}

impl<R: Record> CorpusSink<R> {
    /// Open (creating if needed) `path` for appending.
    ///
    /// Existing records are scanned so that id uniqueness holds across
    /// sessions. Opening a second sink for the same path fails until the
    /// first is dropped.
    pub fn open(path: &Path, rules: ValidationRules) -> Result<Self, CorpusError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
        let canonical = path.canonicalize().map_err(io_err(path))?;
        {
            let mut open = open_sinks().lock().expect("sink registry poisoned");
            if !open.insert(canonical.clone()) {
                return Err(CorpusError::SinkInUse(path.to_path_buf()));
            }
        }
        let keys = match load_corpus::<R>(path, false) {
            Ok(loaded) => loaded.corpus.records.iter().filter_map(|r| r.key().map(str::to_owned)).collect(),
            Err(e) => {
                open_sinks().lock().expect("sink registry poisoned").remove(&canonical);
                return Err(e);
            }
        };
        Ok(Self {
            path: canonical,
            rules,
            state: Mutex::new(SinkState { file, keys, appended: 0 }),
            _record: PhantomData,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Validate and append one record as a single JSONL line.
    pub fn append(&self, record: &R) -> Result<(), CorpusError> {
        record.validate(&self.rules).map_err(CorpusError::Validation)?;
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        let mut state = self.state.lock().expect("sink poisoned");
        if let Some(key) = record.key() {
            if state.keys.contains(key) {
                return Err(CorpusError::Validation(format!("duplicate id {key}")));
            }
        }
        state.file.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        state.file.flush().map_err(io_err(&self.path))?;
        if let Some(key) = record.key() {
            state.keys.insert(key.to_string());
        }
        state.appended += 1;
        Ok(())
    }

    /// Records appended through this handle.
    pub fn appended(&self) -> usize {
        self.state.lock().expect("sink poisoned").appended
    }

    /// Flush file contents to stable storage.
    pub fn sync(&self) -> Result<(), CorpusError> {
        self.state.lock().expect("sink poisoned").file.sync_data().map_err(io_err(&self.path))
    }
}

impl<R> Drop for CorpusSink<R> {
    fn drop(&mut self) {
        if let Ok(mut open) = open_sinks().lock() {
            open.remove(&self.path);
        }
    }
}

/// Corpus-level metadata stored next to a corpus as `<corpus>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub domain: String,
    pub generator_config_hash: String,
    pub created_at: String,
}

impl CorpusMeta {
    pub fn new(domain: impl Into<String>, generator_config_hash: impl Into<String>) -> Self {
        Self {
            domain: domain.into(),
            generator_config_hash: generator_config_hash.into(),
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }
}

pub fn meta_path(corpus: &Path) -> PathBuf {
    let mut name = corpus.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    corpus.with_file_name(name)
}

pub fn write_meta(corpus: &Path, meta: &CorpusMeta) -> Result<(), CorpusError> {
    let path = meta_path(corpus);
    let body = serde_json::to_string_pretty(meta)?;
    std::fs::write(&path, body).map_err(io_err(&path))
}

/// Write `records` to a fresh file (truncating), one per line.
pub fn write_corpus<R: Serialize>(path: &Path, records: &[R]) -> Result<(), CorpusError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut out = String::new();
    for record in records {
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err(path))
}
