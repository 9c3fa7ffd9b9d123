use std::path::{Path, PathBuf};

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::contamination::MAX_N;
use crate::corpus::{LengthWindow, DEFAULT_DOCUMENT_WINDOW, TARGET_DOCUMENT_WORDS};
use crate::engine::EngineConfig;
use crate::gateway::ProviderConfig;
use crate::metrics::{DEFAULT_LEVEL, DEFAULT_RESAMPLES};
use crate::prompts::TaskPreset;

pub const DEFAULT_WORKERS: usize = 64;
pub const DEFAULT_DOCS_PER_SEED_SET: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    MetasynthDocs,
    TemplateDocs,
    Instructions,
    Responses,
    Measure,
    Contaminate,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::MetasynthDocs => "metasynth_docs",
            Self::TemplateDocs => "template_docs",
            Self::Instructions => "instructions",
            Self::Responses => "responses",
            Self::Measure => "measure",
            Self::Contaminate => "contaminate",
        }
    }

    /// Modes that fan out over workers and call a chat provider.
    pub fn uses_workers(self) -> bool {
        !matches!(self, Self::Measure | Self::Contaminate)
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeedSource {
    /// Fixed keywords, plus `generate` more drawn by each worker from the provider.
    Keywords {
        #[serde(default)]
        keywords: Vec<String>,
        #[serde(default)]
        generate: usize,
    },
    /// Seed documents drawn from a JSONL pool. With `refresh`, the pool must
    /// carry `topic` and `embedding` fields and each worker refreshes its
    /// seeds between seed sets.
    Documents {
        path: PathBuf,
        #[serde(default = "one")]
        per_worker: usize,
        #[serde(default)]
        refresh: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DocumentSettings {
    pub target_words: usize,
    pub window: LengthWindow,
    #[serde(default)]
    pub require_reviewer: bool,
}

impl Default for DocumentSettings {
    fn default() -> Self {
        Self { target_words: TARGET_DOCUMENT_WORDS, window: DEFAULT_DOCUMENT_WINDOW, require_reviewer: false }
    }
}

fn default_task() -> String {
    TaskPreset::ComplexQuestions.name().to_string()
}

fn default_per_doc() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionSettings {
    /// Preset name, or a full task description when `custom` is set.
    #[serde(default = "default_task")]
    pub task: String,
    #[serde(default)]
    pub custom: bool,
    #[serde(default = "default_per_doc")]
    pub max_instructions_per_doc: usize,
}

impl Default for InstructionSettings {
    fn default() -> Self {
        Self { task: default_task(), custom: false, max_instructions_per_doc: default_per_doc() }
    }
}

impl InstructionSettings {
    pub fn task_description(&self) -> Option<String> {
        if self.custom {
            return Some(self.task.clone());
        }
        TaskPreset::from_name(&self.task).map(|p| p.text().to_string())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub documents: Option<PathBuf>,
    pub instructions: Option<PathBuf>,
    /// One `{"embedding": [...]}` line per document, in corpus order.
    pub embeddings: Option<PathBuf>,
    /// One line per externally embedded batch, for Task2Vec.
    pub batch_embeddings: Option<PathBuf>,
    /// Token TSV of reference frequencies for MIF.
    pub reference_frequencies: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub targets: Option<PathBuf>,
}

fn default_n_values() -> Vec<usize> {
    vec![1, 2, 3, 5, 10]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    pub n_resamples: usize,
    pub level: f64,
    #[serde(default = "default_n_values")]
    pub n_values: Vec<usize>,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self { n_resamples: DEFAULT_RESAMPLES, level: DEFAULT_LEVEL, n_values: default_n_values() }
    }
}

fn default_workers() -> usize {
    DEFAULT_WORKERS
}

fn default_docs_per_seed_set() -> usize {
    DEFAULT_DOCS_PER_SEED_SET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub domain: String,
    pub mode: RunMode,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_docs_per_seed_set")]
    pub docs_per_seed_set: usize,
    /// Seed-set lifetimes per worker; above 1 requires refreshable document seeds.
    #[serde(default = "one")]
    pub seed_sets_per_worker: usize,
    #[serde(default)]
    pub provider: Option<ProviderConfig>,
    #[serde(default)]
    pub embedder: Option<ProviderConfig>,
    #[serde(default)]
    pub seed_source: Option<SeedSource>,
    /// Replaces the mode's default engine settings.
    #[serde(default)]
    pub engine: Option<EngineConfig>,
    #[serde(default)]
    pub documents: DocumentSettings,
    #[serde(default)]
    pub instructions: InstructionSettings,
    #[serde(default)]
    pub inputs: InputPaths,
    #[serde(default)]
    pub analysis: AnalysisSettings,
    #[serde(default)]
    pub rng_seed: u64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub run_id: Option<String>,
    /// Hard stop once providers have reported this many tokens in total.
    #[serde(default)]
    pub token_budget: Option<u64>,
}

/// A parsed config plus the TOML it was built from, before secrets were
/// substituted. The stored text is what goes into the run directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub stored: String,
}

impl LoadedConfig {
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.stored.as_bytes()))
    }

    /// `run_id` from the config, else the mode name plus a prefix of the hash.
    pub fn run_id(&self) -> String {
        self.config.run_id.clone().unwrap_or_else(|| format!("{}-{}", self.config.mode.name(), &self.hash()[..12]))
    }
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<LoadedConfig, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(vec![format!("reading {}: {e}", path.display())]))?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    parse_config(&text, overrides, base)
}

const PATH_KEYS: [&[&str]; 11] = [
    &["output_dir"],
    &["seed_source", "path"],
    &["provider", "script_path"],
    &["embedder", "script_path"],
    &["inputs", "documents"],
    &["inputs", "instructions"],
    &["inputs", "embeddings"],
    &["inputs", "batch_embeddings"],
    &["inputs", "reference_frequencies"],
    &["inputs", "references"],
    &["inputs", "targets"],
];

/// Make relative path settings absolute against `base`, so a stored config
/// means the same thing from any working directory.
fn absolutize(table: &mut toml::Table, base: &Path) {
    let base = std::path::absolute(base).unwrap_or_else(|_| base.to_path_buf());
    for key in PATH_KEYS {
        let mut cursor = Some(&mut *table);
        for seg in &key[..key.len() - 1] {
            cursor = cursor.and_then(|t| t.get_mut(*seg)).and_then(toml::Value::as_table_mut);
        }
        if let Some(toml::Value::String(s)) = cursor.and_then(|t| t.get_mut(key[key.len() - 1])) {
            if !s.starts_with("${") && Path::new(s.as_str()).is_relative() {
                *s = base.join(&*s).to_string_lossy().into_owned();
            }
        }
    }
}

/// Parse TOML, apply `dotted.key=value` overrides, resolve relative paths
/// against `base`, substitute `${VAR}` from the environment, and validate.
/// Every problem found is reported together.
pub fn parse_config(text: &str, overrides: &[String], base: &Path) -> Result<LoadedConfig, PipelineError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| PipelineError::Config(vec![e.to_string()]))?;
    let mut problems = Vec::new();
    for o in overrides {
        if let Err(p) = apply_override(&mut table, o) {
            problems.push(p);
        }
    }
    absolutize(&mut table, base);
    let stored = toml::to_string(&table).map_err(|e| PipelineError::Config(vec![e.to_string()]))?;
    let mut value = toml::Value::Table(table);
    interpolate(&mut value, &mut problems);
    if !problems.is_empty() {
        return Err(PipelineError::Config(problems));
    }
    let config: RunConfig = value.try_into().map_err(|e: toml::de::Error| PipelineError::Config(vec![e.to_string()]))?;
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(PipelineError::Config(problems));
    }
    Ok(LoadedConfig { config, stored })
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), String> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| format!("override {assignment:?} is not key=value"))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(format!("override {assignment:?} has an empty key segment"));
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut cursor = table;
    for segment in &path[..path.len() - 1] {
        let entry = cursor.entry(segment.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry.as_table_mut().ok_or_else(|| format!("override {key}: {segment} is not a table"))?;
    }
    cursor.insert(path[path.len() - 1].to_string(), value);
    Ok(())
}

fn interpolate(value: &mut toml::Value, problems: &mut Vec<String>) {
    static VAR: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    let re = VAR.get_or_init(|| Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").expect("valid regex"));
    match value {
        toml::Value::String(s) if s.contains("${") => {
            let mut out = String::new();
            let mut last = 0;
            for cap in re.captures_iter(s) {
                let whole = cap.get(0).expect("match");
                out.push_str(&s[last..whole.start()]);
                match std::env::var(&cap[1]) {
                    Ok(v) => out.push_str(&v),
                    Err(_) => problems.push(format!("environment variable {} is not set", &cap[1])),
                }
                last = whole.end();
            }
            out.push_str(&s[last..]);
            *s = out;
        }
        toml::Value::Array(items) => items.iter_mut().for_each(|v| interpolate(v, problems)),
        toml::Value::Table(t) => t.iter_mut().for_each(|(_, v)| interpolate(v, problems)),
        _ => {}
    }
}

impl RunConfig {
    pub fn engine_for_mode(&self) -> EngineConfig {
        self.engine.clone().unwrap_or_else(|| match self.mode {
            RunMode::Instructions => EngineConfig::instructions(),
            _ => EngineConfig::documents(),
        })
    }

    /// Every validation problem, in a stable order.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.workers == 0 {
            out.push("workers must be at least 1".to_string());
        }
        if self.docs_per_seed_set == 0 {
            out.push("docs_per_seed_set must be at least 1".to_string());
        }
        if self.seed_sets_per_worker == 0 {
            out.push("seed_sets_per_worker must be at least 1".to_string());
        }
        if self.output_dir.as_os_str().is_empty() {
            out.push("output_dir must be set".to_string());
        }
        if let Some(id) = &self.run_id {
            if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') {
                out.push(format!("run_id {id:?} is not a plain directory name"));
            }
        }
        if self.token_budget == Some(0) {
            out.push("token_budget must be positive".to_string());
        }
        if self.mode.uses_workers() {
            match &self.provider {
                None => out.push(format!("mode {} needs a [provider]", self.mode.name())),
                Some(p) => out.extend(p.problems(false).into_iter().map(|m| format!("provider: {m}"))),
            }
            if let Some(e) = &self.engine {
                out.extend(e.problems());
            }
        }
        if let Some(e) = &self.embedder {
            out.extend(e.problems(true).into_iter().map(|m| format!("embedder: {m}")));
        }
        let docs = &self.documents;
        if matches!(self.mode, RunMode::MetasynthDocs | RunMode::TemplateDocs) {
            if self.domain.trim().is_empty() {
                out.push("domain must not be empty".to_string());
            }
            if !docs.window.contains(docs.target_words) {
                out.push(format!("documents.target_words {} lies outside the window {:?}", docs.target_words, docs.window));
            }
        }
        let refresh = matches!(self.seed_source, Some(SeedSource::Documents { refresh: true, .. }));
        match (self.mode, &self.seed_source) {
            (RunMode::MetasynthDocs, None) => out.push("metasynth_docs needs a [seed_source]".to_string()),
            (RunMode::MetasynthDocs, Some(SeedSource::Keywords { keywords, generate })) => {
                if keywords.iter().all(|k| k.trim().is_empty()) && *generate == 0 {
                    out.push("seed_source keywords needs `keywords` or `generate`".to_string());
                }
            }
            (RunMode::TemplateDocs, Some(SeedSource::Documents { per_worker, .. })) => {
                if *per_worker != 5 {
                    out.push(format!("template_docs uses 5 seed documents per worker, got per_worker = {per_worker}"));
                }
            }
            (RunMode::TemplateDocs, _) => out.push("template_docs needs a documents seed_source".to_string()),
            _ => {}
        }
        if let Some(SeedSource::Documents { per_worker: 0, .. }) = &self.seed_source {
            out.push("seed_source.per_worker must be at least 1".to_string());
        }
        if refresh && self.mode != RunMode::MetasynthDocs {
            out.push("seed refresh only applies to metasynth_docs".to_string());
        }
        if refresh && self.embedder.is_none() {
            out.push("seed refresh needs an [embedder]".to_string());
        }
        if self.seed_sets_per_worker > 1 && !refresh {
            out.push("seed_sets_per_worker above 1 needs a documents seed_source with refresh = true".to_string());
        }
        let inputs = &self.inputs;
        let need = |out: &mut Vec<String>, p: &Option<PathBuf>, name: &str| {
            if p.is_none() {
                out.push(format!("mode {} needs inputs.{name}", self.mode.name()));
            }
        };
        match self.mode {
            RunMode::Instructions => {
                need(&mut out, &inputs.documents, "documents");
                if self.instructions.task_description().is_none() {
                    out.push(format!("instructions.task {:?} is not a known preset", self.instructions.task));
                }
                if self.instructions.max_instructions_per_doc == 0 {
                    out.push("instructions.max_instructions_per_doc must be at least 1".to_string());
                }
            }
            RunMode::Responses => {
                need(&mut out, &inputs.documents, "documents");
                need(&mut out, &inputs.instructions, "instructions");
            }
            RunMode::Measure => {
                need(&mut out, &inputs.documents, "documents");
                if self.analysis.n_resamples < 100 {
                    out.push("analysis.n_resamples must be at least 100".to_string());
                }
                if !(self.analysis.level > 0.0 && self.analysis.level < 1.0) {
                    out.push("analysis.level must lie in (0, 1)".to_string());
                }
            }
            RunMode::Contaminate => {
                need(&mut out, &inputs.references, "references");
                need(&mut out, &inputs.targets, "targets");
                if self.analysis.n_values.is_empty() || self.analysis.n_values.iter().any(|&n| n == 0 || n > MAX_N) {
                    out.push(format!("analysis.n_values must be nonempty and within 1..={MAX_N}"));
                }
            }
            _ => {}
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
domain = "finance"
mode = "metasynth_docs"
output_dir = "out"
[provider]
kind = "scripted"
script = ["x"]
[seed_source]
kind = "keywords"
keywords = ["bonds"]
"#;

    #[test]
    fn defaults_and_overrides() {
        let c = parse_config(BASE, &["workers=4".into(), "documents.target_words=300".into(), "run_id=abc".into()], Path::new("/base")).unwrap();
        assert_eq!(c.config.workers, 4);
        assert_eq!(c.config.docs_per_seed_set, 50);
        assert_eq!(c.config.documents.target_words, 300);
        assert_eq!(c.run_id(), "abc");
        assert!(c.stored.contains("workers = 4"));
        assert_eq!(c.config.output_dir, Path::new("/base/out"));
    }

    #[test]
    fn env_interpolation_keeps_placeholder_in_stored_text() {
        std::env::set_var("METASYNTH_TEST_DOMAIN", "insurance");
        let text = BASE.replace("\"finance\"", "\"${METASYNTH_TEST_DOMAIN}\"");
        let c = parse_config(&text, &[], Path::new(".")).unwrap();
        assert_eq!(c.config.domain, "insurance");
        assert!(c.stored.contains("${METASYNTH_TEST_DOMAIN}"));
        let missing = BASE.replace("\"finance\"", "\"${METASYNTH_TEST_UNSET_VAR}\"");
        assert!(matches!(parse_config(&missing, &[], Path::new(".")), Err(PipelineError::Config(p)) if p[0].contains("METASYNTH_TEST_UNSET_VAR")));
    }

    #[test]
    fn all_problems_reported_together() {
        let Err(PipelineError::Config(problems)) = parse_config(BASE, &["workers=0".into(), "docs_per_seed_set=0".into(), "domain=''".into()], Path::new("."))
        else {
            panic!("expected config error");
        };
        assert_eq!(problems.len(), 3, "{problems:?}");
    }
}
