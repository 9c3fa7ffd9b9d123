//! Run orchestration: configuration, run directories, parallel workers,
//! manifests and resume.
//!
//! A run lives in `output_dir/run_id/`:
//!
//! ```text
//! manifest.json
//! config.toml
//! worker_0/{accepted.jsonl, rejected.jsonl, transcript.jsonl}
//! worker_1/...
//! ```
//!
//! Analysis modes (`measure`, `contaminate`) write `report.json` instead of
//! worker directories.

mod analysis;
mod config;
mod manifest;
mod worker;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

pub use analysis::{load_embeddings, read_texts, EmbeddingRecord, REPORT_CSV, REPORT_FILE};
pub use config::{
    load_config, parse_config, AnalysisSettings, DocumentSettings, InputPaths, InstructionSettings, LoadedConfig, RunConfig,
    RunMode, SeedSource, DEFAULT_DOCS_PER_SEED_SET, DEFAULT_WORKERS,
};
pub use manifest::{write_atomic, RunManifest, WorkerRecord, WorkerStatus, CONFIG_FILE, MANIFEST_FILE};
pub use worker::{worker_dir, ACCEPTED_FILE, REJECTED_FILE, TRANSCRIPT_FILE};

use crate::corpus::{load_corpus, Document, Instruction, Record};
use crate::gateway::{ChatProvider, MeteredProvider, TokenBudget};
use worker::{RunInputs, SeedPool};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("corpus error: {0}")]
    Corpus(String),
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("run directory {0} already exists; use resume")]
    RunExists(PathBuf),
    #[error("{0}")]
    Analysis(String),
}

impl PipelineError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Io { path: path.to_path_buf(), message: e.to_string() }
    }

    /// Process exit code: 2 for configuration problems, 3 for provider
    /// failures, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::RunExists(_) => 2,
            Self::Provider(_) => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Run at most this many pending workers, leaving the rest for resume.
    pub worker_limit: Option<usize>,
}

pub fn run_dir(loaded: &LoadedConfig) -> PathBuf {
    loaded.config.output_dir.join(loaded.run_id())
}

/// Start a new run. Fails if the run directory already holds a manifest.
pub fn run(loaded: &LoadedConfig, options: RunOptions) -> Result<RunManifest, PipelineError> {
    let dir = run_dir(loaded);
    if dir.join(MANIFEST_FILE).exists() {
        return Err(PipelineError::RunExists(dir));
    }
    let config = &loaded.config;
    let inputs = prepare(config)?;
    std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
    write_atomic(&dir.join(CONFIG_FILE), loaded.stored.as_bytes())?;
    let workers = if config.mode.uses_workers() { config.workers } else { 0 };
    let mut manifest = RunManifest::new(loaded.run_id(), loaded.hash(), config.mode, workers);
    if !config.mode.uses_workers() {
        let start = Instant::now();
        analysis::run_analysis(config, inputs.embedder.as_deref(), &dir)?;
        manifest.wall_time_secs = start.elapsed().as_secs_f64();
        manifest.refresh_totals();
        manifest.store(&dir)?;
        return Ok(manifest);
    }
    manifest.store(&dir)?;
    execute(config, &inputs, &dir, manifest, options, false)
}

/// Restart every worker that did not complete. Completed workers and their
/// files are left untouched; a fully completed run is returned unchanged.
pub fn resume(run_dir: &Path, options: RunOptions) -> Result<RunManifest, PipelineError> {
    let manifest = RunManifest::load(run_dir)?;
    if manifest.all_completed() && manifest.finished {
        return Ok(manifest);
    }
    let stored = run_dir.join(CONFIG_FILE);
    let loaded = load_config(&stored, &[])?;
    if loaded.hash() != manifest.config_hash {
        return Err(PipelineError::CorruptManifest(format!("{} does not match the manifest's config hash", stored.display())));
    }
    if !loaded.config.mode.uses_workers() {
        return Err(PipelineError::CorruptManifest("analysis runs are never left unfinished".into()));
    }
    if loaded.config.workers != manifest.workers.len() {
        return Err(PipelineError::CorruptManifest(format!(
            "config has {} workers, manifest has {}",
            loaded.config.workers,
            manifest.workers.len()
        )));
    }
    let inputs = prepare(&loaded.config)?;
    execute(&loaded.config, &inputs, run_dir, manifest, options, true)
}

fn prepare(config: &RunConfig) -> Result<RunInputs, PipelineError> {
    let provider_problem = config.provider.as_ref().filter(|_| config.mode.uses_workers()).and_then(|p| p.credentials().err());
    if let Some(e) = provider_problem {
        return Err(PipelineError::Provider(e.to_string()));
    }
    let mut inputs = RunInputs { seed_pool: None, documents: Vec::new(), instructions: HashMap::new(), embedder: None };
    if let Some(e) = &config.embedder {
        inputs.embedder = Some(e.build_embedder().map_err(|e| PipelineError::Provider(e.to_string()))?);
    }
    if let Some(SeedSource::Documents { path, per_worker, refresh }) = &config.seed_source {
        let pool = SeedPool::load(path, &config.domain, *refresh)?;
        if pool.len() < *per_worker {
            return Err(PipelineError::Config(vec![format!("seed pool has {} documents, per_worker is {per_worker}", pool.len())]));
        }
        inputs.seed_pool = Some(pool);
    }
    if matches!(config.mode, RunMode::Instructions | RunMode::Responses) {
        inputs.documents = load_records::<Document>(config.inputs.documents.as_deref().expect("validated"))?;
    }
    if config.mode == RunMode::Responses {
        for ins in load_records::<Instruction>(config.inputs.instructions.as_deref().expect("validated"))? {
            inputs.instructions.entry(ins.parent_document_id.clone()).or_default().push(ins);
        }
    }
    Ok(inputs)
}

fn load_records<R: Record>(path: &Path) -> Result<Vec<R>, PipelineError> {
    Ok(load_corpus::<R>(path, true).map_err(|e| PipelineError::Corpus(format!("{}: {e}", path.display())))?.corpus.records)
}

fn execute(
    config: &RunConfig,
    inputs: &RunInputs,
    dir: &Path,
    mut manifest: RunManifest,
    options: RunOptions,
    resuming: bool,
) -> Result<RunManifest, PipelineError> {
    let start = Instant::now();
    let provider_cfg = config.provider.as_ref().expect("validated");
    // HTTP providers are shared so their rate limiter is shared; scripted
    // ones get a fresh cursor per worker.
    let shared: Option<Arc<dyn ChatProvider>> = if provider_cfg.is_scripted() {
        None
    } else {
        Some(provider_cfg.build_chat(0).map_err(|e| PipelineError::Provider(e.to_string()))?)
    };
    let budget = config.token_budget.map(TokenBudget::new);
    let mut todo: Vec<usize> = manifest.workers.iter().filter(|w| w.status != WorkerStatus::Completed).map(|w| w.index).collect();
    if let Some(limit) = options.worker_limit {
        todo.truncate(limit);
    }
    let abort = AtomicBool::new(false);
    let shared_manifest = Mutex::new(&mut manifest);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers.min(todo.len()).max(1))
        .build()
        .map_err(|e| PipelineError::Provider(format!("starting worker pool: {e}")))?;
    let results: Vec<Result<(), PipelineError>> = pool.install(|| {
        todo.par_iter()
            .map(|&index| {
                if abort.load(Ordering::SeqCst) {
                    return Ok(());
                }
                let wdir = worker_dir(dir, index);
                if wdir.exists() {
                    std::fs::remove_dir_all(&wdir).map_err(|e| PipelineError::io(&wdir, e))?;
                }
                let inner = match &shared {
                    Some(p) => p.clone(),
                    None => provider_cfg.build_chat(index).map_err(|e| PipelineError::Provider(e.to_string()))?,
                };
                let metered = Arc::new(MeteredProvider::new(inner, budget.clone()));
                let outcome = worker::run_worker(config, inputs, index, &wdir, metered.clone())?;
                if outcome.auth_failure {
                    abort.store(true, Ordering::SeqCst);
                }
                let usage = metered.totals();
                let mut m = shared_manifest.lock().expect("manifest lock poisoned");
                m.workers[index] = WorkerRecord {
                    index,
                    status: outcome.status,
                    accepted: outcome.accepted,
                    rejected: outcome.rejected,
                    input_tokens: usage.input_tokens,
                    output_tokens: usage.output_tokens,
                    resumed: resuming || m.workers[index].resumed,
                    error: outcome.error,
                };
                m.refresh_totals();
                m.store(dir)
            })
            .collect()
    });
    results.into_iter().collect::<Result<Vec<()>, _>>()?;
    manifest.refresh_totals();
    manifest.wall_time_secs += start.elapsed().as_secs_f64();
    manifest.store(dir)?;
    if abort.load(Ordering::SeqCst) {
        let msg = manifest.workers.iter().find_map(|w| w.error.clone()).unwrap_or_else(|| "authentication failed".into());
        return Err(PipelineError::Provider(msg));
    }
    Ok(manifest)
}

/// Accepted records of every worker, in worker order.
pub fn collect_accepted<R: Record>(run_dir: &Path) -> Result<Vec<R>, PipelineError> {
    let manifest = RunManifest::load(run_dir)?;
    let mut out = Vec::new();
    for w in &manifest.workers {
        let path = worker_dir(run_dir, w.index).join(ACCEPTED_FILE);
        if path.exists() {
            out.extend(load_records::<R>(&path)?);
        }
    }
    Ok(out)
}
