use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{RunConfig, RunMode, SeedSource};
use super::manifest::WorkerStatus;
use super::PipelineError;
use crate::corpus::{CorpusError, CorpusSink, Document, DocumentSource, Instruction, Record, ResponseRecord, ValidationRules};
use crate::docsynth::{synthesize_documents, template_generate, DocRunConfig, DocRunObserver, DocSynthError, SeedState, TemplateConfig};
use crate::engine::{HistoryEntry, RunStatus};
use crate::gateway::{ChatProvider, Embedder, GatewayError};
use crate::instruct::{build_response_prompts, synthesize_instructions, synthesize_responses, InstructRunConfig};
use crate::seeds::{label_topic, random_keyword_seeds, refresh_seeds, EmbeddedPool, SeedPoolState};

pub const ACCEPTED_FILE: &str = "accepted.jsonl";
pub const REJECTED_FILE: &str = "rejected.jsonl";
pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";

pub fn worker_dir(run_dir: &Path, index: usize) -> PathBuf {
    run_dir.join(format!("worker_{index}"))
}

/// Seed documents available to document-synthesis workers.
pub(crate) struct SeedPool {
    documents: Vec<Document>,
    embedded: Option<Arc<EmbeddedPool>>,
}

impl SeedPool {
    pub(crate) fn load(path: &Path, domain: &str, embedded: bool) -> Result<Self, PipelineError> {
        if embedded {
            let pool = EmbeddedPool::load(path).map_err(|e| PipelineError::Config(vec![format!("seed pool {}: {e}", path.display())]))?;
            let documents = pool.entries().iter().map(|e| Document::new(&e.id, &e.text, DocumentSource::Real, domain)).collect();
            return Ok(Self { documents, embedded: Some(Arc::new(pool)) });
        }
        let loaded = crate::corpus::load_corpus::<crate::corpus::TextRecord>(path, true)
            .map_err(|e| PipelineError::Config(vec![format!("seed pool {}: {e}", path.display())]))?;
        let documents = loaded
            .corpus
            .records
            .into_iter()
            .enumerate()
            .map(|(i, r)| Document::new(r.id.unwrap_or_else(|| format!("seed-{}", i + 1)), r.text, DocumentSource::Real, domain))
            .collect();
        Ok(Self { documents, embedded: None })
    }

    pub(crate) fn len(&self) -> usize {
        self.documents.len()
    }

    /// `count` distinct documents for `worker`, from its own stream of `rng_seed`.
    fn draw(&self, worker: usize, count: usize, rng_seed: u64) -> Vec<Document> {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(worker as u64);
        rand::seq::index::sample(&mut rng, self.documents.len(), count.min(self.documents.len()))
            .into_iter()
            .map(|i| self.documents[i].clone())
            .collect()
    }
}

/// Read-only inputs shared by every worker of a run.
pub(crate) struct RunInputs {
    pub(crate) seed_pool: Option<SeedPool>,
    pub(crate) documents: Vec<Document>,
    pub(crate) instructions: HashMap<String, Vec<Instruction>>,
    pub(crate) embedder: Option<Arc<dyn Embedder>>,
}

#[derive(Debug)]
pub(crate) struct WorkerOutcome {
    pub(crate) status: WorkerStatus,
    pub(crate) accepted: usize,
    pub(crate) rejected: usize,
    pub(crate) error: Option<String>,
    pub(crate) auth_failure: bool,
}

struct JsonlWriter {
    file: File,
    path: PathBuf,
}

impl JsonlWriter {
    fn create(path: PathBuf) -> Result<Self, PipelineError> {
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| PipelineError::io(&path, e))?;
        Ok(Self { file, path })
    }

    fn write<T: Serialize>(&mut self, value: &T) -> Result<(), PipelineError> {
        let mut line = serde_json::to_string(value).expect("record serializes");
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(|e| PipelineError::io(&self.path, e))
    }
}

/// The three output files of one worker.
struct Outputs<A> {
    accepted: CorpusSink<A>,
    rejected: JsonlWriter,
    transcript: JsonlWriter,
    failure: Option<String>,
    n_accepted: usize,
    n_rejected: usize,
}

impl<A: Record> Outputs<A> {
    fn open(dir: &Path, rules: ValidationRules) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        let accepted = CorpusSink::open(&dir.join(ACCEPTED_FILE), rules).map_err(|e| PipelineError::Corpus(e.to_string()))?;
        Ok(Self {
            accepted,
            rejected: JsonlWriter::create(dir.join(REJECTED_FILE))?,
            transcript: JsonlWriter::create(dir.join(TRANSCRIPT_FILE))?,
            failure: None,
            n_accepted: 0,
            n_rejected: 0,
        })
    }

    fn note(&mut self, r: Result<(), String>) {
        if let (Err(e), None) = (r, &self.failure) {
            self.failure = Some(e);
        }
    }

    fn accept(&mut self, record: &A) {
        let r = self.accepted.append(record).map_err(|e: CorpusError| e.to_string());
        if r.is_ok() {
            self.n_accepted += 1;
        }
        self.note(r);
    }

    fn reject<T: Serialize>(&mut self, record: &T) {
        let r = self.rejected.write(record).map_err(|e| e.to_string());
        if r.is_ok() {
            self.n_rejected += 1;
        }
        self.note(r);
    }

    fn log<T: Serialize>(&mut self, entry: &T) {
        let r = self.transcript.write(entry).map_err(|e| e.to_string());
        self.note(r);
    }

    fn finish(self, status: WorkerStatus, error: Option<String>, auth_failure: bool) -> WorkerOutcome {
        let (status, error) = match self.failure {
            Some(f) => (WorkerStatus::Incomplete, Some(f)),
            None => (status, error),
        };
        WorkerOutcome { status, accepted: self.n_accepted, rejected: self.n_rejected, error, auth_failure }
    }
}

impl DocRunObserver for Outputs<Document> {
    fn accepted(&mut self, doc: &Document) {
        self.accept(doc);
    }

    fn rejected(&mut self, doc: &Document) {
        self.reject(doc);
    }

    fn entry(&mut self, entry: &HistoryEntry) {
        self.log(entry);
    }
}

fn status_of(run: RunStatus) -> WorkerStatus {
    match run {
        RunStatus::Completed => WorkerStatus::Completed,
        RunStatus::Discarded => WorkerStatus::Discarded,
        _ => WorkerStatus::Incomplete,
    }
}

/// Combine per-item statuses: any incomplete item makes the worker
/// incomplete, otherwise any discarded item makes it discarded.
fn worst(a: WorkerStatus, b: WorkerStatus) -> WorkerStatus {
    use WorkerStatus::*;
    match (a, b) {
        (Incomplete, _) | (_, Incomplete) => Incomplete,
        (Discarded, _) | (_, Discarded) => Discarded,
        _ => Completed,
    }
}

fn failed(status: WorkerStatus, e: &GatewayError) -> (WorkerStatus, Option<String>, bool) {
    (worst(status, WorkerStatus::Incomplete), Some(e.to_string()), e.is_auth())
}

pub(crate) fn run_worker(
    config: &RunConfig,
    inputs: &RunInputs,
    index: usize,
    dir: &Path,
    provider: Arc<dyn ChatProvider>,
) -> Result<WorkerOutcome, PipelineError> {
    let doc_rules = ValidationRules { document_window: config.documents.window, ..ValidationRules::default() };
    match config.mode {
        RunMode::MetasynthDocs => Ok(metasynth_worker(config, inputs, index, Outputs::open(dir, doc_rules)?, provider)),
        RunMode::TemplateDocs => Ok(template_worker(config, inputs, index, Outputs::open(dir, doc_rules)?, provider)),
        RunMode::Instructions => Ok(instruction_worker(config, inputs, index, Outputs::open(dir, ValidationRules::default())?, provider)),
        RunMode::Responses => Ok(response_worker(config, inputs, index, Outputs::open(dir, ValidationRules::default())?, provider)),
        RunMode::Measure | RunMode::Contaminate => unreachable!("analysis modes have no workers"),
    }
}

fn initial_seeds(config: &RunConfig, inputs: &RunInputs, index: usize, provider: &dyn ChatProvider) -> Result<SeedState, String> {
    match config.seed_source.as_ref().expect("validated") {
        SeedSource::Keywords { keywords, generate } => {
            let mut all: Vec<String> = keywords.iter().filter(|k| !k.trim().is_empty()).cloned().collect();
            if *generate > 0 {
                all.extend(random_keyword_seeds(&config.domain, *generate, provider).map_err(|e| e.to_string())?);
            }
            Ok(SeedState::from_keywords(all))
        }
        SeedSource::Documents { per_worker, .. } => {
            let pool = inputs.seed_pool.as_ref().expect("pool loaded for document seeds");
            Ok(SeedState::from_documents(pool.draw(index, *per_worker, config.rng_seed)))
        }
    }
}

fn metasynth_worker(
    config: &RunConfig,
    inputs: &RunInputs,
    index: usize,
    mut out: Outputs<Document>,
    provider: Arc<dyn ChatProvider>,
) -> WorkerOutcome {
    let mut seeds = match initial_seeds(config, inputs, index, provider.as_ref()) {
        Ok(s) => s,
        Err(e) => return out.finish(WorkerStatus::Incomplete, Some(e), false),
    };
    let mut pool_state = inputs.seed_pool.as_ref().and_then(|p| p.embedded.clone()).map(|pool| {
        let ids = seeds.seed_documents.iter().map(|d| d.id.clone()).collect();
        let mut s = SeedPoolState::new(pool, ids);
        s.refresh_period = config.docs_per_seed_set;
        s
    });
    let sets = config.seed_sets_per_worker;
    for set in 0..sets {
        let prefix = if sets == 1 { format!("w{index}") } else { format!("w{index}s{}", set + 1) };
        let doc_cfg = DocRunConfig {
            n_documents: config.docs_per_seed_set,
            domain: config.domain.clone(),
            target_words: config.documents.target_words,
            window: config.documents.window,
            max_expansions_per_draft: 3,
            require_reviewer: config.documents.require_reviewer,
            id_prefix: prefix,
            engine: config.engine_for_mode(),
        };
        let run = match synthesize_documents(seeds, &doc_cfg, provider.clone(), provider.clone(), &mut out) {
            Ok(run) => run,
            Err(DocSynthError::Gateway(e)) => {
                let (s, err, auth) = failed(WorkerStatus::Completed, &e);
                return out.finish(s, err, auth);
            }
            Err(e) => return out.finish(WorkerStatus::Incomplete, Some(e.to_string()), false),
        };
        if run.status != RunStatus::Completed {
            let auth = run.error.as_ref().is_some_and(GatewayError::is_auth);
            return out.finish(status_of(run.status), run.error.map(|e| e.to_string()), auth);
        }
        if set + 1 == sets {
            break;
        }
        let state = pool_state.as_mut().expect("validated: refresh needs an embedded pool");
        let embedder = inputs.embedder.as_ref().expect("validated: refresh needs an embedder");
        match refresh_for_next_set(state, &run.accepted, &config.domain, provider.as_ref(), embedder.as_ref()) {
            Ok(next) => seeds = SeedState::from_documents(next),
            Err(e) => return out.finish(WorkerStatus::Incomplete, Some(e), false),
        }
    }
    out.finish(WorkerStatus::Completed, None, false)
}

fn refresh_for_next_set(
    state: &mut SeedPoolState,
    accepted: &[Document],
    domain: &str,
    labeler: &dyn ChatProvider,
    embedder: &dyn Embedder,
) -> Result<Vec<Document>, String> {
    for doc in accepted {
        let topic = label_topic(doc, labeler).map_err(|e| e.to_string())?;
        state.record_topic(&topic);
    }
    let outcome = refresh_seeds(state, accepted, embedder).map_err(|e| e.to_string())?;
    log::info!("seed refresh tried k = {:?}", outcome.attempted_k);
    Ok(state.seed_documents().into_iter().map(|e| Document::new(&e.id, &e.text, DocumentSource::Real, domain)).collect())
}

fn template_worker(
    config: &RunConfig,
    inputs: &RunInputs,
    index: usize,
    mut out: Outputs<Document>,
    provider: Arc<dyn ChatProvider>,
) -> WorkerOutcome {
    let seeds = match initial_seeds(config, inputs, index, provider.as_ref()) {
        Ok(s) => s.seed_documents,
        Err(e) => return out.finish(WorkerStatus::Incomplete, Some(e), false),
    };
    let mut tpl = TemplateConfig::new(config.domain.clone());
    tpl.target_words = config.documents.target_words;
    tpl.window = config.documents.window;
    tpl.id_prefix = format!("w{index}");
    match template_generate(&seeds, config.docs_per_seed_set, &tpl, provider.as_ref(), &mut out) {
        Ok(_) => out.finish(WorkerStatus::Completed, None, false),
        Err(crate::docsynth::TemplateError::Gateway(e)) => {
            let (s, err, auth) = failed(WorkerStatus::Completed, &e);
            out.finish(s, err, auth)
        }
        Err(e) => out.finish(WorkerStatus::Incomplete, Some(e.to_string()), false),
    }
}

#[derive(Serialize)]
struct FilteredRecord<'a> {
    document_id: &'a str,
    text: &'a str,
    reason: &'a str,
}

/// Items of a shared input list assigned to `index`: every `workers`-th one.
fn assigned<T>(items: &[T], index: usize, workers: usize) -> impl Iterator<Item = (usize, &T)> {
    items.iter().enumerate().skip(index).step_by(workers)
}

fn instruction_worker(
    config: &RunConfig,
    inputs: &RunInputs,
    index: usize,
    mut out: Outputs<Instruction>,
    provider: Arc<dyn ChatProvider>,
) -> WorkerOutcome {
    let mut cfg = InstructRunConfig::new(config.instructions.task_description().expect("validated task"));
    cfg.max_instructions_per_doc = config.instructions.max_instructions_per_doc;
    cfg.engine = config.engine_for_mode();
    let mut status = WorkerStatus::Completed;
    for (_, doc) in assigned(&inputs.documents, index, config.workers) {
        let mut entries = Vec::new();
        let result = synthesize_instructions(doc, &cfg, provider.clone(), provider.clone(), &mut |e| entries.push(e.clone()));
        for e in &entries {
            out.log(e);
        }
        let run = match result {
            Ok(run) => run,
            Err(e) => return out.finish(WorkerStatus::Incomplete, Some(format!("{}: {e}", doc.id)), false),
        };
        for ins in &run.instructions {
            out.accept(ins);
        }
        for f in &run.filtered {
            out.reject(&FilteredRecord { document_id: &doc.id, text: &f.text, reason: &f.reason });
        }
        if let Some(e) = &run.error {
            let (s, err, auth) = failed(status, e);
            return out.finish(s, err.map(|m| format!("{}: {m}", doc.id)), auth);
        }
        status = worst(status, status_of(run.status));
    }
    out.finish(status, None, false)
}

#[derive(Serialize)]
struct PromptLog<'a> {
    document_id: &'a str,
    prompt: &'a str,
}

#[derive(Serialize)]
struct SkippedPrompt<'a> {
    document_id: &'a str,
    prompt: &'a str,
}

fn response_worker(
    config: &RunConfig,
    inputs: &RunInputs,
    index: usize,
    mut out: Outputs<ResponseRecord>,
    provider: Arc<dyn ChatProvider>,
) -> WorkerOutcome {
    for (i, doc) in assigned(&inputs.documents, index, config.workers) {
        let Some(instructions) = inputs.instructions.get(&doc.id) else {
            continue;
        };
        let seed = config.rng_seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let prompts = build_response_prompts(doc, instructions, seed);
        for p in &prompts {
            out.log(&PromptLog { document_id: &doc.id, prompt: &p.prompt });
        }
        match synthesize_responses(&prompts, provider.as_ref()) {
            Ok(done) => {
                for r in &done.records {
                    out.accept(r);
                }
                for s in &done.skipped {
                    out.reject(&SkippedPrompt { document_id: &doc.id, prompt: s });
                }
            }
            Err(e) => {
                let (s, err, auth) = failed(WorkerStatus::Completed, &e);
                return out.finish(s, err, auth);
            }
        }
    }
    out.finish(WorkerStatus::Completed, None, false)
}
