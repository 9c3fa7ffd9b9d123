use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, RunMode};
use super::manifest::write_atomic;
use super::PipelineError;
use crate::contamination::{em_overlap, ContaminationReport};
use crate::corpus::{load_corpus, Record, TextRecord, ValidationRules};
use crate::gateway::Embedder;
use crate::metrics::{measure_corpus, DiversityReport, MeasureInputs, MeasureOptions, ReferenceFrequencies};

pub const REPORT_FILE: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";

/// One line of an embedding file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub embedding: Vec<f64>,
}

impl Record for EmbeddingRecord {
    fn key(&self) -> Option<&str> {
        self.id.as_deref()
    }

    fn validate(&self, _rules: &ValidationRules) -> Result<(), String> {
        Ok(())
    }
}

/// The `text` field of every line of a JSONL file.
pub fn read_texts(path: &Path) -> Result<Vec<String>, PipelineError> {
    let loaded = load_corpus::<TextRecord>(path, true).map_err(|e| PipelineError::Corpus(format!("{}: {e}", path.display())))?;
    Ok(loaded.corpus.records.into_iter().map(|r| r.text).collect())
}

pub fn load_embeddings(path: &Path) -> Result<Vec<Vec<f64>>, PipelineError> {
    let loaded = load_corpus::<EmbeddingRecord>(path, true).map_err(|e| PipelineError::Corpus(format!("{}: {e}", path.display())))?;
    Ok(loaded.corpus.records.into_iter().map(|r| r.embedding).collect())
}

fn analysis_err(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Analysis(e.to_string())
}

pub(crate) fn measure(config: &RunConfig, embedder: Option<&dyn Embedder>) -> Result<DiversityReport, PipelineError> {
    let inputs = &config.inputs;
    let doc_path = inputs.documents.as_deref().expect("validated");
    let texts = read_texts(doc_path)?;
    let embeddings = match (&inputs.embeddings, embedder) {
        (Some(p), _) => Some(load_embeddings(p)?),
        (None, Some(e)) => Some(e.embed(&texts).map_err(|e| PipelineError::Provider(e.to_string()))?),
        (None, None) => None,
    };
    let batches = inputs.batch_embeddings.as_deref().map(load_embeddings).transpose()?;
    let reference = inputs.reference_frequencies.as_deref().map(ReferenceFrequencies::load_tsv).transpose().map_err(analysis_err)?;
    let corpus_id = doc_path.file_stem().map_or_else(|| "corpus".to_string(), |s| s.to_string_lossy().into_owned());
    measure_corpus(
        MeasureInputs {
            corpus_id: &corpus_id,
            texts: &texts,
            embeddings: embeddings.as_deref(),
            batch_embeddings: batches.as_deref(),
            reference: reference.as_ref(),
        },
        MeasureOptions { n_resamples: config.analysis.n_resamples, level: config.analysis.level, rng_seed: config.rng_seed },
    )
    .map_err(analysis_err)
}

pub(crate) fn contaminate(config: &RunConfig) -> Result<ContaminationReport, PipelineError> {
    let refs = read_texts(config.inputs.references.as_deref().expect("validated"))?;
    let targets = read_texts(config.inputs.targets.as_deref().expect("validated"))?;
    em_overlap(&refs, &targets, &config.analysis.n_values).map_err(analysis_err)
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut body = serde_json::to_string_pretty(value).expect("report serializes");
    body.push('\n');
    body.into_bytes()
}

pub(crate) fn run_analysis(config: &RunConfig, embedder: Option<&dyn Embedder>, dir: &Path) -> Result<(), PipelineError> {
    match config.mode {
        RunMode::Measure => {
            let report = measure(config, embedder)?;
            write_atomic(&dir.join(REPORT_FILE), &json_bytes(&report))?;
            let csv = format!("{}\n{}\n", report.csv_header(), report.csv_row());
            write_atomic(&dir.join(REPORT_CSV), csv.as_bytes())
        }
        RunMode::Contaminate => write_atomic(&dir.join(REPORT_FILE), &json_bytes(&contaminate(config)?)),
        _ => unreachable!("synthesis modes run workers"),
    }
}
