use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::bootstrap::{bootstrap_ci, bootstrap_statistic, BootstrapEstimate, DEFAULT_LEVEL, DEFAULT_RESAMPLES};
use super::embedding::{chamfer, remote_clique, task2vec_coefficient, EmbeddingSet};
use super::lexical::{compression_ratio, length_histogram, mif_per_document, ngd_sum, ngram_diversity, HistogramBin, ReferenceFrequencies};
use super::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricEstimate {
    /// Mean of the bootstrap resample statistics.
    pub point_estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_resamples: usize,
    pub level: f64,
    pub direction: Direction,
    /// The statistic on the full corpus.
    pub observed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub corpus_id: String,
    pub n_documents: usize,
    /// SHA-256 of the records in corpus order; compression ratio depends on it.
    pub corpus_order_hash: String,
    pub metrics: IndexMap<String, MetricEstimate>,
    pub length_histogram: Vec<HistogramBin>,
}

impl DiversityReport {
    pub fn csv_header(&self) -> String {
        let mut cols = vec!["corpus_id".to_string(), "n_documents".to_string()];
        for name in self.metrics.keys() {
            cols.extend([name.clone(), format!("{name}_ci_low"), format!("{name}_ci_high")]);
        }
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![self.corpus_id.replace(',', ";"), self.n_documents.to_string()];
        for m in self.metrics.values() {
            cols.extend([m.point_estimate.to_string(), m.ci_low.to_string(), m.ci_high.to_string()]);
        }
        cols.join(",")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureOptions {
    pub n_resamples: usize,
    pub level: f64,
    pub rng_seed: u64,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        Self { n_resamples: DEFAULT_RESAMPLES, level: DEFAULT_LEVEL, rng_seed: 0 }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MeasureInputs<'a> {
    pub corpus_id: &'a str,
    pub texts: &'a [String],
    /// One embedding per text, for remote-clique and Chamfer.
    pub embeddings: Option<&'a [Vec<f64>]>,
    /// One externally produced embedding per batch, for Task2Vec.
    pub batch_embeddings: Option<&'a [Vec<f64>]>,
    pub reference: Option<&'a ReferenceFrequencies>,
}

pub fn corpus_order_hash(texts: &[String]) -> String {
    let mut h = Sha256::new();
    for t in texts {
        h.update(t.as_bytes());
        h.update([0u8]);
    }
    hex::encode(h.finalize())
}

/// Distinct indices in ascending order. Duplicated draws would otherwise
/// make corpus-level statistics look less diverse than the corpus is.
fn distinct(idx: &[usize]) -> Vec<usize> {
    let mut v = idx.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

fn estimate(b: BootstrapEstimate, direction: Direction, observed: f64) -> MetricEstimate {
    MetricEstimate {
        point_estimate: b.mean,
        ci_low: b.lo,
        ci_high: b.hi,
        n_resamples: b.n_resamples,
        level: b.level,
        direction,
        observed,
    }
}

/// Compute every metric the inputs allow, each with a bootstrap CI.
///
/// Corpus-level metrics are recomputed on the distinct documents of each
/// resample, in corpus order. MIF is bootstrapped over per-document scores.
pub fn measure_corpus(inputs: MeasureInputs<'_>, options: MeasureOptions) -> Result<DiversityReport, MetricError> {
    let texts = inputs.texts;
    if texts.is_empty() {
        return Err(MetricError::Empty);
    }
    let (n, r, level, seed) = (texts.len(), options.n_resamples, options.level, options.rng_seed);
    let subset = |idx: &[usize]| -> Vec<&str> { distinct(idx).into_iter().map(|i| texts[i].as_str()).collect() };
    let mut metrics = IndexMap::new();

    let cr = compression_ratio(texts)?;
    let b = bootstrap_statistic(n, r, level, seed, |idx| compression_ratio(&subset(idx)).ok())?;
    metrics.insert("compression_ratio".into(), estimate(b, Direction::LowerBetter, cr));

    for (name, order) in [("ngd_1", 1usize), ("ngd_4", 4)] {
        let observed = ngram_diversity(texts, order)?;
        let b = bootstrap_statistic(n, r, level, seed, |idx| ngram_diversity(&subset(idx), order).ok())?;
        metrics.insert(name.into(), estimate(b, Direction::HigherBetter, observed));
    }
    let observed = ngd_sum(texts)?;
    let b = bootstrap_statistic(n, r, level, seed, |idx| ngd_sum(&subset(idx)).ok())?;
    metrics.insert("ngd_sum".into(), estimate(b, Direction::HigherBetter, observed));

    if let Some(emb) = inputs.embeddings {
        if emb.len() != n {
            return Err(MetricError::BadParameter(format!("{} embeddings for {n} documents", emb.len())));
        }
        let set = EmbeddingSet::new(emb)?;
        let rc = remote_clique(&set)?;
        let b = bootstrap_statistic(n, r, level, seed, |idx| remote_clique(&set.select(&distinct(idx))).ok())?;
        metrics.insert("remote_clique".into(), estimate(b, Direction::HigherBetter, rc));
        let ch = chamfer(&set)?;
        let b = bootstrap_statistic(n, r, level, seed, |idx| chamfer(&set.select(&distinct(idx))).ok())?;
        metrics.insert("chamfer".into(), estimate(b, Direction::HigherBetter, ch));
    }

    if let Some(reference) = inputs.reference {
        let scores = mif_per_document(texts, reference)?;
        let observed = scores.iter().sum::<f64>() / scores.len() as f64;
        let b = bootstrap_ci(&scores, r, level, seed)?;
        metrics.insert("mif".into(), estimate(b, Direction::HigherBetter, observed));
    }

    if let Some(batches) = inputs.batch_embeddings {
        let set = EmbeddingSet::new(batches)?;
        let t2v = task2vec_coefficient(&set)?;
        let b = bootstrap_statistic(set.len(), r, level, seed, |idx| task2vec_coefficient(&set.select(&distinct(idx))).ok())?;
        metrics.insert("task2vec".into(), estimate(b, Direction::HigherBetter, t2v));
    }

    Ok(DiversityReport {
        corpus_id: inputs.corpus_id.to_string(),
        n_documents: n,
        corpus_order_hash: corpus_order_hash(texts),
        metrics,
        length_histogram: length_histogram(texts),
    })
}
