//! Corpus diversity metrics with bootstrap confidence intervals.
//!
//! Lexical metrics work on the corpus concatenated with `"\n"` between
//! records. All metrics except [`compression_ratio`] ignore record order;
//! compression depends on it, so reports carry a hash of the corpus order.

mod bootstrap;
mod embedding;
mod lexical;
mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use bootstrap::{bootstrap_ci, bootstrap_statistic, percentile, BootstrapEstimate, DEFAULT_LEVEL, DEFAULT_RESAMPLES};
pub use embedding::{chamfer, cosine_distance_rows, remote_clique, task2vec_coefficient, EmbeddingSet};
pub use lexical::{
    compression_ratio, length_histogram, mif, mif_per_document, ngd_sum, ngram_diversity, HistogramBin, ReferenceFrequencies,
    COMPRESSION_LEVEL, HISTOGRAM_BIN_WIDTH,
};
pub use report::{corpus_order_hash, measure_corpus, Direction, DiversityReport, MeasureInputs, MeasureOptions, MetricEstimate};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("corpus is empty")]
    Empty,
    #[error("corpus has {tokens} tokens, need at least {needed}")]
    TooShort { needed: usize, tokens: usize },
    #[error("need at least {needed} vectors, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("vector {index} has dimension {got}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
    #[error("vector {0} has zero length")]
    ZeroVector(usize),
    #[error("invalid parameter: {0}")]
    BadParameter(String),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
}
