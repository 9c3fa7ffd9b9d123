use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::text::{count_words, lexical_tokens};

/// Gzip level used by [`compression_ratio`].
pub const COMPRESSION_LEVEL: u32 = 9;
pub const HISTOGRAM_BIN_WIDTH: usize = 50;

fn concatenated<S: AsRef<str>>(corpus: &[S]) -> String {
    corpus.iter().map(AsRef::as_ref).collect::<Vec<_>>().join("\n")
}

fn gzip_len(bytes: &[u8]) -> usize {
    let mut enc = GzEncoder::new(Vec::new(), Compression::new(COMPRESSION_LEVEL));
    enc.write_all(bytes).expect("writing to a Vec cannot fail");
    enc.finish().expect("writing to a Vec cannot fail").len()
}

/// Uncompressed over gzip-compressed byte length of the concatenated corpus.
pub fn compression_ratio<S: AsRef<str>>(corpus: &[S]) -> Result<f64, MetricError> {
    if corpus.is_empty() {
        return Err(MetricError::Empty);
    }
    let text = concatenated(corpus);
    Ok(text.len() as f64 / gzip_len(text.as_bytes()) as f64)
}

fn corpus_tokens<S: AsRef<str>>(corpus: &[S]) -> Vec<String> {
    lexical_tokens(&concatenated(corpus))
}

fn ngram_ratio(tokens: &[String], n: usize) -> Result<f64, MetricError> {
    if n == 0 {
        return Err(MetricError::BadParameter("n must be at least 1".into()));
    }
    if tokens.len() < n {
        return Err(MetricError::TooShort { needed: n, tokens: tokens.len() });
    }
    let windows = tokens.windows(n);
    let total = windows.len();
    let unique: HashSet<&[String]> = windows.collect();
    Ok(unique.len() as f64 / total as f64)
}

/// Unique over total token n-grams of the concatenated corpus.
pub fn ngram_diversity<S: AsRef<str>>(corpus: &[S], n: usize) -> Result<f64, MetricError> {
    ngram_ratio(&corpus_tokens(corpus), n)
}

/// Sum of n-gram diversity for n = 1..=4.
pub fn ngd_sum<S: AsRef<str>>(corpus: &[S]) -> Result<f64, MetricError> {
    let tokens = corpus_tokens(corpus);
    (1..=4).map(|n| ngram_ratio(&tokens, n)).sum()
}

/// Token counts over a reference corpus.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferenceFrequencies {
    counts: HashMap<String, u64>,
    total_tokens: u64,
}

impl ReferenceFrequencies {
    pub fn from_counts(counts: HashMap<String, u64>) -> Self {
        let total_tokens = counts.values().sum();
        Self { counts, total_tokens }
    }

    pub fn from_corpus<S: AsRef<str>>(corpus: &[S]) -> Self {
        let mut counts = HashMap::new();
        for doc in corpus {
            for t in lexical_tokens(doc.as_ref()) {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
        Self::from_counts(counts)
    }

    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Read `token<TAB>count` lines. Repeated tokens are summed.
    pub fn load_tsv(path: &Path) -> Result<Self, MetricError> {
        let err = |message: String| MetricError::File { path: path.to_path_buf(), message };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let mut counts = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (token, count) = line.rsplit_once('\t').ok_or_else(|| err(format!("line {}: expected token<TAB>count", i + 1)))?;
            let count: u64 = count.trim().parse().map_err(|_| err(format!("line {}: bad count {count:?}", i + 1)))?;
            *counts.entry(token.to_string()).or_insert(0) += count;
        }
        Ok(Self::from_counts(counts))
    }

    /// Write sorted `token<TAB>count` lines.
    pub fn write_tsv(&self, path: &Path) -> Result<(), MetricError> {
        let mut rows: Vec<(&String, &u64)> = self.counts.iter().collect();
        rows.sort();
        let body: String = rows.into_iter().map(|(t, c)| format!("{t}\t{c}\n")).collect();
        fs::write(path, body).map_err(|e| MetricError::File { path: path.to_path_buf(), message: e.to_string() })
    }
}

/// Mean inverse frequency of each non-empty document:
/// mean over its tokens of `ln(total / (1 + count))`.
pub fn mif_per_document<S: AsRef<str>>(corpus: &[S], reference: &ReferenceFrequencies) -> Result<Vec<f64>, MetricError> {
    if reference.total_tokens == 0 {
        return Err(MetricError::BadParameter("reference corpus has no tokens".into()));
    }
    let total = reference.total_tokens as f64;
    let scores: Vec<f64> = corpus
        .iter()
        .filter_map(|doc| {
            let tokens = lexical_tokens(doc.as_ref());
            (!tokens.is_empty()).then(|| {
                tokens.iter().map(|t| (total / (1.0 + reference.count(t) as f64)).ln()).sum::<f64>() / tokens.len() as f64
            })
        })
        .collect();
    if scores.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(scores)
}

/// Mean of the per-document scores from [`mif_per_document`].
pub fn mif<S: AsRef<str>>(corpus: &[S], reference: &ReferenceFrequencies) -> Result<f64, MetricError> {
    let scores = mif_per_document(corpus, reference)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
}

/// Word-count histogram with 50-word bins from zero up to the longest
/// document.
pub fn length_histogram<S: AsRef<str>>(corpus: &[S]) -> Vec<HistogramBin> {
    let lengths: Vec<usize> = corpus.iter().map(|d| count_words(d.as_ref())).collect();
    let bins = lengths.iter().max().map_or(0, |m| m / HISTOGRAM_BIN_WIDTH + 1);
    let mut counts = vec![0usize; bins];
    for l in lengths {
        counts[l / HISTOGRAM_BIN_WIDTH] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin { lo: i * HISTOGRAM_BIN_WIDTH, hi: (i + 1) * HISTOGRAM_BIN_WIDTH - 1, count })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compression_matches_reference_gzip() {
        // Sizes from Python's gzip.compress(data, 9, mtime=0).
        assert_eq!(compression_ratio(&["ab".repeat(500)]).unwrap(), 1000.0 / 30.0);
        assert_eq!(compression_ratio(&["a"]).unwrap(), 1.0 / 21.0);
        assert!(compression_ratio::<&str>(&[]).is_err());
    }

    #[test]
    fn ngram_hand_counts() {
        assert_eq!(ngram_diversity(&["a b a b"], 1).unwrap(), 0.5);
        assert_eq!(ngram_diversity(&["a b a b"], 2).unwrap(), 2.0 / 3.0);
        assert_eq!(ngram_diversity(&["a b c d e"], 3).unwrap(), 1.0);
        assert!(ngram_diversity(&["a"], 2).is_err());
    }

    #[test]
    fn mif_edge_values() {
        let r = ReferenceFrequencies::from_counts(HashMap::from([("the".to_string(), 999), ("x".to_string(), 1)]));
        assert_eq!(r.total_tokens(), 1000);
        assert_eq!(mif(&["the"], &r).unwrap(), 0.0);
        assert_eq!(mif(&["unseen"], &r).unwrap(), 1000f64.ln());
    }

    #[test]
    fn histogram_bins() {
        let docs = [vec!["w"; 10].join(" "), vec!["w"; 60].join(" "), vec!["w"; 60].join(" "), String::new()];
        let h = length_histogram(&docs);
        assert_eq!(h, vec![HistogramBin { lo: 0, hi: 49, count: 2 }, HistogramBin { lo: 50, hi: 99, count: 2 }]);
    }
}
