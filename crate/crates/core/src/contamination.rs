//! Exact-match n-gram overlap between reference examples and a target corpus.
//!
//! A reference counts as contaminated at `n` when any run of `n` consecutive
//! tokens from it also occurs, in order, somewhere inside a target. Text is
//! normalized with [`contamination_tokens`] before matching.

use std::collections::{HashMap, HashSet};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::contamination_tokens;

pub const MAX_N: usize = 50;
pub const NORMALIZATION: &str = "lowercase; non-alphanumeric characters removed; whitespace-split tokens";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContaminationError {
    #[error("no reference examples")]
    NoReferences,
    #[error("no target texts")]
    NoTargets,
    #[error("no n values requested")]
    NoN,
    #[error("n = {0} is outside 1..={MAX_N}")]
    BadN(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationReport {
    /// Fraction of references contaminated, keyed `EM-n`, in request order.
    pub fractions: IndexMap<String, f64>,
    pub contaminated: IndexMap<String, usize>,
    /// References shorter than `n`, counted as clean.
    pub skipped: IndexMap<String, usize>,
    pub n_reference: usize,
    pub normalization: String,
}

impl ContaminationReport {
    pub fn fraction(&self, n: usize) -> Option<f64> {
        self.fractions.get(&key(n)).copied()
    }
}

fn key(n: usize) -> String {
    format!("EM-{n}")
}

/// Token ids shared by targets and references. Reference tokens that never
/// occur in a target map to `None` and break every window they sit in.
#[derive(Default)]
struct Vocab {
    ids: HashMap<String, u32>,
}

impl Vocab {
    fn intern(&mut self, tok: String) -> u32 {
        let next = self.ids.len() as u32;
        *self.ids.entry(tok).or_insert(next)
    }
}

/// Interned target token sequences with one window set per `n`.
pub struct TargetIndex {
    vocab: Vocab,
    targets: Vec<Vec<u32>>,
}

impl TargetIndex {
    pub fn build<S: AsRef<str>>(targets: &[S]) -> Self {
        let mut vocab = Vocab::default();
        let targets = targets
            .iter()
            .map(|t| contamination_tokens(t.as_ref()).into_iter().map(|tok| vocab.intern(tok)).collect())
            .collect();
        Self { vocab, targets }
    }

    fn windows(&self, n: usize) -> HashSet<&[u32]> {
        self.targets.iter().flat_map(|t| t.windows(n)).collect()
    }

    fn lookup(&self, text: &str) -> Vec<Option<u32>> {
        contamination_tokens(text).iter().map(|t| self.vocab.ids.get(t).copied()).collect()
    }
}

fn hit(tokens: &[Option<u32>], n: usize, windows: &HashSet<&[u32]>) -> bool {
    let mut buf = Vec::with_capacity(n);
    tokens.windows(n).any(|w| {
        buf.clear();
        for t in w {
            match t {
                Some(id) => buf.push(*id),
                None => return false,
            }
        }
        windows.contains(buf.as_slice())
    })
}

/// EM-n for every requested `n`. Duplicate `n` values are reported once.
pub fn em_overlap<R, T>(references: &[R], targets: &[T], n_values: &[usize]) -> Result<ContaminationReport, ContaminationError>
where
    R: AsRef<str> + Sync,
    T: AsRef<str>,
{
    if references.is_empty() {
        return Err(ContaminationError::NoReferences);
    }
    if targets.is_empty() {
        return Err(ContaminationError::NoTargets);
    }
    if n_values.is_empty() {
        return Err(ContaminationError::NoN);
    }
    if let Some(&bad) = n_values.iter().find(|&&n| n == 0 || n > MAX_N) {
        return Err(ContaminationError::BadN(bad));
    }
    let index = TargetIndex::build(targets);
    let refs: Vec<Vec<Option<u32>>> = references.par_iter().map(|r| index.lookup(r.as_ref())).collect();
    let total = refs.len();
    let mut report = ContaminationReport {
        fractions: IndexMap::new(),
        contaminated: IndexMap::new(),
        skipped: IndexMap::new(),
        n_reference: total,
        normalization: NORMALIZATION.to_string(),
    };
    for &n in n_values {
        if report.fractions.contains_key(&key(n)) {
            continue;
        }
        let windows = index.windows(n);
        let skipped = refs.iter().filter(|r| r.len() < n).count();
        if skipped > 0 {
            log::warn!("EM-{n}: {skipped} of {total} references are shorter than {n} tokens and count as clean");
        }
        let hits = refs.par_iter().filter(|r| hit(r, n, &windows)).count();
        report.fractions.insert(key(n), hits as f64 / total as f64);
        report.contaminated.insert(key(n), hits);
        report.skipped.insert(key(n), skipped);
    }
    Ok(report)
}
