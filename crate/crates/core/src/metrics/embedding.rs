use rayon::prelude::*;

use super::MetricError;
use crate::vector::dot;

/// Non-zero vectors of one dimension with their squared norms.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    rows: Vec<Vec<f64>>,
    sq_norms: Vec<f64>,
}

impl EmbeddingSet {
    pub fn new(vectors: &[Vec<f64>]) -> Result<Self, MetricError> {
        let dim = vectors.first().map_or(0, Vec::len);
        let mut sq_norms = Vec::with_capacity(vectors.len());
        for (index, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(MetricError::DimensionMismatch { index, expected: dim, got: v.len() });
            }
            let sq = dot(v, v);
            if sq == 0.0 || !sq.is_finite() {
                return Err(MetricError::ZeroVector(index));
            }
            sq_norms.push(sq);
        }
        Ok(Self { rows: vectors.to_vec(), sq_norms })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Cosine distance, clamped to [0, 2]. Exactly 0 for `i == j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let cos = dot(&self.rows[i], &self.rows[j]) / (self.sq_norms[i] * self.sq_norms[j]).sqrt();
        (1.0 - cos).clamp(0.0, 2.0)
    }

    /// The vectors at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            sq_norms: indices.iter().map(|&i| self.sq_norms[i]).collect(),
        }
    }
}

fn need(v: &EmbeddingSet, n: usize) -> Result<(), MetricError> {
    if v.len() < n {
        return Err(MetricError::TooFew { needed: n, got: v.len() });
    }
    Ok(())
}

/// Per-row distance aggregates, computed in parallel and returned in row
/// order so later reductions are sequential and reproducible.
pub fn cosine_distance_rows<F>(v: &EmbeddingSet, row: F) -> Vec<f64>
where
    F: Fn(&EmbeddingSet, usize) -> f64 + Sync,
{
    (0..v.len()).into_par_iter().map(|i| row(v, i)).collect()
}

fn row_sum(v: &EmbeddingSet, i: usize) -> f64 {
    (0..v.len()).map(|j| v.distance(i, j)).sum()
}

/// Mean cosine distance over all N² ordered pairs, diagonal included.
pub fn remote_clique(v: &EmbeddingSet) -> Result<f64, MetricError> {
    need(v, 2)?;
    let n = v.len() as f64;
    Ok(cosine_distance_rows(v, row_sum).iter().sum::<f64>() / (n * n))
}

/// Mean over vectors of the distance to the nearest other vector.
pub fn chamfer(v: &EmbeddingSet) -> Result<f64, MetricError> {
    need(v, 2)?;
    let mins = cosine_distance_rows(v, |v, i| (0..v.len()).filter(|&j| j != i).map(|j| v.distance(i, j)).fold(f64::INFINITY, f64::min));
    Ok(mins.iter().sum::<f64>() / v.len() as f64)
}

/// Mean cosine distance over unordered pairs: 2/(M(M-1)) times the sum over i<j.
pub fn task2vec_coefficient(v: &EmbeddingSet) -> Result<f64, MetricError> {
    need(v, 2)?;
    let m = v.len() as f64;
    let upper = cosine_distance_rows(v, |v, i| (i + 1..v.len()).map(|j| v.distance(i, j)).sum());
    Ok(2.0 / (m * (m - 1.0)) * upper.iter().sum::<f64>())
}
