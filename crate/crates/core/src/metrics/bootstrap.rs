use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MetricError;

pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEstimate {
    /// Mean of the resample statistics.
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
    /// Resamples that produced a statistic.
    pub n_resamples: usize,
    pub level: f64,
}

/// Linear-interpolation percentile of sorted data, `p` in [0, 1].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn check(n_items: usize, n_resamples: usize, level: f64) -> Result<(), MetricError> {
    if n_items < 2 {
        return Err(MetricError::TooFew { needed: 2, got: n_items });
    }
    if n_resamples < 100 {
        return Err(MetricError::BadParameter(format!("n_resamples must be at least 100, got {n_resamples}")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricError::BadParameter(format!("level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

/// Percentile bootstrap of an arbitrary statistic over `n_items` items.
///
/// Resample `r` draws its indices from its own ChaCha8 stream of `rng_seed`,
/// so results do not depend on thread scheduling. `statistic` receives the
/// drawn indices and may decline a resample by returning `None`.
pub fn bootstrap_statistic<F>(
    n_items: usize,
    n_resamples: usize,
    level: f64,
    rng_seed: u64,
    statistic: F,
) -> Result<BootstrapEstimate, MetricError>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    check(n_items, n_resamples, level)?;
    let stats: Vec<Option<f64>> = (0..n_resamples)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            rng.set_stream(r as u64);
            let idx: Vec<usize> = (0..n_items).map(|_| rng.gen_range(0..n_items)).collect();
            statistic(&idx)
        })
        .collect();
    let mut values: Vec<f64> = stats.into_iter().flatten().filter(|v| v.is_finite()).collect();
    if values.is_empty() {
        return Err(MetricError::BadParameter("no resample produced a statistic".into()));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let lo = percentile(&values, tail).min(mean);
    let hi = percentile(&values, 1.0 - tail).max(mean);
    Ok(BootstrapEstimate { mean, lo, hi, n_resamples: values.len(), level })
}

/// Percentile bootstrap of the mean of `values`.
pub fn bootstrap_ci(values: &[f64], n_resamples: usize, level: f64, rng_seed: u64) -> Result<BootstrapEstimate, MetricError> {
    bootstrap_statistic(values.len(), n_resamples, level, rng_seed, |idx| {
        Some(idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input() {
        let e = bootstrap_ci(&[3.0; 4], 1000, 0.95, 1).unwrap();
        assert_eq!((e.mean, e.lo, e.hi), (3.0, 3.0, 3.0));
    }

    #[test]
    fn deterministic_and_validated() {
        let v: Vec<f64> = (0..50).map(|i| (i * 7 % 13) as f64).collect();
        assert_eq!(bootstrap_ci(&v, 500, 0.9, 42).unwrap(), bootstrap_ci(&v, 500, 0.9, 42).unwrap());
        assert!(bootstrap_ci(&[1.0], 500, 0.9, 1).is_err());
        assert!(bootstrap_ci(&v, 99, 0.9, 1).is_err());
        assert!(bootstrap_ci(&v, 500, 1.0, 1).is_err());
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert_eq!(percentile(&[1.0, 2.0], 1.0), 2.0);
    }
}
