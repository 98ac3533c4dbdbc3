use super::describe::quantile_sorted;
use super::{IntervalEstimate, Result, StatsError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Wilson score interval for `successes / n`.
pub fn wilson_ci(successes: u64, n: u64, confidence: f64) -> Result<IntervalEstimate> {
    if n == 0 {
        return Err(StatsError::EmptySample);
    }
    if successes > n {
        return Err(StatsError::Domain(format!("{successes} successes out of {n}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::Domain(format!("confidence {confidence}")));
    }
    let z = normal_quantile(0.5 + confidence / 2.0);
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (center + half).min(1.0) };
    Ok(IntervalEstimate { point: p, lo, hi, confidence })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEstimate {
    pub interval: IntervalEstimate,
    pub replicates: usize,
    /// Replicates on which the statistic was undefined.
    pub dropped: usize,
}

fn replicate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn percentile_interval(
    point: f64,
    mut stats: Vec<f64>,
    replicates: usize,
    confidence: f64,
) -> Result<BootstrapEstimate> {
    let dropped = replicates - stats.len();
    if dropped * 10 > replicates || stats.is_empty() {
        return Err(StatsError::TooManyDropped { dropped, replicates });
    }
    stats.sort_by(f64::total_cmp);
    let alpha = 1.0 - confidence;
    let lo = quantile_sorted(&stats, alpha / 2.0).min(point);
    let hi = quantile_sorted(&stats, 1.0 - alpha / 2.0).max(point);
    Ok(BootstrapEstimate {
        interval: IntervalEstimate { point, lo, hi, confidence },
        replicates,
        dropped,
    })
}

fn check_args(replicates: usize, confidence: f64) -> Result<()> {
    if replicates == 0 {
        return Err(StatsError::Domain("zero bootstrap replicates".into()));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(StatsError::Domain(format!("confidence {confidence}")));
    }
    Ok(())
}

/// Percentile bootstrap over sample units. Replicate `i` draws from its own
/// ChaCha stream, so results do not depend on thread scheduling.
pub fn bootstrap_ci<T, F>(
    sample: &[T],
    statistic: F,
    replicates: usize,
    confidence: f64,
    seed: u64,
) -> Result<BootstrapEstimate>
where
    T: Clone + Send + Sync,
    F: Fn(&[T]) -> Option<f64> + Sync,
{
    check_args(replicates, confidence)?;
    if sample.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let point = statistic(sample).ok_or(StatsError::UndefinedStatistic)?;
    let n = sample.len();
    let stats: Vec<f64> = (0..replicates)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = replicate_rng(seed, i);
            let resample: Vec<T> = (0..n).map(|_| sample[rng.random_range(0..n)].clone()).collect();
            statistic(&resample).filter(|v| v.is_finite())
        })
        .collect();
    percentile_interval(point, stats, replicates, confidence)
}

/// Bootstrap over a histogram: `counts[i]` units carry `values[i]`. Each
/// replicate redraws the counts multinomially, which is equivalent to
/// resampling the underlying units with replacement.
pub fn bootstrap_counts_ci<V, F>(
    values: &[V],
    counts: &[u64],
    statistic: F,
    replicates: usize,
    confidence: f64,
    seed: u64,
) -> Result<BootstrapEstimate>
where
    V: Sync,
    F: Fn(&[V], &[u64]) -> Option<f64> + Sync,
{
    check_args(replicates, confidence)?;
    if values.len() != counts.len() {
        return Err(StatsError::Domain("values and counts differ in length".into()));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(StatsError::EmptySample);
    }
    let point = statistic(values, counts).ok_or(StatsError::UndefinedStatistic)?;
    let stats: Vec<f64> = (0..replicates)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = replicate_rng(seed, i);
            let mut remaining_n = total;
            let mut remaining_units = total;
            let mut drawn = vec![0u64; counts.len()];
            for (slot, &c) in drawn.iter_mut().zip(counts) {
                if remaining_n == 0 {
                    break;
                }
                if c == remaining_units {
                    *slot = remaining_n;
                    break;
                }
                let p = c as f64 / remaining_units as f64;
                let k = Binomial::new(remaining_n, p).expect("valid binomial").sample(&mut rng);
                *slot = k;
                remaining_n -= k;
                remaining_units -= c;
            }
            statistic(values, &drawn).filter(|v| v.is_finite())
        })
        .collect();
    percentile_interval(point, stats, replicates, confidence)
}
