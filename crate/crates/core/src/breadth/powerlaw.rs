use super::BreadthError;
use crate::stats::{bootstrap_counts_ci, IntervalEstimate};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const MIN_TAIL: usize = 50;
const ALPHA_LO: f64 = 1.0 + 1e-9;
const ALPHA_HI: f64 = 50.0;
const TOL: f64 = 1e-7;

/// Bernoulli numbers B_2, B_4, ..., B_14.
const BERNOULLI: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

/// Hurwitz zeta `sum_{k>=0} (q + k)^-s` for `s > 1`, `q > 0`, by Euler-Maclaurin
/// summation after twelve explicit terms.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    assert!(s > 1.0 && q > 0.0, "hurwitz_zeta requires s > 1, q > 0");
    const N: usize = 12;
    let mut sum: f64 = (0..N).map(|k| (q + k as f64).powf(-s)).sum();
    let a = q + N as f64;
    sum += a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s);
    // Rising factorial s (s+1) ... (s+2j-2) over (2j)!, built incrementally.
    let mut coef = s / 2.0;
    let mut power = a.powf(-s - 1.0);
    for (j, b) in BERNOULLI.iter().enumerate() {
        sum += b * coef * power;
        let m = 2.0 * j as f64 + 2.0;
        coef *= (s + m - 1.0) * (s + m) / ((m + 1.0) * (m + 2.0));
        power /= a * a;
    }
    sum
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha_hat: f64,
    /// Exponent of the complementary CDF, `alpha_hat - 1`.
    pub ccdf_exponent: f64,
    pub ci: IntervalEstimate,
    pub k_min: u64,
    pub n_tail: usize,
    pub bootstrap_dropped: usize,
}

/// Mean log-likelihood per observation.
fn mean_loglik(alpha: f64, mean_ln_k: f64, k_min: u64) -> f64 {
    -alpha * mean_ln_k - hurwitz_zeta(alpha, k_min as f64).ln()
}

/// MLE of the discrete power-law exponent from a tail histogram. `None` when
/// the likelihood has no interior maximum.
pub fn powerlaw_alpha(values: &[u64], counts: &[u64], k_min: u64) -> Option<f64> {
    let (mut n, mut s) = (0u64, 0.0);
    let mut above = false;
    for (&k, &c) in values.iter().zip(counts) {
        if k >= k_min && c > 0 {
            n += c;
            s += c as f64 * (k as f64).ln();
            above |= k > k_min;
        }
    }
    if n == 0 || !above {
        return None;
    }
    let m = s / n as f64;
    // The log-likelihood is concave in alpha, so golden-section search suffices.
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (ALPHA_LO, ALPHA_HI);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (mean_loglik(c, m, k_min), mean_loglik(d, m, k_min));
    while b - a > TOL {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = mean_loglik(c, m, k_min);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = mean_loglik(d, m, k_min);
        }
    }
    let alpha = (a + b) / 2.0;
    (alpha < ALPHA_HI - 1e-3).then_some(alpha)
}

/// Discrete power-law fit above `k_min` with a percentile bootstrap interval.
pub fn discrete_powerlaw_mle(
    ks: &[u64],
    k_min: u64,
    bootstrap_replicates: usize,
    seed: u64,
) -> Result<PowerLawFit, BreadthError> {
    let mut hist: BTreeMap<u64, u64> = BTreeMap::new();
    for &k in ks.iter().filter(|&&k| k >= k_min) {
        *hist.entry(k).or_insert(0) += 1;
    }
    let n_tail: usize = hist.values().sum::<u64>() as usize;
    if n_tail < MIN_TAIL {
        return Err(BreadthError::InsufficientTail { n: n_tail, k_min });
    }
    let values: Vec<u64> = hist.keys().copied().collect();
    let counts: Vec<u64> = hist.values().copied().collect();
    let alpha_hat = powerlaw_alpha(&values, &counts, k_min).ok_or_else(|| {
        BreadthError::Unbounded(format!("all {n_tail} observations equal k_min={k_min}; alpha diverges"))
    })?;
    let boot = bootstrap_counts_ci(
        &values,
        &counts,
        |v, c| powerlaw_alpha(v, c, k_min),
        bootstrap_replicates,
        0.95,
        seed,
    )?;
    Ok(PowerLawFit {
        alpha_hat,
        ccdf_exponent: alpha_hat - 1.0,
        ci: IntervalEstimate { point: alpha_hat, ..boot.interval },
        k_min,
        n_tail,
        bootstrap_dropped: boot.dropped,
    })
}
