use super::ols::t_two_sided;
use super::{Result, StatsError};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Largest `|xs| * |ys|` for which Mann-Whitney uses the exact null distribution.
pub const EXACT_MWU_MAX_PRODUCT: usize = 400;

/// 1-based ranks with ties replaced by their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
    }
}

/// Spearman rank correlation with a t-approximation p-value.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(StatsError::Domain(format!("length mismatch {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 3 {
        return Err(StatsError::InsufficientData { needed: 3, got: xs.len() });
    }
    let rho = pearson(&average_ranks(xs), &average_ranks(ys)).ok_or(StatsError::UndefinedCorrelation)?;
    let df = xs.len() as f64 - 2.0;
    let p = if rho.abs() >= 1.0 - 1e-15 {
        0.0
    } else {
        t_two_sided(rho * (df / (1.0 - rho * rho)).sqrt(), df)
    };
    Ok((rho, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// U for the first sample: pairs with x > y plus half the ties.
    pub u: f64,
    pub p_value: f64,
    pub exact: bool,
}

/// Two-sided Mann-Whitney U test.
///
/// Uses the exact permutation distribution of the (tie-aware) rank sum when
/// `|xs| * |ys| <= 400`, otherwise the tie-corrected normal approximation with
/// continuity correction.
pub fn mann_whitney_u(xs: &[f64], ys: &[f64]) -> Result<MannWhitney> {
    if xs.is_empty() || ys.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let (n1, n2) = (xs.len(), ys.len());
    let pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let ranks = average_ranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    if n1 * n2 <= EXACT_MWU_MAX_PRODUCT {
        let p = exact_rank_sum_p(&ranks, n1);
        return Ok(MannWhitney { u, p_value: p, exact: true });
    }
    let n = (n1 + n2) as f64;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let (f1, f2) = (n1 as f64, n2 as f64);
    let var = f1 * f2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let mu = f1 * f2 / 2.0;
    let p = if var <= 0.0 {
        1.0
    } else {
        let z = ((u - mu).abs() - 0.5).max(0.0) / var.sqrt();
        let normal = Normal::standard();
        (2.0 * normal.sf(z)).min(1.0)
    };
    Ok(MannWhitney { u, p_value: p, exact: false })
}

/// Exact two-sided p of the rank sum of the first `m` entries, enumerating
/// all subsets of that size through a counting recursion on doubled ranks.
fn exact_rank_sum_p(ranks: &[f64], m_first: usize) -> f64 {
    let n = ranks.len();
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0).round() as usize).collect();
    let observed: usize = doubled[..m_first].iter().sum();
    // Count subsets of the smaller size; the complement statistic is symmetric.
    let (m, observed) = if m_first <= n - m_first {
        (m_first, observed)
    } else {
        (n - m_first, doubled.iter().sum::<usize>() - observed)
    };
    let max_sum: usize = {
        let mut d = doubled.clone();
        d.sort_unstable_by(|a, b| b.cmp(a));
        d[..m].iter().sum()
    };
    let mut dp = vec![vec![0.0f64; max_sum + 1]; m + 1];
    dp[0][0] = 1.0;
    for (i, &v) in doubled.iter().enumerate() {
        for j in (1..=m.min(i + 1)).rev() {
            let (lower, upper) = dp.split_at_mut(j);
            let prev = &lower[j - 1];
            let cur = &mut upper[0];
            for s in (0..=max_sum - v).rev() {
                if prev[s] != 0.0 {
                    cur[s + v] += prev[s];
                }
            }
        }
    }
    let total: f64 = dp[m].iter().sum();
    // Doubled expected rank sum is m (n + 1).
    let expected = (m * (n + 1)) as i64;
    let dev = (observed as i64 - expected).abs();
    let extreme: f64 = dp[m]
        .iter()
        .enumerate()
        .filter(|(s, _)| (*s as i64 - expected).abs() >= dev)
        .map(|(_, c)| c)
        .sum();
    (extreme / total).min(1.0)
}
