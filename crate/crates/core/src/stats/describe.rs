use super::{Result, StatsError};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Type-7 quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(xs: &[f64], q: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&v, q))
}

pub fn median(xs: &[f64]) -> Result<f64> {
    quantile(xs, 0.5)
}

/// Gini coefficient of non-negative values.
pub fn gini(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(StatsError::EmptySample);
    }
    if xs.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(StatsError::Domain("gini requires finite non-negative values".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let total: f64 = v.iter().sum();
    if total == 0.0 {
        return Err(StatsError::UndefinedStatistic);
    }
    let n = v.len() as f64;
    let weighted: f64 = v.iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).sum();
    Ok((2.0 * weighted / (n * total) - (n + 1.0) / n).max(0.0))
}

fn kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as usize;
    (0..=radius)
        .map(|d| (-(d as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect()
}

/// Gaussian smoothing with the kernel truncated at 3 sigma and renormalised
/// where it runs past either end.
pub fn gaussian_smooth(values: &[f64], sigma: f64) -> Vec<f64> {
    let masked: Vec<Option<f64>> = values.iter().copied().map(Some).collect();
    gaussian_smooth_masked(&masked, sigma)
        .into_iter()
        .map(|v| v.expect("all entries defined"))
        .collect()
}

/// As [`gaussian_smooth`], skipping undefined entries. Outputs stay undefined
/// where the input is.
pub fn gaussian_smooth_masked(values: &[Option<f64>], sigma: f64) -> Vec<Option<f64>> {
    if !(sigma > 0.0) {
        return values.to_vec();
    }
    let k = kernel(sigma);
    let r = k.len() - 1;
    (0..values.len())
        .map(|i| {
            values[i]?;
            let lo = i.saturating_sub(r);
            let hi = (i + r).min(values.len() - 1);
            let (mut acc, mut wsum) = (0.0, 0.0);
            for (j, v) in values.iter().enumerate().take(hi + 1).skip(lo) {
                if let Some(v) = v {
                    let w = k[i.abs_diff(j)];
                    acc += w * v;
                    wsum += w;
                }
            }
            Some(acc / wsum)
        })
        .collect()
}
