use super::{SurvivalError, SurvivalObs};
use crate::linalg::invert_spd;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KmCurve {
    pub label: String,
    /// 0 followed by the distinct event times.
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub events: Vec<usize>,
}

/// Product-limit estimate. Subjects censored at `t` stay in the risk set at `t`.
pub fn km_curve(obs: &[SurvivalObs], label: &str) -> KmCurve {
    let mut sorted = obs.to_vec();
    sorted.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut curve = KmCurve {
        label: label.to_string(),
        times: vec![0.0],
        survival: vec![1.0],
        at_risk: vec![obs.len()],
        events: vec![0],
    };
    // Exact running product while it fits, so each step is correctly rounded.
    let mut ratio = Some((1u128, 1u128));
    let mut s = 1.0;
    let mut at_risk = obs.len();
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].time;
        let mut j = i;
        let mut d = 0;
        while j < sorted.len() && sorted[j].time == t {
            d += usize::from(sorted[j].event);
            j += 1;
        }
        if d > 0 {
            ratio = ratio.and_then(|(num, den)| {
                let (num, den) = (num.checked_mul((at_risk - d) as u128)?, den.checked_mul(at_risk as u128)?);
                let g = gcd(num, den).max(1);
                Some((num / g, den / g))
            });
            s = match ratio {
                Some((num, den)) if num < 1 << 53 && den < 1 << 53 => num as f64 / den as f64,
                _ => s * (1.0 - d as f64 / at_risk as f64),
            };
            curve.times.push(t);
            curve.survival.push(s);
            curve.at_risk.push(at_risk);
            curve.events.push(d);
        }
        at_risk -= j - i;
        i = j;
    }
    curve
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRank {
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
}

/// K-sample log-rank test with hypergeometric covariance. Empty groups are
/// dropped before testing.
pub fn logrank(groups: &[Vec<SurvivalObs>]) -> Result<LogRank, SurvivalError> {
    let groups: Vec<&Vec<SurvivalObs>> = groups.iter().filter(|g| !g.is_empty()).collect();
    let g = groups.len();
    if g < 2 {
        return Err(SurvivalError::InsufficientData(format!("log-rank needs 2 non-empty strata, got {g}")));
    }
    let mut all: Vec<(f64, usize, bool)> =
        groups.iter().enumerate().flat_map(|(k, obs)| obs.iter().map(move |o| (o.time, k, o.event))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    if !all.iter().any(|o| o.2) {
        return Err(SurvivalError::NoEvents);
    }
    let mut at_risk: Vec<f64> = groups.iter().map(|obs| obs.len() as f64).collect();
    let mut o_minus_e = vec![0.0; g];
    let mut v = vec![vec![0.0; g]; g];
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        let mut j = i;
        let mut d_k = vec![0.0; g];
        let mut leaving = vec![0.0; g];
        while j < all.len() && all[j].0 == t {
            leaving[all[j].1] += 1.0;
            if all[j].2 {
                d_k[all[j].1] += 1.0;
            }
            j += 1;
        }
        let d: f64 = d_k.iter().sum();
        let n: f64 = at_risk.iter().sum();
        if d > 0.0 {
            for a in 0..g {
                o_minus_e[a] += d_k[a] - d * at_risk[a] / n;
                if n > 1.0 {
                    let scale = d * (n - d) / (n - 1.0);
                    for b in 0..g {
                        let delta = if a == b { 1.0 } else { 0.0 };
                        v[a][b] += scale * (at_risk[a] / n) * (delta - at_risk[b] / n);
                    }
                }
            }
        }
        for a in 0..g {
            at_risk[a] -= leaving[a];
        }
        i = j;
    }
    let df = g - 1;
    let chi2 = if o_minus_e[..df].iter().all(|&x| x == 0.0) {
        0.0
    } else {
        let sub: Vec<Vec<f64>> = v[..df].iter().map(|row| row[..df].to_vec()).collect();
        let inv = invert_spd(&sub).ok_or_else(|| SurvivalError::Degenerate("log-rank covariance is singular".into()))?;
        let mut q = 0.0;
        for a in 0..df {
            for b in 0..df {
                q += o_minus_e[a] * inv[a][b] * o_minus_e[b];
            }
        }
        q.max(0.0)
    };
    let p_value = ChiSquared::new(df as f64).expect("df >= 1").sf(chi2).clamp(0.0, 1.0);
    Ok(LogRank { chi2, df, p_value })
}
