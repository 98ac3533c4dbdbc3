use super::TemporalError;
use crate::linalg::{invert_spd, solve_spd, Matrix};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

const MAX_ITER: usize = 500;
const REL_TOL: f64 = 1e-10;

/// `N(t) = K / (1 + exp(-r (t - t0)))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    pub k: f64,
    pub r: f64,
    pub t0: f64,
}

impl LogisticParams {
    pub fn eval(&self, t: f64) -> f64 {
        self.k / (1.0 + (-self.r * (t - self.t0)).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub params: LogisticParams,
    /// Standard errors of `(K, r, t0)`; `None` with no residual degrees of freedom.
    pub param_ses: Option<[f64; 3]>,
    pub rss: f64,
    pub initial: LogisticParams,
    pub initial_rss: f64,
    pub iterations: usize,
}

fn rss(p: &LogisticParams, ts: &[f64], ys: &[f64]) -> f64 {
    ts.iter().zip(ys).map(|(&t, &y)| (y - p.eval(t)).powi(2)).sum()
}

/// Rows of d f / d (K, r, t0).
fn jacobian(p: &LogisticParams, ts: &[f64]) -> Vec<[f64; 3]> {
    ts.iter()
        .map(|&t| {
            let e = (-p.r * (t - p.t0)).exp();
            let d = 1.0 + e;
            [1.0 / d, p.k * e * (t - p.t0) / (d * d), -p.k * e * p.r / (d * d)]
        })
        .collect()
}

fn normal_equations(j: &[[f64; 3]], res: &[f64]) -> (Matrix, Vec<f64>) {
    let mut jtj = vec![vec![0.0; 3]; 3];
    let mut jtr = vec![0.0; 3];
    for (row, &r) in j.iter().zip(res) {
        for a in 0..3 {
            jtr[a] += row[a] * r;
            for b in 0..3 {
                jtj[a][b] += row[a] * row[b];
            }
        }
    }
    (jtj, jtr)
}

fn initial_guess(ts: &[f64], ys: &[f64]) -> Result<LogisticParams, TemporalError> {
    let max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_slope = ts
        .windows(2)
        .zip(ys.windows(2))
        .map(|(t, y)| (y[1] - y[0]) / (t[1] - t[0]))
        .fold(0.0, f64::max);
    if !(max_slope > 0.0) {
        return Err(TemporalError::Domain("cumulative series is flat".into()));
    }
    let k = 1.05 * max;
    let half = max / 2.0;
    let i = ys.iter().position(|&y| y >= half).expect("max reached");
    let t0 = if i == 0 || ys[i] == ys[i - 1] {
        ts[i]
    } else {
        ts[i - 1] + (half - ys[i - 1]) / (ys[i] - ys[i - 1]) * (ts[i] - ts[i - 1])
    };
    Ok(LogisticParams { k, r: 4.0 * max_slope / k, t0 })
}

/// Damped Gauss-Newton (Levenberg-Marquardt) fit of the three-parameter
/// logistic to a cumulative series, on time centred at its mean.
pub fn fit_logistic_births(cumulative: &BTreeMap<i32, f64>) -> Result<LogisticFit, TemporalError> {
    if cumulative.len() < 6 {
        return Err(TemporalError::InsufficientData(format!(
            "logistic fit needs 6 years, got {}",
            cumulative.len()
        )));
    }
    let raw_ts: Vec<f64> = cumulative.keys().map(|&y| f64::from(y)).collect();
    let ys: Vec<f64> = cumulative.values().copied().collect();
    if ys.windows(2).any(|w| w[1] < w[0]) || ys.iter().any(|y| !y.is_finite()) {
        return Err(TemporalError::Domain("cumulative series is not non-decreasing".into()));
    }
    let centre = raw_ts.iter().sum::<f64>() / raw_ts.len() as f64;
    let ts: Vec<f64> = raw_ts.iter().map(|t| t - centre).collect();
    let init = initial_guess(&ts, &ys)?;
    let init_rss = rss(&init, &ts, &ys);
    let scale: f64 = ys.iter().map(|y| y * y).sum::<f64>().max(1e-300);

    let mut p = init;
    let mut cur = init_rss;
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        iterations += 1;
        if cur <= 1e-28 * scale {
            converged = true;
            break;
        }
        let j = jacobian(&p, &ts);
        let res: Vec<f64> = ts.iter().zip(&ys).map(|(&t, &y)| y - p.eval(t)).collect();
        let (jtj, jtr) = normal_equations(&j, &res);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = jtj.clone();
            for (a, row) in damped.iter_mut().enumerate() {
                row[a] += lambda * jtj[a][a].max(1e-12);
            }
            let Some(step) = solve_spd(&damped, &jtr) else {
                lambda *= 10.0;
                continue;
            };
            let cand = LogisticParams { k: p.k + step[0], r: p.r + step[1], t0: p.t0 + step[2] };
            let new = rss(&cand, &ts, &ys);
            if new.is_finite() && new < cur {
                let improvement = (cur - new) / cur;
                p = cand;
                cur = new;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if improvement < REL_TOL {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        // No damping level reduces the residual: we are at a minimum.
        if !accepted || converged {
            converged = true;
            break;
        }
    }
    let uncentre = |q: LogisticParams| LogisticParams { t0: q.t0 + centre, ..q };
    if !converged {
        return Err(TemporalError::NonConvergence { best: uncentre(p), rss: cur, iterations });
    }
    if !(p.k > 0.0 && p.r > 0.0) {
        return Err(TemporalError::Domain(format!("fit left the admissible region: K={}, r={}", p.k, p.r)));
    }
    let n = ts.len();
    let param_ses = (n > 3)
        .then(|| {
            let (jtj, _) = normal_equations(&jacobian(&p, &ts), &vec![0.0; n]);
            let sigma2 = cur / (n - 3) as f64;
            invert_spd(&jtj).map(|cov| [0, 1, 2].map(|i| (sigma2 * cov[i][i]).sqrt()))
        })
        .flatten();
    Ok(LogisticFit {
        params: uncentre(p),
        param_ses,
        rss: cur,
        initial: uncentre(init),
        initial_rss: init_rss,
        iterations,
    })
}
