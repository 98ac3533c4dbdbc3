use super::{Result, StatsError};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Straight-line least-squares fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    /// `None` when the fit has no residual degrees of freedom (n = 2).
    pub slope_se: Option<f64>,
    pub r2: f64,
    /// Two-sided t-test of slope != 0; requires n >= 3.
    pub p_value: Option<f64>,
    pub n: usize,
    /// Residual sum of squares.
    pub ssr: f64,
}

/// Two-sided p-value of a t statistic.
pub(crate) fn t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Least squares on raw coordinates. Accepts n >= 2 so that short body/tail
/// segments can be scored; inference fields are only filled for n >= 3.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<OlsFit> {
    if xs.len() != ys.len() {
        return Err(StatsError::Domain(format!("length mismatch {} vs {}", xs.len(), ys.len())));
    }
    let n = xs.len();
    if n < 2 {
        return Err(StatsError::InsufficientData { needed: 2, got: n });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(StatsError::Domain("non-finite coordinate".into()));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let scale = xs.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1.0);
    if sxx <= 1e-24 * scale * scale * nf {
        return Err(StatsError::SingularFit);
    }
    // A constant response gets an exact zero slope rather than rounding noise.
    let flat = ys.iter().all(|&y| y == ys[0]);
    let slope = if flat { 0.0 } else { sxy / sxx };
    let intercept = if flat { ys[0] } else { my - slope * mx };
    let syy = if flat { 0.0 } else { syy };
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r2 = if syy > 0.0 { (1.0 - ssr / syy).clamp(0.0, 1.0) } else { 0.0 };
    let (slope_se, p_value) = if n >= 3 {
        let df = nf - 2.0;
        let se = (ssr / df / sxx).sqrt();
        let p = if se > 0.0 {
            t_two_sided(slope / se, df)
        } else if slope != 0.0 {
            0.0
        } else {
            1.0
        };
        (Some(se), Some(p))
    } else {
        (None, None)
    };
    Ok(OlsFit { slope, intercept, slope_se, r2, p_value, n, ssr })
}

/// OLS with the n >= 3 contract used for reported fits.
pub fn ols_linear(xs: &[f64], ys: &[f64]) -> Result<OlsFit> {
    if xs.len() < 3 {
        return Err(StatsError::InsufficientData { needed: 3, got: xs.len() });
    }
    fit_line(xs, ys)
}

/// OLS on `(log10 x, log10 y)`; the slope is the power-law exponent.
pub fn ols_loglog(xs: &[f64], ys: &[f64]) -> Result<OlsFit> {
    if xs.len() != ys.len() {
        return Err(StatsError::Domain(format!("length mismatch {} vs {}", xs.len(), ys.len())));
    }
    if let Some(v) = xs.iter().chain(ys).find(|v| !(**v > 0.0)) {
        return Err(StatsError::Domain(format!("non-positive value {v} in log-log fit")));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.log10()).collect();
    ols_linear(&lx, &ly)
}
