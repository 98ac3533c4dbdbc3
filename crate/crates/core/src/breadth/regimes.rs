use super::{BreadthError, BreadthProfile};
use crate::stats::fit_line;
use serde::{Deserialize, Serialize};
use std::ops::RangeInclusive;

/// Relative SSR gap to the runner-up below which a breakpoint is flagged as
/// not identifiable.
pub const DEFAULT_DISTINCTNESS: f64 = 0.10;
const MIN_TAIL_UNIQUE: usize = 5;
const MIN_BODY_POINTS: usize = 2;
const MIN_SUPPORT: usize = 8;
const SSR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub k_candidate: usize,
    pub eligible: bool,
    pub body_ssr: Option<f64>,
    pub tail_ssr: Option<f64>,
    pub total_ssr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeFit {
    pub k_star: usize,
    pub body_slope: f64,
    pub tail_slope: f64,
    pub body_ssr: f64,
    pub tail_ssr: f64,
    pub ssr_scan: Vec<ScanEntry>,
    /// `(runner_up - best) / runner_up`; `None` with a single eligible candidate.
    pub relative_gap: Option<f64>,
    pub distinct: bool,
}

/// Scans candidate breakpoints, fitting straight lines to `(log10 k, log10 pmf)`
/// below and at-or-above each candidate and keeping the smallest total SSR.
/// Only k values with at least one observation enter the fits.
pub fn breakpoint_scan_fit(
    profile: &BreadthProfile,
    candidates: RangeInclusive<usize>,
    distinctness: f64,
) -> Result<RegimeFit, BreadthError> {
    let pts: Vec<(usize, f64, f64)> = profile
        .pmf
        .iter()
        .filter(|(_, &p)| p > 0.0)
        .map(|(&k, &p)| (k, (k as f64).log10(), p.log10()))
        .collect();
    if pts.len() < MIN_SUPPORT {
        return Err(BreadthError::InsufficientData(format!(
            "breakpoint scan needs {MIN_SUPPORT} support points, got {}",
            pts.len()
        )));
    }
    let mut best: Option<(usize, f64, f64, f64, f64, f64)> = None;
    let mut ssr_scan = Vec::new();
    for k in candidates {
        let (body, tail): (Vec<_>, Vec<_>) = pts.iter().partition(|p| p.0 < k);
        let eligible = tail.len() >= MIN_TAIL_UNIQUE && body.len() >= MIN_BODY_POINTS;
        if !eligible {
            ssr_scan.push(ScanEntry { k_candidate: k, eligible, body_ssr: None, tail_ssr: None, total_ssr: None });
            continue;
        }
        let fit = |seg: &[&(usize, f64, f64)]| {
            let xs: Vec<f64> = seg.iter().map(|p| p.1).collect();
            let ys: Vec<f64> = seg.iter().map(|p| p.2).collect();
            fit_line(&xs, &ys)
        };
        let (b, t) = (fit(&body)?, fit(&tail)?);
        let total = b.ssr + t.ssr;
        ssr_scan.push(ScanEntry {
            k_candidate: k,
            eligible,
            body_ssr: Some(b.ssr),
            tail_ssr: Some(t.ssr),
            total_ssr: Some(total),
        });
        if best.is_none_or(|bst| total < bst.1) {
            best = Some((k, total, b.slope, t.slope, b.ssr, t.ssr));
        }
    }
    let Some((k_star, total, body_slope, tail_slope, body_ssr, tail_ssr)) = best else {
        return Err(BreadthError::ScanInfeasible { scan: ssr_scan });
    };
    let runner_up = ssr_scan
        .iter()
        .filter(|e| e.k_candidate != k_star)
        .filter_map(|e| e.total_ssr)
        .reduce(f64::min);
    // When every split fits to rounding error the break cannot be identified.
    let relative_gap = runner_up.map(|r| if r > SSR_FLOOR { (r - total) / r } else { 0.0 });
    let distinct = relative_gap.is_some_and(|g| g >= distinctness);
    Ok(RegimeFit { k_star, body_slope, tail_slope, body_ssr, tail_ssr, ssr_scan, relative_gap, distinct })
}
