//! Community residualisation as a time-to-event problem: residual-phase
//! detection, cohort hazards, Kaplan-Meier curves, log-rank tests and a
//! proportional-hazards model on end-of-window community covariates.

mod cox;
mod km;

pub use cox::{concordance, cox_fit_matrix, cox_partial_loglik, CoxFit, CoxTerm, Ties};
pub use km::{km_curve, logrank, KmCurve, LogRank};

use crate::bigraph::{BipartiteGraph, CommunitySummary, Partition};
use crate::breadth::BreadthProfile;
use crate::stats::quantile_sorted;
use crate::temporal::AnnualMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SurvivalError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("no events observed; test undefined")]
    NoEvents,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("collinear covariates: {columns:?}")]
    Collinear { columns: Vec<String> },
    #[error("divergence: {0}")]
    Divergence(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("stratum '{0}' is empty")]
    EmptyStratum(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalObs {
    pub time: f64,
    pub event: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub community_id: usize,
    pub birth_year: i32,
    pub last_nonresidual_year: i32,
    /// Years from birth through the last non-residual year, inclusive.
    pub span: u32,
    /// Entered the residual phase before the window closed.
    pub event: bool,
    pub threshold: f64,
    pub mean_activity: f64,
    pub fraction: f64,
    /// Born in the final year: span 1 and necessarily censored.
    pub born_in_last_year: bool,
}

impl SurvivalRecord {
    pub fn obs(&self) -> SurvivalObs {
        SurvivalObs { time: f64::from(self.span), event: self.event }
    }
}

/// One record per community born on or before `y_end`. A year is
/// non-residual when its activity is at least `fraction` of the mean
/// activity from birth through `y_end`.
pub fn residual_phase(m: &AnnualMatrix, fraction: f64, y_end: i32) -> Result<Vec<SurvivalRecord>, SurvivalError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(SurvivalError::Domain(format!("fraction must lie in (0, 1), got {fraction}")));
    }
    if !m.years().contains(&y_end) {
        return Err(SurvivalError::Domain(format!(
            "y_end {y_end} outside matrix years {}..={}",
            m.first_year, m.last_year
        )));
    }
    let born: Vec<(usize, i32)> = m.births.iter().filter(|(_, &b)| b <= y_end).map(|(&c, &b)| (c, b)).collect();
    Ok(born
        .par_iter()
        .map(|&(c, b)| {
            let total: u64 = (b..=y_end).map(|y| m.get(c, y)).sum();
            let mean_activity = total as f64 / f64::from(y_end - b + 1);
            let threshold = fraction * mean_activity;
            let last = (b..=y_end)
                .rev()
                .find(|&y| m.get(c, y) as f64 >= threshold)
                .expect("birth year carries activity above any sub-mean threshold");
            SurvivalRecord {
                community_id: c,
                birth_year: b,
                last_nonresidual_year: last,
                span: (last - b + 1) as u32,
                event: last < y_end,
                threshold,
                mean_activity,
                fraction,
                born_in_last_year: b == y_end,
            }
        })
        .collect())
}

/// Records for several threshold fractions at once, keyed in input order.
pub fn residual_phase_sensitivity(
    m: &AnnualMatrix,
    fractions: &[f64],
    y_end: i32,
) -> Result<Vec<(f64, Vec<SurvivalRecord>)>, SurvivalError> {
    fractions.iter().map(|&f| Ok((f, residual_phase(m, f, y_end)?))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortHazard {
    pub birth_year: i32,
    pub n: usize,
    pub events: u64,
    pub total_span: u64,
    /// Events per community-year at risk; `None` for a zero total span.
    pub hazard: Option<f64>,
}

pub fn cohort_hazard(records: &[SurvivalRecord]) -> Result<Vec<CohortHazard>, SurvivalError> {
    if records.is_empty() {
        return Err(SurvivalError::InsufficientData("no survival records".into()));
    }
    let mut by: BTreeMap<i32, (usize, u64, u64)> = BTreeMap::new();
    for r in records {
        let e = by.entry(r.birth_year).or_default();
        e.0 += 1;
        e.1 += u64::from(r.event);
        e.2 += u64::from(r.span);
    }
    Ok(by
        .into_iter()
        .map(|(birth_year, (n, events, total_span))| CohortHazard {
            birth_year,
            n,
            events,
            total_span,
            hazard: (total_span > 0).then(|| events as f64 / total_span as f64),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strata {
    /// Stratum labels in reporting order.
    pub labels: Vec<String>,
    pub assignment: BTreeMap<usize, String>,
}

pub const TERTILE_LABELS: [&str; 3] = ["low", "mid", "high"];

/// Tertiles on the pooled values with type-7 cut points; a value equal to a
/// cut point falls in the lower stratum.
pub fn tertile_strata(values: &BTreeMap<usize, f64>) -> Result<Strata, SurvivalError> {
    if values.is_empty() {
        return Err(SurvivalError::InsufficientData("no values to stratify".into()));
    }
    let mut sorted: Vec<f64> = values.values().copied().collect();
    if sorted.iter().any(|v| !v.is_finite()) {
        return Err(SurvivalError::Domain("non-finite stratification value".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let c1 = quantile_sorted(&sorted, 1.0 / 3.0);
    let c2 = quantile_sorted(&sorted, 2.0 / 3.0);
    let assignment = values
        .iter()
        .map(|(&c, &v)| {
            let i = if v <= c1 { 0 } else if v <= c2 { 1 } else { 2 };
            (c, TERTILE_LABELS[i].to_string())
        })
        .collect();
    Ok(Strata { labels: TERTILE_LABELS.iter().map(|s| s.to_string()).collect(), assignment })
}

fn grouped(records: &[SurvivalRecord], strata: &Strata) -> Result<Vec<Vec<SurvivalObs>>, SurvivalError> {
    let mut groups: Vec<Vec<SurvivalObs>> = vec![Vec::new(); strata.labels.len()];
    for r in records {
        let label = strata
            .assignment
            .get(&r.community_id)
            .ok_or_else(|| SurvivalError::Coverage(format!("community {} has no stratum", r.community_id)))?;
        let i = strata
            .labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| SurvivalError::Coverage(format!("unknown stratum label '{label}'")))?;
        groups[i].push(r.obs());
    }
    Ok(groups)
}

pub fn km_estimate(records: &[SurvivalRecord], strata: &Strata) -> Result<Vec<KmCurve>, SurvivalError> {
    let groups = grouped(records, strata)?;
    strata
        .labels
        .iter()
        .zip(&groups)
        .map(|(label, g)| {
            if g.is_empty() {
                Err(SurvivalError::EmptyStratum(label.clone()))
            } else {
                Ok(km_curve(g, label))
            }
        })
        .collect()
}

pub fn logrank_test(records: &[SurvivalRecord], strata: &Strata) -> Result<LogRank, SurvivalError> {
    logrank(&grouped(records, strata)?)
}

pub const COVARIATE_NAMES: [&str; 6] =
    ["birth_year", "log10_repos", "log10_contributors", "inter_pr_share", "log10_1p_d_ext", "cross_share_k2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateRow {
    pub community_id: usize,
    pub birth_year: i32,
    pub log10_repos: f64,
    pub log10_contributors: f64,
    /// Zero when the community received no attributable pull request.
    pub inter_pr_share: f64,
    pub log10_1p_d_ext: f64,
    /// Share of member contributors active in at least two communities.
    pub cross_share_k2: f64,
}

impl CovariateRow {
    pub fn values(&self) -> [f64; 6] {
        [
            f64::from(self.birth_year),
            self.log10_repos,
            self.log10_contributors,
            self.inter_pr_share,
            self.log10_1p_d_ext,
            self.cross_share_k2,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateTable {
    pub rows: BTreeMap<usize, CovariateRow>,
}

impl CovariateTable {
    /// One covariate as a community-keyed map, for stratification.
    pub fn column(&self, name: &str) -> Option<BTreeMap<usize, f64>> {
        let i = COVARIATE_NAMES.iter().position(|&n| n == name)?;
        Some(self.rows.iter().map(|(&c, r)| (c, r.values()[i])).collect())
    }
}

/// End-of-window covariates for every community with at least one
/// repository and one contributor.
pub fn assemble_covariates(
    summaries: &[CommunitySummary],
    profile: &BreadthProfile,
    partition: &Partition,
    graph: &BipartiteGraph,
) -> Result<CovariateTable, SurvivalError> {
    let by_id: BTreeMap<usize, &CommunitySummary> = summaries.iter().map(|s| (s.community_id, s)).collect();
    let mut members: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (u, login) in graph.contributors.iter().enumerate() {
        let k = *profile
            .per_contributor_k
            .get(login)
            .ok_or_else(|| SurvivalError::Coverage(format!("contributor '{login}' has no breadth")))?;
        let e = members.entry(partition.of_contributor(u)).or_default();
        e.0 += 1;
        e.1 += usize::from(k >= 2);
    }
    let mut rows = BTreeMap::new();
    for c in 0..partition.n_communities() {
        let s = by_id.get(&c).ok_or_else(|| SurvivalError::Coverage(format!("community {c} has no summary")))?;
        if s.n_repos == 0 || s.n_contributors == 0 {
            continue;
        }
        let birth_year =
            s.birth_year.ok_or_else(|| SurvivalError::Coverage(format!("community {c} has no birth year")))?;
        let (n_members, n_cross) = members.get(&c).copied().unwrap_or((0, 0));
        rows.insert(
            c,
            CovariateRow {
                community_id: c,
                birth_year,
                log10_repos: (s.n_repos as f64).log10(),
                log10_contributors: (s.n_contributors as f64).log10(),
                inter_pr_share: s.inter_pr_share.unwrap_or(0.0),
                log10_1p_d_ext: (1.0 + s.d_ext as f64).log10(),
                cross_share_k2: if n_members == 0 { 0.0 } else { n_cross as f64 / n_members as f64 },
            },
        );
    }
    Ok(CovariateTable { rows })
}

/// Cox model of residualisation on the six community covariates.
pub fn cox_fit(records: &[SurvivalRecord], covariates: &CovariateTable, ties: Ties) -> Result<CoxFit, SurvivalError> {
    let mut obs = Vec::with_capacity(records.len());
    let mut x = Vec::with_capacity(records.len());
    for r in records {
        let row = covariates
            .rows
            .get(&r.community_id)
            .ok_or_else(|| SurvivalError::Coverage(format!("community {} has no covariates", r.community_id)))?;
        obs.push(r.obs());
        x.push(row.values().to_vec());
    }
    let names: Vec<String> = COVARIATE_NAMES.iter().map(|s| s.to_string()).collect();
    cox_fit_matrix(&obs, &x, &names, ties)
}
