//! Flat CSV rows and JSON documents for each stage's report files.

use super::report::ReportBundle;
use super::run::{BreadthOutput, CommunitiesOutput, FrictionOutput, IngestOutput, SurvivalOutput, TemporalOutput};
use super::PipelineError;
use crate::friction::{Outcome, Stratum};
use crate::stats::IntervalEstimate;
use serde::Serialize;
use serde_json::json;

fn out_err<E: std::fmt::Display>(name: &str) -> impl Fn(E) -> PipelineError + '_ {
    move |e| PipelineError::Output(format!("{name}: {e}"))
}

fn lo(ci: &Option<IntervalEstimate>) -> Option<f64> {
    ci.as_ref().map(|c| c.lo)
}

fn hi(ci: &Option<IntervalEstimate>) -> Option<f64> {
    ci.as_ref().map(|c| c.hi)
}

fn point(ci: &Option<IntervalEstimate>) -> Option<f64> {
    ci.as_ref().map(|c| c.point)
}

#[derive(Serialize)]
struct CanonicalRow<'a> {
    repo_id: &'a str,
    login: &'a str,
    class: &'static str,
    timestamp: String,
}

pub(super) fn ingest(b: &mut ReportBundle, ing: &IngestOutput, emit_canonical: bool) -> Result<(), PipelineError> {
    b.add_json(
        "ingest_census.json",
        &json!({
            "census": ing.census,
            "distinct_identities": ing.census.distinct_identities(),
            "sources": ing.sources,
            "outside_window": ing.outside_window,
            "human_records": {
                "commits": ing.streams.commits.len(),
                "pull_requests": ing.streams.pull_requests.len(),
                "reviews": ing.streams.reviews.len(),
                "issues": ing.streams.issues.len(),
            },
        }),
    )?;
    if emit_canonical {
        let s = &ing.streams;
        let commits: Vec<_> = s
            .commits
            .iter()
            .map(|c| CanonicalRow {
                repo_id: &c.record.repo_id,
                login: &c.actor.login,
                class: c.actor.class.as_str(),
                timestamp: c.record.timestamp.to_rfc3339(),
            })
            .collect();
        b.add_csv("canonical_commits.csv", &commits)?;
        let prs: Vec<_> = s
            .pull_requests
            .iter()
            .map(|p| {
                json_row(&[
                    json!(p.record.repo_id),
                    json!(p.record.pr_number),
                    json!(p.actor.login),
                    json!(p.record.created_at.to_rfc3339()),
                    json!(p.record.closed_at.map(|t| t.to_rfc3339())),
                    json!(p.record.merged_at.map(|t| t.to_rfc3339())),
                ])
            })
            .collect();
        add_rows(b, "canonical_pull_requests.csv", &["repo_id", "pr_number", "login", "created_at", "closed_at", "merged_at"], &prs)?;
        let issues: Vec<_> = s
            .issues
            .iter()
            .map(|i| {
                json_row(&[
                    json!(i.record.repo_id),
                    json!(i.record.issue_number),
                    json!(i.actor.login),
                    json!(i.record.created_at.to_rfc3339()),
                    json!(i.record.comment_count),
                ])
            })
            .collect();
        add_rows(b, "canonical_issues.csv", &["repo_id", "issue_number", "login", "created_at", "comment_count"], &issues)?;
    }
    Ok(())
}

fn json_row(cells: &[serde_json::Value]) -> Vec<String> {
    cells
        .iter()
        .map(|v| match v {
            serde_json::Value::Null => String::new(),
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        })
        .collect()
}

fn add_rows(b: &mut ReportBundle, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(out_err(name))?;
    for r in rows {
        w.write_record(r).map_err(out_err(name))?;
    }
    let bytes = w.into_inner().map_err(out_err(name))?;
    b.add(name, bytes);
    Ok(())
}

pub(super) fn communities(b: &mut ReportBundle, c: &CommunitiesOutput) -> Result<(), PipelineError> {
    let mut edges = Vec::new();
    c.graph.write_edge_list(&mut edges).map_err(out_err("edges.csv"))?;
    b.add("edges.csv", edges);
    let mut part = Vec::new();
    c.partition.write_csv(&c.graph, &mut part).map_err(out_err("partition.csv"))?;
    b.add("partition.csv", part);
    b.add_csv("communities.csv", &c.summaries)?;
    b.add_json(
        "size_scaling.json",
        &json!({
            "model": "log10 n_contributors = a + beta log10 n_repos",
            "fit": c.size_scaling,
            "modularity": c.partition.modularity,
            "pass_modularity": c.partition.pass_modularity,
            "resolution": c.partition.resolution,
            "winning_seed": c.partition.seed,
            "n_communities": c.partition.n_communities(),
            "projection_agreement": c.projection,
        }),
    )
}

#[derive(Serialize)]
struct PmfRow {
    k: usize,
    count: u64,
    pmf: f64,
    ccdf: f64,
}

#[derive(Serialize)]
struct ScanRow {
    k_candidate: usize,
    eligible: bool,
    body_ssr: Option<f64>,
    tail_ssr: Option<f64>,
    total_ssr: Option<f64>,
}

#[derive(Serialize)]
struct SplitRow<'a> {
    login: &'a str,
    home_community: usize,
    k: usize,
    n_intra: u64,
    n_inter: u64,
    inter_share: f64,
    first_year: i32,
}

pub(super) fn breadth(b: &mut ReportBundle, o: &BreadthOutput) -> Result<(), PipelineError> {
    let p = &o.profile;
    let pmf: Vec<_> = p
        .counts
        .iter()
        .map(|(&k, &count)| PmfRow { k, count, pmf: p.pmf[&k], ccdf: p.ccdf_at(k) })
        .collect();
    b.add_csv("breadth_pmf.csv", &pmf)?;
    let scan: Vec<_> = o
        .regime
        .iter()
        .flat_map(|r| &r.ssr_scan)
        .map(|s| ScanRow {
            k_candidate: s.k_candidate,
            eligible: s.eligible,
            body_ssr: s.body_ssr,
            tail_ssr: s.tail_ssr,
            total_ssr: s.total_ssr,
        })
        .collect();
    b.add_csv("ssr_scan.csv", &scan)?;
    b.add_csv("carrier_layer.csv", &o.carriers)?;
    let split: Vec<_> = o
        .split
        .per_contributor
        .iter()
        .map(|(login, e)| SplitRow {
            login,
            home_community: e.home_community,
            k: e.k,
            n_intra: e.n_intra,
            n_inter: e.n_inter,
            inter_share: e.inter_share(),
            first_year: e.first_year,
        })
        .collect();
    b.add_csv("commit_split.csv", &split)?;
    b.add_json(
        "breadth_fit.json",
        &json!({
            "n_contributors": p.n_total,
            "ccdf_logbinned": p.ccdf_logbinned,
            "regime": o.regime.as_ref().map(|r| json!({
                "k_star": r.k_star,
                "body_slope": r.body_slope,
                "tail_slope": r.tail_slope,
                "body_ssr": r.body_ssr,
                "tail_ssr": r.tail_ssr,
                "relative_gap": r.relative_gap,
                "distinct": r.distinct,
                "log_base": "10",
            })),
            "n_carriers": o.carriers.len(),
            "powerlaw": o.powerlaw,
            "density": o.kde.as_ref().map(|k| json!({
                "pilot_bandwidth": k.pilot_bandwidth,
                "modes": k.local_maxima().into_iter().map(|i| k.grid[i]).collect::<Vec<_>>(),
            })),
            "commit_split": o.split_analysis,
        }),
    )
}

#[derive(Serialize)]
struct InflectionRow {
    year: i32,
    total_commits: u64,
    raw: Option<f64>,
    smoothed: Option<f64>,
}

pub(super) fn temporal(b: &mut ReportBundle, o: &TemporalOutput) -> Result<(), PipelineError> {
    let m = &o.matrix;
    let years: Vec<i32> = m.years().collect();
    let mut header = vec!["community".to_string(), "birth_year".to_string()];
    header.extend(years.iter().map(|y| y.to_string()));
    let rows: Vec<Vec<String>> = m
        .counts
        .keys()
        .map(|&c| {
            let mut r = vec![c.to_string(), m.births[&c].to_string()];
            r.extend(years.iter().map(|&y| m.get(c, y).to_string()));
            r
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    add_rows(b, "annual_matrix.csv", &header, &rows)?;
    let totals = m.totals();
    let infl: Vec<_> = match &o.inflection {
        Some(s) => s
            .years
            .iter()
            .enumerate()
            .map(|(i, &y)| InflectionRow {
                year: y,
                total_commits: totals.get(&y).copied().unwrap_or(0),
                raw: s.raw[i],
                smoothed: s.smoothed[i],
            })
            .collect(),
        None => Vec::new(),
    };
    b.add_csv("inflection.csv", &infl)?;
    let births = m.cumulative_births();
    b.add_json(
        "logistic_fit.json",
        &json!({
            "model": "N(t) = K / (1 + exp(-r (t - t0)))",
            "fit": o.logistic,
            "observed": births,
            "fitted": births.keys().map(|&y| (y.to_string(), json!(o.logistic.params.eval(f64::from(y))))).collect::<serde_json::Map<_, _>>(),
        }),
    )?;
    b.add_csv("kaya.csv", &o.kaya.per_year)?;
    b.add_json(
        "kaya_regimes.json",
        &json!({
            "split_year": o.kaya.split_year,
            "pre": o.kaya.pre,
            "post": o.kaya.post,
            "activity_threshold": o.kaya.activity_threshold,
            "log_base": o.kaya.log_base,
        }),
    )
}

#[derive(Serialize)]
struct KmRow<'a> {
    stratum: &'a str,
    time: f64,
    survival: f64,
    at_risk: usize,
    events: usize,
}

#[derive(Serialize)]
struct CovariateOut {
    community_id: usize,
    birth_year: i32,
    log10_repos: f64,
    log10_contributors: f64,
    inter_pr_share: f64,
    log10_1p_d_ext: f64,
    cross_share_k2: f64,
    stratum: Option<String>,
}

pub(super) fn survival(b: &mut ReportBundle, o: &SurvivalOutput) -> Result<(), PipelineError> {
    let all: Vec<_> = o.sensitivity.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
    b.add_csv("survival_records.csv", &all)?;
    b.add_csv("cohort_hazard.csv", &o.hazards)?;
    let km: Vec<_> = std::iter::once(&o.km_all)
        .chain(&o.km_strata)
        .flat_map(|c| {
            (0..c.times.len()).map(move |i| KmRow {
                stratum: &c.label,
                time: c.times[i],
                survival: c.survival[i],
                at_risk: c.at_risk[i],
                events: c.events[i],
            })
        })
        .collect();
    b.add_csv("km_curves.csv", &km)?;
    if let Some(cov) = &o.covariates {
        let rows: Vec<_> = cov
            .rows
            .values()
            .map(|r| CovariateOut {
                community_id: r.community_id,
                birth_year: r.birth_year,
                log10_repos: r.log10_repos,
                log10_contributors: r.log10_contributors,
                inter_pr_share: r.inter_pr_share,
                log10_1p_d_ext: r.log10_1p_d_ext,
                cross_share_k2: r.cross_share_k2,
                stratum: o.strata.as_ref().and_then(|s| s.assignment.get(&r.community_id).cloned()),
            })
            .collect();
        b.add_csv("survival_covariates.csv", &rows)?;
    }
    b.add_json(
        "logrank.json",
        &json!({
            "stratified_by": "inter_pr_share tertiles",
            "labels": o.strata.as_ref().map(|s| &s.labels),
            "test": o.logrank,
        }),
    )?;
    b.add_json("cox_fit.json", &json!({ "y_end": o.y_end, "fit": o.cox }))
}

#[derive(Serialize)]
struct AcceptanceRow {
    stratum: Stratum,
    merged: u64,
    rejected: u64,
    acceptance: Option<f64>,
    ci_lo: Option<f64>,
    ci_hi: Option<f64>,
    gap_pp: Option<f64>,
    chi2: Option<f64>,
    p_value: Option<f64>,
}

#[derive(Serialize)]
struct LatencyRow {
    stratum: Stratum,
    outcome: Outcome,
    n: usize,
    median_hours: Option<f64>,
    q1_hours: Option<f64>,
    q3_hours: Option<f64>,
    median_ratio_inter_intra: Option<f64>,
    mann_whitney_u: Option<f64>,
    p_value: Option<f64>,
}

#[derive(Serialize)]
struct ReviewRow {
    stratum: Stratum,
    n: u64,
    with_changes_requested: u64,
    share: Option<f64>,
    fisher_odds_ratio: Option<f64>,
    fisher_p_value: Option<f64>,
}

#[derive(Serialize)]
struct IssueRow {
    stratum: Stratum,
    n: usize,
    median_comments: Option<f64>,
    mean_comments: Option<f64>,
    mann_whitney_u: Option<f64>,
    p_value: Option<f64>,
}

#[derive(Serialize)]
struct RetentionRow {
    stratum: Stratum,
    window_days: i64,
    n: u64,
    retained: u64,
    rate: Option<f64>,
    ci_lo: Option<f64>,
    ci_hi: Option<f64>,
}

#[derive(Serialize)]
struct ByKRow {
    k_bin: String,
    stratum: Stratum,
    n: u64,
    merged: u64,
    acceptance: Option<f64>,
    ci_lo: Option<f64>,
    ci_hi: Option<f64>,
    median_hours: Option<f64>,
    q1_hours: Option<f64>,
    q3_hours: Option<f64>,
}

#[derive(Serialize)]
struct ConcentrationRow {
    top_n: usize,
    share: f64,
}

pub(super) fn friction(b: &mut ReportBundle, o: &FrictionOutput) -> Result<(), PipelineError> {
    let a = &o.acceptance;
    let acc: Vec<_> = [&a.intra, &a.inter]
        .into_iter()
        .map(|s| AcceptanceRow {
            stratum: s.stratum,
            merged: s.merged,
            rejected: s.rejected,
            acceptance: point(&s.acceptance),
            ci_lo: lo(&s.acceptance),
            ci_hi: hi(&s.acceptance),
            gap_pp: a.gap_pp,
            chi2: a.test.map(|t| t.statistic),
            p_value: a.test.map(|t| t.p_value),
        })
        .collect();
    b.add_csv("friction_acceptance.csv", &acc)?;
    let lat: Vec<_> = o
        .latency
        .cells
        .iter()
        .map(|c| {
            let cmp = o.latency.comparisons.iter().find(|x| x.outcome == c.outcome);
            LatencyRow {
                stratum: c.stratum,
                outcome: c.outcome,
                n: c.n,
                median_hours: c.median_hours,
                q1_hours: c.q1_hours,
                q3_hours: c.q3_hours,
                median_ratio_inter_intra: cmp.and_then(|x| x.median_ratio),
                mann_whitney_u: cmp.and_then(|x| x.mann_whitney).map(|m| m.u),
                p_value: cmp.and_then(|x| x.mann_whitney).map(|m| m.p_value),
            }
        })
        .collect();
    b.add_csv("friction_latency.csv", &lat)?;
    let rm = &o.review_mix;
    let mix: Vec<_> = [&rm.intra, &rm.inter]
        .into_iter()
        .map(|c| ReviewRow {
            stratum: c.stratum,
            n: c.n,
            with_changes_requested: c.with_changes_requested,
            share: c.share,
            fisher_odds_ratio: rm.fisher.and_then(|f| f.odds_ratio),
            fisher_p_value: rm.fisher.map(|f| f.p_value),
        })
        .collect();
    b.add_csv("friction_review_mix.csv", &mix)?;
    let iss = &o.issues;
    let issues: Vec<_> = [&iss.intra, &iss.inter]
        .into_iter()
        .map(|c| IssueRow {
            stratum: c.stratum,
            n: c.n,
            median_comments: c.median_comments,
            mean_comments: c.mean_comments,
            mann_whitney_u: iss.mann_whitney.map(|m| m.u),
            p_value: iss.mann_whitney.map(|m| m.p_value),
        })
        .collect();
    b.add_csv("friction_issues.csv", &issues)?;
    let ret = &o.retention;
    let retention: Vec<_> = [&ret.intra, &ret.inter]
        .into_iter()
        .map(|c| RetentionRow {
            stratum: c.stratum,
            window_days: ret.window_days,
            n: c.n,
            retained: c.retained,
            rate: point(&c.rate),
            ci_lo: lo(&c.rate),
            ci_hi: hi(&c.rate),
        })
        .collect();
    b.add_csv("friction_retention.csv", &retention)?;
    let by_k: Vec<_> = o
        .by_k
        .iter()
        .map(|c| ByKRow {
            k_bin: c.bin.label(),
            stratum: c.stratum,
            n: c.n,
            merged: c.merged,
            acceptance: point(&c.acceptance),
            ci_lo: lo(&c.acceptance),
            ci_hi: hi(&c.acceptance),
            median_hours: c.median_hours,
            q1_hours: c.q1_hours,
            q3_hours: c.q3_hours,
        })
        .collect();
    b.add_csv("friction_by_k.csv", &by_k)?;
    let conc: Vec<_> = o
        .concentration
        .iter()
        .flat_map(|c| c.top_shares.iter().map(|&(top_n, share)| ConcentrationRow { top_n, share }))
        .collect();
    b.add_csv("concentration.csv", &conc)?;
    b.add_json(
        "friction_regression.json",
        &json!({
            "model": "ln(turnaround hours) on sequence index with author-repository fixed effects",
            "regression": o.regression,
            "concentration": o.concentration,
            "review_mix_diagnostics": o.review_mix.diagnostics,
            "issues_excluded": o.issues.excluded,
            "retention_excluded_late": o.retention.excluded_late,
        }),
    )?;
    b.add_json("pr_census.json", &o.census)
}
