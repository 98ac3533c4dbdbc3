use super::export;
use super::report::{ReportBundle, StageEntry, StageStatus};
use super::{derive_seed, PipelineConfig, PipelineError, Stage};
use crate::bigraph::{
    build_bipartite, community_summaries, louvain_detect_best, projection_diagnostic, size_scaling_fit, Agreement,
    BipartiteGraph, CommunitySummary, Partition,
};
use crate::breadth::{
    abramson_kde, breakpoint_scan_fit, carrier_layer, commit_split, commit_split_analysis, compute_breadth_profile,
    discrete_powerlaw_mle, BreadthProfile, Carrier, CommitSplit, Kde, PowerLawFit, RegimeFit, SplitAnalysis,
};
use crate::friction::{
    acceptance_table, build_pr_records, concentration_and_rank, friction_by_k, issue_depth_table, latency_table,
    retention_table, review_mix_table, turnaround_sequence_regression, AcceptanceTable, Concentration,
    IssueDepthTable, KBinCell, LatencyTable, PrCensus, PrDepthRecord, RetentionTable, ReviewMixTable,
    SequenceRegression,
};
use crate::ingest::{
    build_identity_map, canonicalize_actors, dedup_issues, dedup_pull_requests, parse_events, CanonicalStreams,
    Census, Event, EventFormat, EventRecord, IdentityRules, ObservationWindow,
};
use crate::stats::OlsFit;
use crate::survival::{
    assemble_covariates, cohort_hazard, cox_fit, km_curve, km_estimate, logrank_test, residual_phase_sensitivity,
    tertile_strata, CohortHazard, CovariateTable, CoxFit, KmCurve, LogRank, Strata, SurvivalRecord,
};
use crate::temporal::{
    annual_matrix, fit_logistic_births, inflection_scores, kaya_decompose, AnnualMatrix, InflectionScores,
    KayaDecomposition, LogisticFit,
};
use serde::Serialize;
use serde_json::json;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SourceSummary {
    pub stream: String,
    pub path: String,
    pub sha256: String,
    pub records: usize,
    pub skipped: usize,
    pub ignored: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutput {
    /// Human-only canonical streams.
    pub streams: CanonicalStreams,
    pub census: Census,
    pub sources: Vec<SourceSummary>,
    pub outside_window: usize,
    pub window: ObservationWindow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommunitiesOutput {
    pub graph: BipartiteGraph,
    pub partition: Partition,
    pub repo_community: BTreeMap<String, usize>,
    pub home: BTreeMap<String, usize>,
    pub summaries: Vec<CommunitySummary>,
    pub size_scaling: Option<OlsFit>,
    pub projection: Option<Agreement>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreadthOutput {
    pub profile: BreadthProfile,
    pub regime: Option<RegimeFit>,
    pub carriers: Vec<Carrier>,
    pub powerlaw: Option<PowerLawFit>,
    pub kde: Option<Kde>,
    pub split: CommitSplit,
    pub split_analysis: SplitAnalysis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalOutput {
    pub matrix: AnnualMatrix,
    pub inflection: Option<InflectionScores>,
    pub logistic: LogisticFit,
    pub kaya: KayaDecomposition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalOutput {
    pub y_end: i32,
    /// Records at the primary residual fraction.
    pub records: Vec<SurvivalRecord>,
    pub sensitivity: Vec<(f64, Vec<SurvivalRecord>)>,
    pub hazards: Vec<CohortHazard>,
    pub km_all: KmCurve,
    pub covariates: Option<CovariateTable>,
    pub strata: Option<Strata>,
    pub km_strata: Vec<KmCurve>,
    pub logrank: Option<LogRank>,
    pub cox: Option<CoxFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrictionOutput {
    pub census: PrCensus,
    pub records: Vec<PrDepthRecord>,
    pub acceptance: AcceptanceTable,
    pub latency: LatencyTable,
    pub review_mix: ReviewMixTable,
    pub issues: IssueDepthTable,
    pub retention: RetentionTable,
    pub concentration: Option<Concentration>,
    pub by_k: Vec<KBinCell>,
    pub regression: Option<SequenceRegression>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PipelineResults {
    pub ingest: Option<IngestOutput>,
    pub communities: Option<CommunitiesOutput>,
    pub breadth: Option<BreadthOutput>,
    pub temporal: Option<TemporalOutput>,
    pub survival: Option<SurvivalOutput>,
    pub friction: Option<FrictionOutput>,
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<(PipelineResults, ReportBundle), PipelineError> {
    run_pipeline_until(cfg, Stage::Friction)
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    bundle: ReportBundle,
    diagnostics: Vec<String>,
}

impl Runner<'_> {
    fn note<T, E: std::fmt::Display>(&mut self, what: &str, r: Result<T, E>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.diagnostics.push(format!("{what}: {e}"));
                None
            }
        }
    }

    fn finish(&mut self, stage: Stage) {
        self.bundle.stages.push(StageEntry {
            stage: stage.as_str().into(),
            status: StageStatus::Completed,
            diagnostics: std::mem::take(&mut self.diagnostics),
        });
    }

    fn skip(&mut self, stage: Stage, reason: &str) {
        self.bundle.stages.push(StageEntry {
            stage: stage.as_str().into(),
            status: StageStatus::Skipped { reason: reason.into() },
            diagnostics: std::mem::take(&mut self.diagnostics),
        });
    }

    fn fail(mut self, stage: Stage, message: String) -> PipelineError {
        self.bundle.stages.push(StageEntry {
            stage: stage.as_str().into(),
            status: StageStatus::Failed { error: message.clone() },
            diagnostics: std::mem::take(&mut self.diagnostics),
        });
        PipelineError::Stage { stage: stage.as_str().into(), message, partial: Box::new(self.bundle) }
    }
}

/// Runs stages in order up to and including `last`; later stages are
/// recorded as skipped. A failing stage aborts the run and carries the
/// partial bundle of the completed stages.
pub fn run_pipeline_until(cfg: &PipelineConfig, last: Stage) -> Result<(PipelineResults, ReportBundle), PipelineError> {
    cfg.validate()?;
    let window = cfg.observation_window()?;
    let mut r = Runner { cfg, bundle: ReportBundle::default(), diagnostics: Vec::new() };
    let mut res = PipelineResults::default();
    let seeds = Seeds::new(cfg);

    let ingest = stage_ingest(&mut r, window)?;
    r.bundle.metadata = metadata(cfg, &seeds, &ingest.sources);
    export::ingest(&mut r.bundle, &ingest, cfg.emit_canonical)?;
    r.finish(Stage::Ingest);
    res.ingest = Some(ingest);

    macro_rules! stage {
        ($stage:expr, $run:expr) => {{
            if $stage > last {
                r.skip($stage, "not requested");
                None
            } else {
                match $run {
                    Ok(v) => {
                        r.finish($stage);
                        Some(v)
                    }
                    Err(msg) => return Err(r.fail($stage, msg)),
                }
            }
        }};
    }

    let ing = res.ingest.as_ref().expect("ingest ran");
    res.communities = stage!(Stage::Communities, stage_communities(&mut r, ing, &seeds));
    let Some(comm) = res.communities.as_ref() else {
        skip_rest(&mut r, Stage::Breadth);
        return Ok((res, r.bundle));
    };
    res.breadth = stage!(Stage::Breadth, stage_breadth(&mut r, ing, comm, &seeds));
    let Some(br) = res.breadth.as_ref() else {
        skip_rest(&mut r, Stage::Temporal);
        return Ok((res, r.bundle));
    };
    res.temporal = stage!(Stage::Temporal, stage_temporal(&mut r, ing, comm));
    let Some(tmp) = res.temporal.as_ref() else {
        skip_rest(&mut r, Stage::Survival);
        return Ok((res, r.bundle));
    };
    res.survival = stage!(Stage::Survival, stage_survival(&mut r, ing, comm, br, tmp));
    if Stage::Friction > last {
        r.skip(Stage::Friction, "not requested");
    } else if ing.streams.pull_requests.is_empty() {
        r.skip(Stage::Friction, "no pull request stream");
    } else {
        res.friction = stage!(Stage::Friction, stage_friction(&mut r, ing, comm, br));
    }
    Ok((res, r.bundle))
}

fn skip_rest(r: &mut Runner, from: Stage) {
    for s in Stage::ALL.into_iter().filter(|s| *s >= from) {
        r.skip(s, "not requested");
    }
}

struct Seeds {
    louvain: Vec<u64>,
    projection: u64,
    bootstrap: u64,
}

impl Seeds {
    fn new(cfg: &PipelineConfig) -> Self {
        Seeds {
            louvain: (0..cfg.louvain_restarts).map(|i| derive_seed(cfg.seed, &format!("louvain/{i}"))).collect(),
            projection: derive_seed(cfg.seed, "projection"),
            bootstrap: derive_seed(cfg.seed, "bootstrap/powerlaw"),
        }
    }
}

fn metadata(cfg: &PipelineConfig, seeds: &Seeds, sources: &[SourceSummary]) -> serde_json::Value {
    // The destination is not an analysis parameter; the same analysis written
    // elsewhere stays byte-identical.
    let mut config = json!(cfg);
    if let Some(m) = config.as_object_mut() {
        m.remove("out");
    }
    json!({
        "tool": "ecoscope",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "seeds": {
            "master": cfg.seed,
            "louvain": seeds.louvain,
            "projection": seeds.projection,
            "bootstrap": seeds.bootstrap,
        },
        "inputs": sources,
        "conventions": {
            "density_denominator": "contributors x repositories within a community",
            "ratio_rescaling": "min-max across communities; constant ratios map to 0",
            "home_community": "modal community by commits; ties to the community of the earliest commit, then smallest id",
            "kaya_log_base": "e",
            "turnaround_log_base": "e",
            "turnaround_floor_hours": 1.0 / 3600.0,
            "residual_comparison": "activity >= fraction * mean activity is non-residual",
            "tertiles": "pooled over events and censored; ties to the lower stratum",
            "cox_ties": cfg.ties,
            "retention_days": cfg.retention_days,
            "inter_pr_share_missing": 0.0,
        },
    })
}

fn read_source(
    path: &Path,
    format: EventFormat,
    stream: &str,
) -> Result<(Vec<EventRecord>, SourceSummary), PipelineError> {
    let bytes = std::fs::read(path).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
    let out = parse_events(bytes.as_slice(), format)
        .map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))?;
    let summary = SourceSummary {
        stream: stream.into(),
        path: path.display().to_string(),
        sha256: super::sha256_hex(&bytes),
        records: out.records.len(),
        skipped: out.skipped,
        ignored: out.ignored,
    };
    Ok((out.records, summary))
}

fn stage_ingest(r: &mut Runner, window: ObservationWindow) -> Result<IngestOutput, PipelineError> {
    let i = &r.cfg.inputs;
    let mut jobs: Vec<(&Path, EventFormat, &str)> = Vec::new();
    for (p, f, s) in [
        (&i.commits, EventFormat::CommitCsv, "commits"),
        (&i.pull_requests, EventFormat::PrCsv, "pull_requests"),
        (&i.reviews, EventFormat::ReviewCsv, "reviews"),
        (&i.issues, EventFormat::IssueCsv, "issues"),
    ] {
        if let Some(p) = p {
            jobs.push((p.as_path(), f, s));
        }
    }
    jobs.extend(i.archive.iter().map(|p| (p.as_path(), EventFormat::GharchiveJsonl, "archive")));
    let parsed: Vec<_> = {
        use rayon::prelude::*;
        jobs.par_iter().map(|(p, f, s)| read_source(p, *f, s)).collect::<Result<Vec<_>, _>>()?
    };
    let mut all = Vec::new();
    let mut sources = Vec::new();
    for (records, summary) in parsed {
        all.extend(records);
        sources.push(summary);
    }
    let before = all.len();
    let all = window.filter(all);
    let outside_window = before - all.len();
    let map = build_identity_map(&all);
    let (mut commits, mut prs, mut reviews, mut issues) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rec in all {
        match rec.event {
            Event::Commit(_) => commits.push(rec),
            Event::PullRequest(p) => prs.push(p),
            Event::Review(_) => reviews.push(rec),
            Event::Issue(i) => issues.push(i),
        }
    }
    let mut records = commits;
    records.extend(dedup_pull_requests(prs).into_iter().map(|p| EventRecord::new(Event::PullRequest(p))));
    records.extend(reviews);
    records.extend(dedup_issues(issues).into_iter().map(|i| EventRecord::new(Event::Issue(i))));
    let rules = IdentityRules::new(r.cfg.bots.iter().map(String::as_str), r.cfg.placeholders.iter().map(String::as_str));
    let (streams, census) = canonicalize_actors(&records, &map, &rules);
    if map.is_empty() && streams.commits.iter().any(|c| c.record.raw_author.bytes().all(|b| b.is_ascii_digit())) {
        r.diagnostics.push("numeric author tokens present but no archive id map was supplied".into());
    }
    Ok(IngestOutput { streams: streams.humans_only(), census, sources, outside_window, window })
}

fn stage_communities(r: &mut Runner, ing: &IngestOutput, seeds: &Seeds) -> Result<CommunitiesOutput, String> {
    let commits = &ing.streams.commits;
    let graph = build_bipartite(commits);
    let partition = louvain_detect_best(&graph, r.cfg.resolution, &seeds.louvain).map_err(|e| e.to_string())?;
    let repo_community = partition.repo_map(&graph);
    let home = crate::friction::home_community_assignment(commits, &repo_community).map_err(|e| e.to_string())?;
    let summaries = community_summaries(&graph, &partition, &ing.streams.pull_requests, &home);
    let size_scaling = r.note("size scaling fit", size_scaling_fit(&summaries));
    let projection = if r.cfg.projection_diagnostic {
        let a = projection_diagnostic(&graph, &partition, seeds.projection, r.cfg.top_purity, r.cfg.top_jaccard);
        r.note("projection diagnostic", a)
    } else {
        None
    };
    let out = CommunitiesOutput { graph, partition, repo_community, home, summaries, size_scaling, projection };
    export::communities(&mut r.bundle, &out).map_err(|e| e.to_string())?;
    Ok(out)
}

fn stage_breadth(
    r: &mut Runner,
    ing: &IngestOutput,
    comm: &CommunitiesOutput,
    seeds: &Seeds,
) -> Result<BreadthOutput, String> {
    let commits = &ing.streams.commits;
    let profile = compute_breadth_profile(commits, &comm.repo_community).map_err(|e| e.to_string())?;
    let regime = r.note(
        "breakpoint scan",
        breakpoint_scan_fit(&profile, r.cfg.breakpoint_min..=r.cfg.breakpoint_max, r.cfg.distinctness),
    );
    let carriers = regime.as_ref().map(|f| carrier_layer(&profile, f.k_star)).unwrap_or_default();
    let ks: Vec<u64> = profile.ks().into_iter().map(|k| k as u64).collect();
    let powerlaw = r.note(
        "power-law fit",
        discrete_powerlaw_mle(&ks, r.cfg.powerlaw_k_min, r.cfg.bootstrap_replicates, seeds.bootstrap),
    );
    let kde = r.note("breadth density", abramson_kde(&ks.iter().map(|&k| k as f64).collect::<Vec<_>>()));
    let split = commit_split(commits, &comm.repo_community).map_err(|e| e.to_string())?;
    let split_analysis = commit_split_analysis(&split, &carriers);
    r.diagnostics.extend(split_analysis.diagnostics.iter().map(|d| format!("commit split: {d}")));
    let out = BreadthOutput { profile, regime, carriers, powerlaw, kde, split, split_analysis };
    export::breadth(&mut r.bundle, &out).map_err(|e| e.to_string())?;
    Ok(out)
}

fn stage_temporal(r: &mut Runner, ing: &IngestOutput, comm: &CommunitiesOutput) -> Result<TemporalOutput, String> {
    let matrix = annual_matrix(&ing.streams.commits, &comm.repo_community, &ing.window);
    let inflection = r.note("inflection scores", inflection_scores(&matrix.totals(), r.cfg.inflection_bandwidth));
    let logistic = fit_logistic_births(&matrix.cumulative_births()).map_err(|e| format!("logistic fit: {e}"))?;
    let kaya =
        kaya_decompose(&matrix, logistic.params.t0, r.cfg.activity_threshold).map_err(|e| format!("kaya: {e}"))?;
    let out = TemporalOutput { matrix, inflection, logistic, kaya };
    export::temporal(&mut r.bundle, &out).map_err(|e| e.to_string())?;
    Ok(out)
}

fn stage_survival(
    r: &mut Runner,
    ing: &IngestOutput,
    comm: &CommunitiesOutput,
    br: &BreadthOutput,
    tmp: &TemporalOutput,
) -> Result<SurvivalOutput, String> {
    let y_end = tmp.matrix.last_year;
    let sensitivity =
        residual_phase_sensitivity(&tmp.matrix, &r.cfg.residual_fractions, y_end).map_err(|e| e.to_string())?;
    let records = sensitivity[0].1.clone();
    let hazards = cohort_hazard(&records).map_err(|e| e.to_string())?;
    let obs: Vec<_> = records.iter().map(SurvivalRecord::obs).collect();
    let km_all = km_curve(&obs, "all");
    let mut out = SurvivalOutput {
        y_end,
        records,
        sensitivity,
        hazards,
        km_all,
        covariates: None,
        strata: None,
        km_strata: Vec::new(),
        logrank: None,
        cox: None,
    };
    if ing.streams.pull_requests.is_empty() {
        r.diagnostics.push("covariates, stratified curves, log-rank and Cox skipped: no pull request stream".into());
    } else if let Some(cov) = r.note(
        "covariates",
        assemble_covariates(&comm.summaries, &br.profile, &comm.partition, &comm.graph),
    ) {
        let share = cov.column("inter_pr_share").expect("known covariate");
        let share: BTreeMap<usize, f64> =
            out.records.iter().filter_map(|rec| share.get(&rec.community_id).map(|&v| (rec.community_id, v))).collect();
        if let Some(strata) = r.note("inter-PR-share tertiles", tertile_strata(&share)) {
            out.km_strata = r.note("stratified Kaplan-Meier", km_estimate(&out.records, &strata)).unwrap_or_default();
            out.logrank = r.note("log-rank test", logrank_test(&out.records, &strata));
            out.strata = Some(strata);
        }
        out.cox = r.note("Cox model", cox_fit(&out.records, &cov, r.cfg.ties));
        out.covariates = Some(cov);
    }
    export::survival(&mut r.bundle, &out).map_err(|e| e.to_string())?;
    Ok(out)
}

fn stage_friction(
    r: &mut Runner,
    ing: &IngestOutput,
    comm: &CommunitiesOutput,
    br: &BreadthOutput,
) -> Result<FrictionOutput, String> {
    let s = &ing.streams;
    let (records, census) =
        build_pr_records(&s.pull_requests, &s.reviews, &comm.home, &comm.repo_community, &br.profile.per_contributor_k);
    let review_mix = review_mix_table(&records);
    r.diagnostics.extend(review_mix.diagnostics.iter().map(|d| format!("review mix: {d}")));
    let concentration = r.note("concentration", concentration_and_rank(&records, &br.profile));
    let regression = r.note("sequence regression", turnaround_sequence_regression(&records));
    let out = FrictionOutput {
        acceptance: acceptance_table(&records),
        latency: latency_table(&records),
        review_mix,
        issues: issue_depth_table(&s.issues, &comm.home, &comm.repo_community),
        retention: retention_table(&records, &s.commits, &comm.repo_community, ing.window.end, r.cfg.retention_days),
        concentration,
        by_k: friction_by_k(&records, &r.cfg.k_bins),
        regression,
        census,
        records,
    };
    export::friction(&mut r.bundle, &out).map_err(|e| e.to_string())?;
    Ok(out)
}
