//! Planted-truth synthetic ecosystems in the ingest formats.

use super::{derive_seed, InputPaths, PipelineError};
use crate::ingest::ObservationWindow;
use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc};
use rand::distr::weighted::WeightedIndex;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

type Timestamp = DateTime<Utc>;

/// Communities born over a range of years, residualising with a constant
/// annual hazard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    pub first_birth_year: i32,
    pub last_birth_year: i32,
    pub n_communities: usize,
    pub hazard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub window_start: NaiveDate,
    pub window_end: NaiveDate,
    pub cohorts: Vec<CohortSpec>,
    /// Repositories per community are log-uniform on `[repos_min, repos_max]`.
    pub repos_min: usize,
    pub repos_max: usize,
    /// `n_contributors = size_scale * n_repos^size_exponent * exp(N(0, size_noise))`.
    pub size_exponent: f64,
    pub size_scale: f64,
    pub size_noise: f64,
    /// Body breadth PMF `p(k) ~ k^body_slope` for `k < break_k`.
    pub body_slope: f64,
    pub break_k: usize,
    /// One carrier at each of `break_k, break_k + 1, ...`.
    pub n_carriers: usize,
    pub home_repos_per_contributor: usize,
    /// Mean extra commits per home repository edge, on top of one.
    pub home_commit_mean: f64,
    pub n_prs: usize,
    pub inter_pr_share: f64,
    pub acceptance_intra: f64,
    pub acceptance_gap_pp: f64,
    pub merged_median_hours_intra: f64,
    pub rejected_median_hours_intra: f64,
    /// Inter over intra median turnaround, for both outcomes.
    pub latency_ratio: f64,
    pub latency_sigma: f64,
    pub review_share: f64,
    pub changes_requested_intra: f64,
    pub changes_requested_inter: f64,
    pub n_issues: usize,
    pub issue_comments_intra: f64,
    pub issue_comments_inter: f64,
    /// Share of human rows whose author token is the numeric actor id.
    pub numeric_id_share: f64,
    pub n_bot_commits: usize,
    pub n_placeholder_commits: usize,
    pub n_phantom_commits: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        let w = ObservationWindow::default();
        SynthSpec {
            seed: 7,
            window_start: w.start.date_naive(),
            window_end: w.end.date_naive(),
            cohorts: vec![
                CohortSpec { first_birth_year: 2004, last_birth_year: 2008, n_communities: 25, hazard: 0.02 },
                CohortSpec { first_birth_year: 2014, last_birth_year: 2016, n_communities: 25, hazard: 0.19 },
            ],
            repos_min: 10,
            repos_max: 50,
            size_exponent: 1.4,
            size_scale: 2.0,
            size_noise: 0.15,
            body_slope: -3.73,
            break_k: 7,
            n_carriers: 9,
            home_repos_per_contributor: 3,
            home_commit_mean: 4.0,
            n_prs: 10_000,
            inter_pr_share: 0.5,
            acceptance_intra: 0.819,
            acceptance_gap_pp: 20.8,
            merged_median_hours_intra: 19.2,
            rejected_median_hours_intra: 40.6,
            latency_ratio: 2.0,
            latency_sigma: 1.0,
            review_share: 0.27,
            changes_requested_intra: 0.13,
            changes_requested_inter: 0.083,
            n_issues: 3000,
            issue_comments_intra: 2.84,
            issue_comments_inter: 4.08,
            numeric_id_share: 0.8,
            n_bot_commits: 300,
            n_placeholder_commits: 60,
            n_phantom_commits: 60,
        }
    }
}

impl SynthSpec {
    pub fn n_communities(&self) -> usize {
        self.cohorts.iter().map(|c| c.n_communities).sum()
    }

    pub fn acceptance_inter(&self) -> f64 {
        self.acceptance_intra - self.acceptance_gap_pp / 100.0
    }

    pub fn validate(&self) -> Result<ObservationWindow, PipelineError> {
        let mut errs = Vec::new();
        let window = ObservationWindow::from_dates(self.window_start, self.window_end);
        match &window {
            Ok(w) => {
                let (a, b) = w.full_year_range();
                for c in &self.cohorts {
                    if c.first_birth_year > c.last_birth_year || c.first_birth_year < a || c.last_birth_year > b {
                        errs.push(format!(
                            "cohort birth years {}..={} outside the full years {a}..={b}",
                            c.first_birth_year, c.last_birth_year
                        ));
                    }
                }
            }
            Err(e) => errs.push(e.to_string()),
        }
        for c in &self.cohorts {
            if c.n_communities == 0 {
                errs.push("cohort with no communities".into());
            }
            if !(c.hazard > 0.0 && c.hazard < 1.0) {
                errs.push(format!("hazard {} outside (0, 1)", c.hazard));
            }
        }
        if self.repos_min == 0 || self.repos_max < self.repos_min {
            errs.push(format!("repository range {}..={} invalid", self.repos_min, self.repos_max));
        }
        if !(self.size_scale > 0.0 && self.size_exponent > 0.0 && self.size_noise >= 0.0) {
            errs.push("size law parameters must be positive".into());
        }
        if self.break_k < 2 {
            errs.push("break_k must be at least 2".into());
        }
        let k_max = self.break_k + self.n_carriers.saturating_sub(1);
        if k_max > self.n_communities() {
            errs.push(format!("carrier breadth {k_max} exceeds the {} communities", self.n_communities()));
        }
        if self.home_repos_per_contributor == 0 {
            errs.push("home_repos_per_contributor must be at least 1".into());
        }
        for (name, p) in [
            ("inter_pr_share", self.inter_pr_share),
            ("acceptance_intra", self.acceptance_intra),
            ("acceptance_inter", self.acceptance_inter()),
            ("review_share", self.review_share),
            ("changes_requested_intra", self.changes_requested_intra),
            ("changes_requested_inter", self.changes_requested_inter),
            ("numeric_id_share", self.numeric_id_share),
        ] {
            if !(0.0..=1.0).contains(&p) {
                errs.push(format!("{name} = {p} outside [0, 1]"));
            }
        }
        for (name, v) in [
            ("merged_median_hours_intra", self.merged_median_hours_intra),
            ("rejected_median_hours_intra", self.rejected_median_hours_intra),
            ("latency_ratio", self.latency_ratio),
            ("issue_comments_intra", self.issue_comments_intra),
            ("issue_comments_inter", self.issue_comments_inter),
            ("home_commit_mean", self.home_commit_mean),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be positive"));
            }
        }
        if self.latency_sigma < 0.0 {
            errs.push("latency_sigma must be non-negative".into());
        }
        match (errs.is_empty(), window) {
            (true, Ok(w)) => Ok(w),
            _ => Err(PipelineError::Config(errs)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCommunity {
    pub id: usize,
    pub cohort: usize,
    pub birth_year: i32,
    pub n_repos: usize,
    pub n_contributors: usize,
    /// Years with home activity, counted from the birth year.
    pub active_years: u32,
    pub event: bool,
    pub span: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortTruth {
    pub cohort: usize,
    pub planted_hazard: f64,
    pub n: usize,
    pub events: u64,
    pub total_span: u64,
    pub realized_hazard: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPrs {
    pub intra_total: u64,
    pub intra_merged: u64,
    pub inter_total: u64,
    pub inter_merged: u64,
    pub gap_pp: f64,
}

/// Everything the generator decided, for recovery checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub communities: Vec<PlantedCommunity>,
    pub cohorts: Vec<CohortTruth>,
    pub repo_community: BTreeMap<String, usize>,
    pub homes: BTreeMap<String, usize>,
    pub contributor_k: BTreeMap<String, usize>,
    pub body_k_counts: BTreeMap<usize, u64>,
    /// Logins of the planted carriers, sorted.
    pub carriers: Vec<String>,
    pub prs: PlantedPrs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    /// File name to contents: `commits.csv`, `pull_requests.csv`,
    /// `reviews.csv`, `issues.csv`, `archive.jsonl`.
    pub files: BTreeMap<String, Vec<u8>>,
    pub truth: GroundTruth,
}

impl SynthOutput {
    /// Writes the event files and `ground_truth.json` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<InputPaths, PipelineError> {
        let err = |p: &Path, e: std::io::Error| PipelineError::Output(format!("{}: {e}", p.display()));
        std::fs::create_dir_all(dir).map_err(|e| err(dir, e))?;
        for (name, bytes) in &self.files {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| err(&p, e))?;
        }
        let mut truth =
            serde_json::to_vec_pretty(&self.truth).map_err(|e| PipelineError::Output(e.to_string()))?;
        truth.push(b'\n');
        let p = dir.join("ground_truth.json");
        std::fs::write(&p, truth).map_err(|e| err(&p, e))?;
        Ok(InputPaths {
            commits: Some(dir.join("commits.csv")),
            pull_requests: Some(dir.join("pull_requests.csv")),
            reviews: Some(dir.join("reviews.csv")),
            issues: Some(dir.join("issues.csv")),
            archive: vec![dir.join("archive.jsonl")],
        })
    }
}

struct Community {
    years: Vec<i32>,
    repos: Vec<String>,
    members: Vec<usize>,
}

struct Person {
    id: u64,
    login: String,
    home: usize,
    foreign: Vec<usize>,
}

struct Commit {
    repo: String,
    person: Option<usize>,
    raw: String,
    at: Timestamp,
}

fn rng_for(spec: &SynthSpec, name: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &format!("synth/{name}")))
}

fn instant_in_year(rng: &mut impl Rng, year: i32) -> Timestamp {
    let start = Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).unwrap();
    start + Duration::seconds(rng.random_range(0..365 * 86_400))
}

fn fmt_ts(t: Timestamp) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Integer counts proportional to `weights` summing to `total`.
fn largest_remainder(weights: &[f64], total: usize) -> Vec<u64> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut out: Vec<u64> = exact.iter().map(|x| x.floor() as u64).collect();
    let mut rest = total as u64 - out.iter().sum::<u64>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    for i in order.into_iter().cycle() {
        if rest == 0 {
            break;
        }
        out[i] += 1;
        rest -= 1;
    }
    out
}

/// `count` distinct communities other than `home`, drawn with probability
/// proportional to `weights`.
fn foreign_draw(rng: &mut impl Rng, weights: &[f64], home: usize, count: usize) -> Vec<usize> {
    let mut w = weights.to_vec();
    w[home] = 0.0;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let idx = WeightedIndex::new(&w).expect("enough communities with positive weight");
        let c = idx.sample(rng);
        w[c] = 0.0;
        out.push(c);
    }
    out.sort_unstable();
    out
}

pub fn synth_generate(spec: &SynthSpec) -> Result<SynthOutput, PipelineError> {
    let window = spec.validate()?;
    let (y_start, y_end) = window.full_year_range();

    // Communities, sizes and planted residualisation times.
    let mut rng = rng_for(spec, "communities");
    let noise = Normal::new(0.0, spec.size_noise).expect("validated");
    let (ln_lo, ln_hi) = ((spec.repos_min as f64).ln(), (spec.repos_max as f64 + 0.5).ln());
    let mut comms: Vec<Community> = Vec::new();
    let mut planted: Vec<PlantedCommunity> = Vec::new();
    let mut n_contrib: Vec<usize> = Vec::new();
    for (ci, cohort) in spec.cohorts.iter().enumerate() {
        let span_years = (cohort.last_birth_year - cohort.first_birth_year + 1) as usize;
        let mut quantiles: Vec<usize> = (0..cohort.n_communities).collect();
        quantiles.shuffle(&mut rng);
        for (j, &q) in quantiles.iter().enumerate() {
            let id = comms.len();
            let birth = cohort.first_birth_year + (j % span_years) as i32;
            let u = (q as f64 + 0.5) / cohort.n_communities as f64;
            let t = ((1.0 - u).ln() / (1.0 - cohort.hazard).ln()).ceil().max(1.0) as u32;
            let horizon = (y_end - birth + 1) as u32;
            let active = t.min(horizon);
            let r = (rng.random_range(ln_lo..ln_hi)).exp().floor().clamp(spec.repos_min as f64, spec.repos_max as f64)
                as usize;
            let n = (spec.size_scale * (r as f64).powf(spec.size_exponent) * noise.sample(&mut rng).exp())
                .round()
                .max(2.0) as usize;
            comms.push(Community {
                years: (birth..birth + active as i32).collect(),
                repos: (0..r).map(|v| format!("eco{id:03}/repo{v:02}")).collect(),
                members: Vec::new(),
            });
            planted.push(PlantedCommunity {
                id,
                cohort: ci,
                birth_year: birth,
                n_repos: r,
                n_contributors: n,
                active_years: active,
                event: t < horizon,
                span: active,
            });
            n_contrib.push(n);
        }
    }
    let n_comm = comms.len();
    let size_w: Vec<f64> = n_contrib.iter().map(|&n| n as f64).collect();

    // Contributors and their planted breadth.
    let mut rng = rng_for(spec, "breadth");
    let n_body: usize = n_contrib.iter().sum();
    let body_weights: Vec<f64> = (1..spec.break_k).map(|k| (k as f64).powf(spec.body_slope)).collect();
    let body_counts = largest_remainder(&body_weights, n_body);
    let mut body_ks: Vec<usize> =
        body_counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(i + 1, c as usize)).collect();
    body_ks.shuffle(&mut rng);
    let mut people: Vec<Person> = Vec::new();
    let mut person_k: Vec<usize> = Vec::new();
    for (c, &n) in n_contrib.iter().enumerate() {
        for _ in 0..n {
            let p = people.len();
            let k = body_ks[p];
            people.push(Person {
                id: 100_000 + p as u64,
                login: format!("dev{p:05}"),
                home: c,
                foreign: foreign_draw(&mut rng, &size_w, c, k - 1),
            });
            person_k.push(k);
            comms[c].members.push(p);
        }
    }
    let mut by_size: Vec<usize> = (0..n_comm).collect();
    by_size.sort_by(|&a, &b| n_contrib[b].cmp(&n_contrib[a]).then(a.cmp(&b)));
    let mut carriers = Vec::new();
    for i in 0..spec.n_carriers {
        let p = people.len();
        let k = spec.break_k + i;
        let home = by_size[i % n_comm];
        let login = format!("carrier{i:02}");
        people.push(Person {
            id: 900_000 + i as u64,
            login: login.clone(),
            home,
            foreign: foreign_draw(&mut rng, &size_w, home, k - 1),
        });
        person_k.push(k);
        comms[home].members.push(p);
        carriers.push(login);
    }
    carriers.sort();

    // Commits: home edges spread evenly over the home's active years, one
    // commit per foreign community inside that community's active years.
    let mut rng = rng_for(spec, "commits");
    let extra = Poisson::new(spec.home_commit_mean).expect("validated");
    let mut commits: Vec<Commit> = Vec::new();
    for comm in &comms {
        let mut home: Vec<(usize, &String)> = Vec::new();
        for &p in &comm.members {
            let floor = if p >= n_body { 2 } else { 1 };
            let n_home = spec.home_repos_per_contributor.min(comm.repos.len());
            for repo in comm.repos.choose_multiple(&mut rng, n_home) {
                let c = floor + extra.sample(&mut rng) as usize;
                home.extend(std::iter::repeat_n((p, repo), c));
            }
        }
        home.shuffle(&mut rng);
        for (i, (p, repo)) in home.into_iter().enumerate() {
            let year = comm.years[i % comm.years.len()];
            commits.push(Commit { repo: repo.clone(), person: Some(p), raw: String::new(), at: instant_in_year(&mut rng, year) });
        }
    }
    for (p, person) in people.iter().enumerate() {
        for &f in &person.foreign {
            let comm = &comms[f];
            let repo = comm.repos.choose(&mut rng).expect("nonempty").clone();
            let year = *comm.years.choose(&mut rng).expect("nonempty");
            commits.push(Commit { repo, person: Some(p), raw: String::new(), at: instant_in_year(&mut rng, year) });
        }
    }
    let all_repos: Vec<&String> = comms.iter().flat_map(|c| &c.repos).collect();
    let noise_actor = |raw: String, rng: &mut ChaCha8Rng, commits: &mut Vec<Commit>| {
        let repo = (*all_repos.choose(rng).expect("repos")).clone();
        let year = rng.random_range(y_start..=y_end);
        commits.push(Commit { repo, person: None, raw, at: instant_in_year(rng, year) });
    };
    for i in 0..spec.n_bot_commits {
        let raw = ["dependabot[bot]", "github-actions[bot]", "renovate[bot]"][i % 3].to_string();
        noise_actor(raw, &mut rng, &mut commits);
    }
    for _ in 0..spec.n_placeholder_commits {
        noise_actor("root".into(), &mut rng, &mut commits);
    }
    for i in 0..spec.n_phantom_commits {
        noise_actor((5_000_000 + i as u64).to_string(), &mut rng, &mut commits);
    }
    commits.sort_by(|a, b| a.at.cmp(&b.at).then_with(|| a.repo.cmp(&b.repo)));

    // Author tokens and the archive: each human's first commit carries the
    // actor pair; later rows use either the numeric id or the login.
    let mut rng = rng_for(spec, "identity");
    let mut seen = vec![false; people.len()];
    let mut archive = Vec::new();
    let mut commit_csv = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| PipelineError::Output(e.to_string());
    commit_csv.write_record(["repo_id", "raw_author", "timestamp"]).map_err(csv_err)?;
    let token = |p: &Person, rng: &mut ChaCha8Rng| -> String {
        if rng.random_bool(spec.numeric_id_share) {
            p.id.to_string()
        } else if rng.random_bool(0.1) {
            p.login.to_uppercase()
        } else {
            p.login.clone()
        }
    };
    for c in &mut commits {
        match c.person {
            Some(p) if !seen[p] => {
                seen[p] = true;
                let person = &people[p];
                let line = json!({
                    "type": "PushEvent",
                    "actor": {"id": person.id, "login": person.login},
                    "repo": {"name": c.repo},
                    "created_at": fmt_ts(c.at),
                    "payload": {"size": 1},
                });
                archive.extend(serde_json::to_vec(&line).map_err(|e| PipelineError::Output(e.to_string()))?);
                archive.push(b'\n');
                continue;
            }
            Some(p) => c.raw = token(&people[p], &mut rng),
            None => {}
        }
        commit_csv.write_record([c.repo.as_str(), c.raw.as_str(), &fmt_ts(c.at)]).map_err(csv_err)?;
    }

    // Pull requests with exact merged counts per stratum.
    let mut rng = rng_for(spec, "pulls");
    let n_inter = (spec.n_prs as f64 * spec.inter_pr_share).round() as usize;
    let n_intra = spec.n_prs - n_inter;
    let m_intra = (n_intra as f64 * spec.acceptance_intra).round() as usize;
    let m_inter = (n_inter as f64 * spec.acceptance_inter()).round() as usize;
    let outcomes = |n: usize, m: usize, rng: &mut ChaCha8Rng| {
        let mut v: Vec<bool> = (0..n).map(|i| i < m).collect();
        v.shuffle(rng);
        v
    };
    let intra_outcomes = outcomes(n_intra, m_intra, &mut rng);
    let inter_outcomes = outcomes(n_inter, m_inter, &mut rng);
    let inter_w = WeightedIndex::new(person_k.iter().map(|&k| (k * k) as f64)).expect("people");
    let mut pr_numbers: BTreeMap<String, u64> = BTreeMap::new();
    let mut pr_csv = csv::Writer::from_writer(Vec::new());
    pr_csv
        .write_record(["repo_id", "pr_number", "raw_author", "created_at", "closed_at", "merged_at"])
        .map_err(csv_err)?;
    let mut review_csv = csv::Writer::from_writer(Vec::new());
    review_csv.write_record(["repo_id", "pr_number", "state", "timestamp"]).map_err(csv_err)?;
    let z = Normal::new(0.0, spec.latency_sigma.max(1e-12)).expect("validated");
    for (inter, merged) in intra_outcomes.into_iter().map(|m| (false, m)).chain(inter_outcomes.into_iter().map(|m| (true, m))) {
        let (author, target) = if inter {
            let p = inter_w.sample(&mut rng);
            let target = match people[p].foreign.choose(&mut rng) {
                Some(&f) => f,
                None => loop {
                    let c = rng.random_range(0..n_comm);
                    if c != people[p].home {
                        break c;
                    }
                },
            };
            (p, target)
        } else {
            let p = rng.random_range(0..people.len());
            (p, people[p].home)
        };
        let repo = comms[target].repos.choose(&mut rng).expect("nonempty").clone();
        let number = pr_numbers.entry(repo.clone()).or_insert(0);
        *number += 1;
        let number = *number;
        let year = rng.random_range(2008..=y_end.min(2020));
        let created = instant_in_year(&mut rng, year);
        let base = if merged { spec.merged_median_hours_intra } else { spec.rejected_median_hours_intra };
        let median = if inter { base * spec.latency_ratio } else { base };
        let hours = (median * z.sample(&mut rng).exp()).min(24.0 * 365.0);
        let closed = created + Duration::seconds((hours * 3600.0).round().max(1.0) as i64);
        let merged_at = if merged { fmt_ts(closed) } else { String::new() };
        pr_csv
            .write_record([repo.as_str(), &number.to_string(), &token(&people[author], &mut rng), &fmt_ts(created), &fmt_ts(closed), &merged_at])
            .map_err(csv_err)?;
        if merged && rng.random_bool(spec.review_share) {
            let p_changes = if inter { spec.changes_requested_inter } else { spec.changes_requested_intra };
            let mut states = vec!["APPROVED"];
            if rng.random_bool(p_changes) {
                states.insert(0, "CHANGES_REQUESTED");
            } else if rng.random_bool(0.3) {
                states.insert(0, "COMMENTED");
            }
            for (i, s) in states.iter().enumerate() {
                let at = created + (closed - created) * (i as i32 + 1) / (states.len() as i32 + 1);
                review_csv.write_record([repo.as_str(), &number.to_string(), s, &fmt_ts(at)]).map_err(csv_err)?;
            }
        }
    }
    for i in 0..spec.n_bot_commits / 10 {
        let repo = (*all_repos.choose(&mut rng).expect("repos")).clone();
        let number = pr_numbers.entry(repo.clone()).or_insert(0);
        *number += 1;
        let created = instant_in_year(&mut rng, 2019);
        let closed = fmt_ts(created + Duration::hours(1));
        pr_csv
            .write_record([repo.as_str(), &number.to_string(), ["dependabot[bot]", "renovate[bot]"][i % 2], &fmt_ts(created), &closed, &closed])
            .map_err(csv_err)?;
    }

    // Issues with stratum-specific comment counts.
    let mut rng = rng_for(spec, "issues");
    let mut issue_csv = csv::Writer::from_writer(Vec::new());
    issue_csv
        .write_record(["repo_id", "issue_number", "raw_author", "created_at", "comment_count"])
        .map_err(csv_err)?;
    let c_intra = Poisson::new(spec.issue_comments_intra).expect("validated");
    let c_inter = Poisson::new(spec.issue_comments_inter).expect("validated");
    let mut issue_numbers: BTreeMap<String, u64> = BTreeMap::new();
    for i in 0..spec.n_issues {
        let inter = i % 2 == 1;
        let p = rng.random_range(0..people.len());
        let target = if inter {
            loop {
                let c = rng.random_range(0..n_comm);
                if c != people[p].home {
                    break c;
                }
            }
        } else {
            people[p].home
        };
        let repo = comms[target].repos.choose(&mut rng).expect("nonempty").clone();
        let number = issue_numbers.entry(repo.clone()).or_insert(0);
        *number += 1;
        let comments = if inter { c_inter.sample(&mut rng) } else { c_intra.sample(&mut rng) } as u64;
        let year = rng.random_range(2008..=y_end);
        let created = instant_in_year(&mut rng, year);
        issue_csv
            .write_record([repo.as_str(), &number.to_string(), &token(&people[p], &mut rng), &fmt_ts(created), &comments.to_string()])
            .map_err(csv_err)?;
    }

    let finish = |w: csv::Writer<Vec<u8>>| w.into_inner().map_err(|e| PipelineError::Output(e.to_string()));
    let mut files = BTreeMap::new();
    files.insert("commits.csv".to_string(), finish(commit_csv)?);
    files.insert("pull_requests.csv".to_string(), finish(pr_csv)?);
    files.insert("reviews.csv".to_string(), finish(review_csv)?);
    files.insert("issues.csv".to_string(), finish(issue_csv)?);
    files.insert("archive.jsonl".to_string(), archive);

    let cohorts = spec
        .cohorts
        .iter()
        .enumerate()
        .map(|(ci, c)| {
            let members: Vec<&PlantedCommunity> = planted.iter().filter(|p| p.cohort == ci).collect();
            let events = members.iter().filter(|p| p.event).count() as u64;
            let total_span: u64 = members.iter().map(|p| u64::from(p.span)).sum();
            CohortTruth {
                cohort: ci,
                planted_hazard: c.hazard,
                n: members.len(),
                events,
                total_span,
                realized_hazard: events as f64 / total_span as f64,
            }
        })
        .collect();
    let repo_community =
        comms.iter().enumerate().flat_map(|(c, comm)| comm.repos.iter().map(move |r| (r.clone(), c))).collect();
    let homes = people.iter().map(|p| (p.login.clone(), p.home)).collect();
    let contributor_k = people.iter().zip(&person_k).map(|(p, &k)| (p.login.clone(), k)).collect();
    let body_k_counts = body_counts.iter().enumerate().map(|(i, &c)| (i + 1, c)).collect();
    let truth = GroundTruth {
        spec: spec.clone(),
        communities: planted,
        cohorts,
        repo_community,
        homes,
        contributor_k,
        body_k_counts,
        carriers,
        prs: PlantedPrs {
            intra_total: n_intra as u64,
            intra_merged: m_intra as u64,
            inter_total: n_inter as u64,
            inter_merged: m_inter as u64,
            gap_pp: 100.0 * (m_intra as f64 / n_intra as f64 - m_inter as f64 / n_inter as f64),
        },
    };
    debug_assert!(truth.contributor_k.values().collect::<BTreeSet<_>>().len() >= spec.break_k);
    Ok(SynthOutput { files, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            cohorts: vec![
                CohortSpec { first_birth_year: 2005, last_birth_year: 2006, n_communities: 8, hazard: 0.05 },
                CohortSpec { first_birth_year: 2016, last_birth_year: 2016, n_communities: 8, hazard: 0.3 },
            ],
            repos_min: 6,
            repos_max: 12,
            n_carriers: 4,
            n_prs: 400,
            n_issues: 100,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let a = synth_generate(&small()).unwrap();
        let b = synth_generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = synth_generate(&SynthSpec { seed: 8, ..small() }).unwrap();
        assert_ne!(a.files["commits.csv"], c.files["commits.csv"]);
    }

    #[test]
    fn planted_breadth_matches_commit_rows() {
        let out = synth_generate(&small()).unwrap();
        let t = &out.truth;
        // Independent tally of communities per login from the emitted rows.
        let mut touched: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        let id_login: BTreeMap<String, String> =
            t.homes.keys().map(|l| (l.clone(), l.clone())).collect();
        let mut ids: BTreeMap<String, String> = BTreeMap::new();
        for line in String::from_utf8(out.files["archive.jsonl"].clone()).unwrap().lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let login = v["actor"]["login"].as_str().unwrap().to_string();
            ids.insert(v["actor"]["id"].to_string(), login.clone());
            touched.entry(login).or_default().insert(t.repo_community[v["repo"]["name"].as_str().unwrap()]);
        }
        let mut rdr = csv::Reader::from_reader(out.files["commits.csv"].as_slice());
        for row in rdr.records() {
            let row = row.unwrap();
            let raw = row[1].to_lowercase();
            let login = ids.get(&raw).or_else(|| id_login.get(&raw));
            if let Some(login) = login {
                touched.entry(login.clone()).or_default().insert(t.repo_community[&row[0]]);
            }
        }
        let k: BTreeMap<String, usize> = touched.into_iter().map(|(l, s)| (l, s.len())).collect();
        assert_eq!(k, t.contributor_k);
        let carriers: Vec<&String> = t.contributor_k.iter().filter(|(_, &k)| k >= t.spec.break_k).map(|(l, _)| l).collect();
        assert_eq!(carriers, t.carriers.iter().collect::<Vec<_>>());
    }

    #[test]
    fn exact_acceptance_allocation() {
        let out = synth_generate(&small()).unwrap();
        let p = &out.truth.prs;
        assert_eq!(p.intra_total + p.inter_total, 400);
        assert_eq!(p.intra_merged, (200.0f64 * 0.819).round() as u64);
        let mut rdr = csv::Reader::from_reader(out.files["pull_requests.csv"].as_slice());
        let merged = rdr.records().filter(|r| !r.as_ref().unwrap()[5].is_empty()).count() as u64;
        assert_eq!(merged, p.intra_merged + p.inter_merged + (out.truth.spec.n_bot_commits / 10) as u64);
    }

    #[test]
    fn infeasible_spec_rejected() {
        let spec = SynthSpec { n_carriers: 60, ..small() };
        assert!(matches!(synth_generate(&spec), Err(PipelineError::Config(_))));
        let spec = SynthSpec { acceptance_gap_pp: 95.0, ..small() };
        assert!(matches!(synth_generate(&spec), Err(PipelineError::Config(_))));
    }

    #[test]
    fn largest_remainder_sums() {
        let c = largest_remainder(&[1.0, 0.5, 0.25], 10);
        assert_eq!(c.iter().sum::<u64>(), 10);
        assert_eq!(c, vec![6, 3, 1]);
    }
}
