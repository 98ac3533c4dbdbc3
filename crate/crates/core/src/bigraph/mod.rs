//! Weighted contributor-repository graph and its community structure.
//!
//! Contributors and repositories share one node index space: contributors
//! occupy `0..n_contributors` and repositories follow. Louvain runs on that
//! combined adjacency with standard resolution-weighted modularity.

mod agreement;
mod louvain;

pub use agreement::{onemode_project, partition_agreement, projection_diagnostic, Agreement, Projection, Side};
pub use louvain::{louvain, louvain_restarts, modularity, LouvainOutcome, WeightedGraph};

use crate::ingest::{CanonicalCommit, CanonicalPullRequest, Timestamp};
use crate::stats::{self, OlsFit};
use chrono::Datelike;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

#[derive(Debug, thiserror::Error)]
pub enum BigraphError {
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("resolution must be positive, got {0}")]
    InvalidResolution(f64),
    #[error("{0}")]
    Domain(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub contributor: usize,
    pub repo: usize,
    pub commits: u64,
    pub weight: f64,
    pub first_commit: Timestamp,
    pub last_commit: Timestamp,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BipartiteGraph {
    pub contributors: Vec<String>,
    pub repos: Vec<String>,
    /// Sorted by `(contributor, repo)`.
    pub edges: Vec<Edge>,
}

impl BipartiteGraph {
    pub fn node_count(&self) -> usize {
        self.contributors.len() + self.repos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Combined-index id of repository `v`.
    pub fn repo_node(&self, v: usize) -> usize {
        self.contributors.len() + v
    }

    pub fn contributor_index(&self) -> BTreeMap<&str, usize> {
        self.contributors.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }

    pub fn repo_index(&self) -> BTreeMap<&str, usize> {
        self.repos.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }

    pub fn to_weighted(&self) -> WeightedGraph {
        WeightedGraph::from_edges(
            self.node_count(),
            self.edges.iter().map(|e| (e.contributor, self.repo_node(e.repo), e.weight)),
        )
    }

    /// Edge list as `contributor,repo,commits,weight`.
    pub fn write_edge_list<W: Write>(&self, out: W) -> Result<(), BigraphError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["contributor", "repo", "commits", "weight"])?;
        for e in &self.edges {
            w.write_record([
                self.contributors[e.contributor].as_str(),
                self.repos[e.repo].as_str(),
                &e.commits.to_string(),
                &e.weight.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Default)]
struct PairAcc {
    commits: u64,
    first: Option<Timestamp>,
    last: Option<Timestamp>,
}

impl PairAcc {
    fn add(&mut self, t: Timestamp, n: u64) {
        self.commits += n;
        self.first = Some(self.first.map_or(t, |f| f.min(t)));
        self.last = Some(self.last.map_or(t, |l| l.max(t)));
    }

    fn merge(&mut self, other: PairAcc) {
        self.commits += other.commits;
        if let Some(f) = other.first {
            self.first = Some(self.first.map_or(f, |s| s.min(f)));
        }
        if let Some(l) = other.last {
            self.last = Some(self.last.map_or(l, |s| s.max(l)));
        }
    }
}

/// One edge per `(contributor, repository)` pair with at least one commit,
/// weighted `ln(1 + c)`. The caller decides which actor classes to pass in.
pub fn build_bipartite(commits: &[CanonicalCommit]) -> BipartiteGraph {
    let pairs: BTreeMap<(String, String), PairAcc> = commits
        .par_chunks(8192)
        .map(|chunk| {
            let mut m: BTreeMap<(String, String), PairAcc> = BTreeMap::new();
            for c in chunk {
                m.entry((c.actor.login.clone(), c.record.repo_id.clone()))
                    .or_default()
                    .add(c.record.timestamp, 1);
            }
            m
        })
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, v) in b {
                a.entry(k).or_default().merge(v);
            }
            a
        });
    let contributors: Vec<String> =
        pairs.keys().map(|(u, _)| u.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let repos: Vec<String> = pairs.keys().map(|(_, v)| v.clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let u_idx: BTreeMap<&str, usize> = contributors.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let v_idx: BTreeMap<&str, usize> = repos.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let edges = pairs
        .iter()
        .map(|((u, v), acc)| Edge {
            contributor: u_idx[u.as_str()],
            repo: v_idx[v.as_str()],
            commits: acc.commits,
            weight: (acc.commits as f64).ln_1p(),
            first_commit: acc.first.expect("non-empty pair"),
            last_commit: acc.last.expect("non-empty pair"),
        })
        .collect();
    BipartiteGraph { contributors, repos, edges }
}

/// Community labelling of every contributor and repository node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    /// Indexed by combined node id; dense labels from 0.
    pub assignment: Vec<usize>,
    pub resolution: f64,
    pub seed: u64,
    pub modularity: f64,
    pub pass_modularity: Vec<f64>,
    pub n_contributors: usize,
}

impl Partition {
    pub fn n_communities(&self) -> usize {
        self.assignment.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn of_contributor(&self, u: usize) -> usize {
        self.assignment[u]
    }

    pub fn of_repo(&self, v: usize) -> usize {
        self.assignment[self.n_contributors + v]
    }

    /// Contributor login to community.
    pub fn contributor_map(&self, g: &BipartiteGraph) -> BTreeMap<String, usize> {
        g.contributors.iter().enumerate().map(|(u, s)| (s.clone(), self.of_contributor(u))).collect()
    }

    /// Repository id to community.
    pub fn repo_map(&self, g: &BipartiteGraph) -> BTreeMap<String, usize> {
        g.repos.iter().enumerate().map(|(v, s)| (s.clone(), self.of_repo(v))).collect()
    }

    /// Partition as `node,side,community`.
    pub fn write_csv<W: Write>(&self, g: &BipartiteGraph, out: W) -> Result<(), BigraphError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["node", "side", "community"])?;
        for (u, name) in g.contributors.iter().enumerate() {
            w.write_record([name.as_str(), "contributor", &self.of_contributor(u).to_string()])?;
        }
        for (v, name) in g.repos.iter().enumerate() {
            w.write_record([name.as_str(), "repo", &self.of_repo(v).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_input(g: &BipartiteGraph, resolution: f64) -> Result<(), BigraphError> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(BigraphError::InvalidResolution(resolution));
    }
    if g.is_empty() {
        return Err(BigraphError::EmptyGraph);
    }
    Ok(())
}

fn to_partition(g: &BipartiteGraph, out: LouvainOutcome, resolution: f64) -> Partition {
    Partition {
        assignment: out.membership,
        resolution,
        seed: out.seed,
        modularity: out.modularity,
        pass_modularity: out.pass_modularity,
        n_contributors: g.contributors.len(),
    }
}

/// Louvain on the combined bipartite adjacency.
pub fn louvain_detect(g: &BipartiteGraph, resolution: f64, seed: u64) -> Result<Partition, BigraphError> {
    check_input(g, resolution)?;
    Ok(to_partition(g, louvain(&g.to_weighted(), resolution, seed), resolution))
}

/// Best of several seeded runs; the winning seed is kept on the partition.
pub fn louvain_detect_best(g: &BipartiteGraph, resolution: f64, seeds: &[u64]) -> Result<Partition, BigraphError> {
    check_input(g, resolution)?;
    let out = louvain_restarts(&g.to_weighted(), resolution, seeds)
        .ok_or_else(|| BigraphError::Domain("no seeds given".into()))?;
    Ok(to_partition(g, out, resolution))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunitySummary {
    pub community_id: usize,
    pub n_contributors: usize,
    pub n_repos: usize,
    /// `None` when the community lacks either side.
    pub intra_density: Option<f64>,
    pub inter_density: Option<f64>,
    pub ratio_rescaled: Option<f64>,
    /// Commits landing on the community's repositories.
    pub total_commits: u64,
    pub d_ext: usize,
    pub intra_prs: u64,
    pub inter_prs: u64,
    /// `None` when no attributable PR was received.
    pub inter_pr_share: Option<f64>,
    /// Year of the first commit on the community's repositories.
    pub birth_year: Option<i32>,
}

impl CommunitySummary {
    pub fn is_singleton(&self) -> bool {
        self.n_contributors + self.n_repos < 2
    }
}

/// Per-community anatomy. `home` maps contributor logins to their home
/// community; PRs by authors without one are not attributed.
pub fn community_summaries(
    g: &BipartiteGraph,
    p: &Partition,
    prs: &[CanonicalPullRequest],
    home: &BTreeMap<String, usize>,
) -> Vec<CommunitySummary> {
    let k = p.n_communities();
    let mut n_u = vec![0usize; k];
    let mut n_v = vec![0usize; k];
    for u in 0..g.contributors.len() {
        n_u[p.of_contributor(u)] += 1;
    }
    for v in 0..g.repos.len() {
        n_v[p.of_repo(v)] += 1;
    }
    let mut intra = vec![0u64; k];
    let mut cross = vec![0u64; k];
    let mut commits = vec![0u64; k];
    let mut birth: Vec<Option<i32>> = vec![None; k];
    let mut partners: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); k];
    for e in &g.edges {
        let (cu, cv) = (p.of_contributor(e.contributor), p.of_repo(e.repo));
        commits[cv] += e.commits;
        let y = e.first_commit.year();
        birth[cv] = Some(birth[cv].map_or(y, |b| b.min(y)));
        if cu == cv {
            intra[cu] += 1;
        } else {
            cross[cu] += 1;
            cross[cv] += 1;
            partners[cu].insert(cv);
            partners[cv].insert(cu);
        }
    }
    let repo_idx = g.repo_index();
    let mut pr_intra = vec![0u64; k];
    let mut pr_inter = vec![0u64; k];
    for pr in prs {
        let Some(&v) = repo_idx.get(pr.record.repo_id.as_str()) else { continue };
        let Some(&h) = home.get(&pr.actor.login) else { continue };
        let c = p.of_repo(v);
        if h == c {
            pr_intra[c] += 1;
        } else {
            pr_inter[c] += 1;
        }
    }
    let (tu, tv) = (g.contributors.len(), g.repos.len());
    let mut out: Vec<CommunitySummary> = (0..k)
        .map(|c| {
            let possible = n_u[c] * n_v[c];
            let intra_density = (possible > 0).then(|| intra[c] as f64 / possible as f64);
            let cross_possible = n_u[c] * (tv - n_v[c]) + n_v[c] * (tu - n_u[c]);
            let inter_density = (possible > 0 && cross_possible > 0).then(|| cross[c] as f64 / cross_possible as f64);
            let pr_total = pr_intra[c] + pr_inter[c];
            CommunitySummary {
                community_id: c,
                n_contributors: n_u[c],
                n_repos: n_v[c],
                intra_density,
                inter_density,
                ratio_rescaled: None,
                total_commits: commits[c],
                d_ext: partners[c].len(),
                intra_prs: pr_intra[c],
                inter_prs: pr_inter[c],
                inter_pr_share: (pr_total > 0).then(|| pr_inter[c] as f64 / pr_total as f64),
                birth_year: birth[c],
            }
        })
        .collect();
    rescale_ratios(&mut out);
    out
}

/// Min-max rescaling of inter/intra over communities with positive intra
/// density. A constant ratio maps to 0.
fn rescale_ratios(summaries: &mut [CommunitySummary]) {
    let ratio = |s: &CommunitySummary| match (s.intra_density, s.inter_density) {
        (Some(a), Some(e)) if a > 0.0 => Some(e / a),
        _ => None,
    };
    let vals: Vec<f64> = summaries.iter().filter_map(ratio).collect();
    let Some(lo) = vals.iter().copied().reduce(f64::min) else { return };
    let hi = vals.iter().copied().fold(lo, f64::max);
    for s in summaries.iter_mut() {
        s.ratio_rescaled = ratio(s).map(|r| if hi > lo { (r - lo) / (hi - lo) } else { 0.0 });
    }
}

/// Log-log size scaling `n_contributors ~ n_repos^beta`, excluding communities
/// with a single contributor.
pub fn size_scaling_fit(summaries: &[CommunitySummary]) -> stats::Result<OlsFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = summaries
        .iter()
        .filter(|s| s.n_contributors > 1 && s.n_repos > 0)
        .map(|s| (s.n_repos as f64, s.n_contributors as f64))
        .unzip();
    stats::ols_loglog(&xs, &ys)
}
