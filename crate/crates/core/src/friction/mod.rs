//! Depth of engagement inside versus across community boundaries.
//!
//! Every closed pull request whose author has a home community is tagged
//! intra or inter. The tables in this module compare the two slices on
//! acceptance, turnaround, review mix, issue discussion and retention, and
//! relate cross-community work to contributor breadth.

mod crossing;
mod depth;

pub use crossing::{
    concentration_and_rank, friction_by_k, turnaround_sequence_regression, Concentration, KBin, KBinCell,
    SequenceRegression, DEFAULT_K_BINS, TOP_N,
};
pub use depth::{
    acceptance_table, issue_depth_table, latency_table, retention_table, review_mix_table, AcceptanceSlice,
    AcceptanceTable, IssueCell, IssueDepthTable, LatencyCell, LatencyComparison, LatencyTable, RetentionCell,
    RetentionTable, ReviewMixCell, ReviewMixTable, DEFAULT_RETENTION_DAYS,
};

use crate::breadth::{commit_split, BreadthError};
use crate::ingest::{CanonicalCommit, CanonicalPullRequest, ReviewRecord, ReviewState, Timestamp};
use crate::stats::StatsError;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FrictionError {
    #[error(transparent)]
    Breadth(#[from] BreadthError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    Intra,
    Inter,
}

impl Stratum {
    pub const BOTH: [Stratum; 2] = [Stratum::Intra, Stratum::Inter];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stratum::Intra => "intra",
            Stratum::Inter => "inter",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Merged,
    Rejected,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Merged => "merged",
            Outcome::Rejected => "rejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrDepthRecord {
    pub repo_id: String,
    pub pr_number: u64,
    pub author: String,
    pub author_home: usize,
    pub repo_community: usize,
    pub is_inter: bool,
    pub outcome: Outcome,
    pub created_at: Timestamp,
    pub turnaround_hours: f64,
    pub review_count: usize,
    pub had_changes_requested: bool,
    pub author_k: usize,
}

impl PrDepthRecord {
    pub fn stratum(&self) -> Stratum {
        if self.is_inter { Stratum::Inter } else { Stratum::Intra }
    }
}

/// Where the closed-PR population went before stratification.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrCensus {
    pub total: usize,
    pub open: usize,
    pub unpartitioned_repo: usize,
    pub unresolved_home: usize,
    pub negative_turnaround: usize,
    pub included: usize,
}

/// Modal community by commits per actor, with the breadth module's tie rule.
pub fn home_community_assignment(
    commits: &[CanonicalCommit],
    repo_community: &BTreeMap<String, usize>,
) -> Result<BTreeMap<String, usize>, FrictionError> {
    Ok(commit_split(commits, repo_community)?.home_map())
}

/// Joins PRs with reviews, homes and breadth, keeping closed PRs whose
/// author home and repository community are both known.
pub fn build_pr_records(
    prs: &[CanonicalPullRequest],
    reviews: &[ReviewRecord],
    home: &BTreeMap<String, usize>,
    repo_community: &BTreeMap<String, usize>,
    breadth_k: &BTreeMap<String, usize>,
) -> (Vec<PrDepthRecord>, PrCensus) {
    let mut review_counts: BTreeMap<(&str, u64), usize> = BTreeMap::new();
    let mut changes: BTreeSet<(&str, u64)> = BTreeSet::new();
    for r in reviews {
        *review_counts.entry((r.repo_id.as_str(), r.pr_number)).or_default() += 1;
        if r.state == ReviewState::ChangesRequested {
            changes.insert((r.repo_id.as_str(), r.pr_number));
        }
    }
    let mut census = PrCensus { total: prs.len(), ..PrCensus::default() };
    let mut out = Vec::new();
    for pr in prs {
        let rec = &pr.record;
        let Some(terminal) = rec.terminal_at() else {
            census.open += 1;
            continue;
        };
        let Some(&repo_community) = repo_community.get(&rec.repo_id) else {
            census.unpartitioned_repo += 1;
            continue;
        };
        let Some(&author_home) = home.get(&pr.actor.login) else {
            census.unresolved_home += 1;
            continue;
        };
        let turnaround_hours = (terminal - rec.created_at).num_milliseconds() as f64 / 3.6e6;
        if turnaround_hours < 0.0 {
            census.negative_turnaround += 1;
            continue;
        }
        let key = (rec.repo_id.as_str(), rec.pr_number);
        out.push(PrDepthRecord {
            repo_id: rec.repo_id.clone(),
            pr_number: rec.pr_number,
            author: pr.actor.login.clone(),
            author_home,
            repo_community,
            is_inter: author_home != repo_community,
            outcome: if rec.is_merged() { Outcome::Merged } else { Outcome::Rejected },
            created_at: rec.created_at,
            turnaround_hours,
            review_count: review_counts.get(&key).copied().unwrap_or(0),
            had_changes_requested: changes.contains(&key),
            author_k: breadth_k.get(&pr.actor.login).copied().unwrap_or(0),
        });
    }
    census.included = out.len();
    (out, census)
}
