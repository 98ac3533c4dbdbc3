//! Event ingestion and contributor identity resolution.
//!
//! Raw dumps arrive either as per-stream CSV tables or as GH-Archive-style
//! JSONL. Both are reduced to the same small record family, after which every
//! raw author token is resolved to a [`CanonicalActor`] (human, bot or
//! phantom) through an [`IdentityMap`].

mod identity;
mod parse;

pub use identity::{
    build_identity_map, canonicalize_actors, canonicalize_streams, classify_token, Census,
    IdentityMap, IdentityRules, DEFAULT_BOTS, DEFAULT_PLACEHOLDERS,
};
pub use parse::{dedup_issues, dedup_pull_requests, parse_events, parse_timestamp, ParseOutcome};

use chrono::{DateTime, Datelike, NaiveDate, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use std::fmt;

pub type Timestamp = DateTime<Utc>;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("failed to read event source: {0}")]
    Io(#[from] std::io::Error),
    #[error("source does not look like {format}: {malformed} of {total} rows malformed, first offending line {first_line}")]
    FormatMismatch {
        format: EventFormat,
        malformed: usize,
        total: usize,
        first_line: usize,
    },
    #[error("missing CSV header for {0}")]
    MissingHeader(EventFormat),
    #[error("invalid observation window: {0}")]
    Window(String),
}

/// Input formats understood by [`parse_events`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventFormat {
    CommitCsv,
    PrCsv,
    ReviewCsv,
    IssueCsv,
    GharchiveJsonl,
}

impl fmt::Display for EventFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            EventFormat::CommitCsv => "COMMIT_CSV",
            EventFormat::PrCsv => "PR_CSV",
            EventFormat::ReviewCsv => "REVIEW_CSV",
            EventFormat::IssueCsv => "ISSUE_CSV",
            EventFormat::GharchiveJsonl => "GHARCHIVE_JSONL",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub repo_id: String,
    /// Numeric actor id or login string, exactly as found in the dump.
    pub raw_author: String,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullRequestRecord {
    pub repo_id: String,
    pub pr_number: u64,
    pub raw_author: String,
    pub created_at: Timestamp,
    pub closed_at: Option<Timestamp>,
    pub merged_at: Option<Timestamp>,
}

impl PullRequestRecord {
    pub fn is_merged(&self) -> bool {
        self.merged_at.is_some()
    }

    /// Closed without a merge.
    pub fn is_rejected(&self) -> bool {
        self.merged_at.is_none() && self.closed_at.is_some()
    }

    /// Merge time for merged PRs, close time for rejected ones.
    pub fn terminal_at(&self) -> Option<Timestamp> {
        self.merged_at.or(self.closed_at)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReviewState {
    Approved,
    ChangesRequested,
    Commented,
    Dismissed,
}

impl ReviewState {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "APPROVED" => Some(ReviewState::Approved),
            "CHANGES_REQUESTED" => Some(ReviewState::ChangesRequested),
            "COMMENTED" => Some(ReviewState::Commented),
            "DISMISSED" => Some(ReviewState::Dismissed),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ReviewState::Approved => "APPROVED",
            ReviewState::ChangesRequested => "CHANGES_REQUESTED",
            ReviewState::Commented => "COMMENTED",
            ReviewState::Dismissed => "DISMISSED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub repo_id: String,
    pub pr_number: u64,
    pub state: ReviewState,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssueRecord {
    pub repo_id: String,
    pub issue_number: u64,
    pub raw_author: String,
    pub created_at: Timestamp,
    pub comment_count: u64,
}

/// `(actor_id, actor_login)` pair attached to archive events.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActorRef {
    pub id: u64,
    pub login: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Event {
    Commit(CommitRecord),
    PullRequest(PullRequestRecord),
    Review(ReviewRecord),
    Issue(IssueRecord),
}

impl Event {
    pub fn repo_id(&self) -> &str {
        match self {
            Event::Commit(c) => &c.repo_id,
            Event::PullRequest(p) => &p.repo_id,
            Event::Review(r) => &r.repo_id,
            Event::Issue(i) => &i.repo_id,
        }
    }

    /// The instant used for window filtering.
    pub fn timestamp(&self) -> Timestamp {
        match self {
            Event::Commit(c) => c.timestamp,
            Event::PullRequest(p) => p.created_at,
            Event::Review(r) => r.timestamp,
            Event::Issue(i) => i.created_at,
        }
    }
}

/// One parsed row or archive object. CSV rows carry no actor pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub actor: Option<ActorRef>,
    pub event: Event,
}

impl EventRecord {
    pub fn new(event: Event) -> Self {
        EventRecord { actor: None, event }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActorClass {
    Human,
    Bot,
    Phantom,
}

impl ActorClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            ActorClass::Human => "HUMAN",
            ActorClass::Bot => "BOT",
            ActorClass::Phantom => "PHANTOM",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CanonicalActor {
    /// Lower-cased canonical login, or the unresolved raw token for phantoms.
    pub login: String,
    pub class: ActorClass,
}

impl CanonicalActor {
    pub fn is_human(&self) -> bool {
        self.class == ActorClass::Human
    }
}

/// A record re-keyed by its resolved author.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attributed<T> {
    pub actor: CanonicalActor,
    pub record: T,
}

pub type CanonicalCommit = Attributed<CommitRecord>;
pub type CanonicalPullRequest = Attributed<PullRequestRecord>;
pub type CanonicalIssue = Attributed<IssueRecord>;

/// All four canonical streams after identity resolution.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CanonicalStreams {
    pub commits: Vec<CanonicalCommit>,
    pub pull_requests: Vec<CanonicalPullRequest>,
    pub reviews: Vec<ReviewRecord>,
    pub issues: Vec<CanonicalIssue>,
}

impl CanonicalStreams {
    /// Drop every non-human authored record. Reviews carry no author and are kept.
    pub fn humans_only(&self) -> CanonicalStreams {
        CanonicalStreams {
            commits: self.commits.iter().filter(|c| c.actor.is_human()).cloned().collect(),
            pull_requests: self
                .pull_requests
                .iter()
                .filter(|c| c.actor.is_human())
                .cloned()
                .collect(),
            reviews: self.reviews.clone(),
            issues: self.issues.iter().filter(|c| c.actor.is_human()).cloned().collect(),
        }
    }
}

/// Inclusive observation window in UTC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationWindow {
    pub start: Timestamp,
    pub end: Timestamp,
}

impl Default for ObservationWindow {
    fn default() -> Self {
        ObservationWindow::from_dates(
            NaiveDate::from_ymd_opt(2001, 10, 1).unwrap(),
            NaiveDate::from_ymd_opt(2022, 5, 31).unwrap(),
        )
        .unwrap()
    }
}

impl ObservationWindow {
    /// Window covering `start` 00:00:00 through `end` 23:59:59.
    pub fn from_dates(start: NaiveDate, end: NaiveDate) -> Result<Self, IngestError> {
        if end < start {
            return Err(IngestError::Window(format!("end {end} precedes start {start}")));
        }
        let start = Utc.from_utc_datetime(&start.and_hms_opt(0, 0, 0).unwrap());
        let end = Utc.from_utc_datetime(&end.and_hms_opt(23, 59, 59).unwrap());
        Ok(ObservationWindow { start, end })
    }

    /// Parse `YYYY-MM-DD..YYYY-MM-DD`.
    pub fn parse_range(s: &str) -> Result<Self, IngestError> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| IngestError::Window(format!("expected <start>..<end>, got {s:?}")))?;
        let parse = |d: &str| {
            NaiveDate::parse_from_str(d.trim(), "%Y-%m-%d")
                .map_err(|e| IngestError::Window(format!("{d:?}: {e}")))
        };
        Self::from_dates(parse(a)?, parse(b)?)
    }

    pub fn contains(&self, t: Timestamp) -> bool {
        t >= self.start && t <= self.end
    }

    /// First and last calendar years, dropping a final year the window only covers partially.
    pub fn full_year_range(&self) -> (i32, i32) {
        let last = if self.end.month() == 12 && self.end.day() == 31 {
            self.end.year()
        } else {
            self.end.year() - 1
        };
        (self.start.year(), last)
    }

    pub fn filter(&self, records: Vec<EventRecord>) -> Vec<EventRecord> {
        records.into_iter().filter(|r| self.contains(r.event.timestamp())).collect()
    }
}
