use super::{
    ActorRef, CommitRecord, Event, EventFormat, EventRecord, IngestError, IssueRecord,
    PullRequestRecord, ReviewRecord, ReviewState, Timestamp,
};
use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use serde_json::Value;
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read};

/// Result of parsing one source.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOutcome {
    pub records: Vec<EventRecord>,
    /// Rows or objects that could not be parsed.
    pub skipped: usize,
    /// Well-formed archive objects of an event type we do not use.
    pub ignored: usize,
    pub first_malformed_line: Option<usize>,
}

/// Accepts RFC 3339 as well as the `YYYY-MM-DD HH:MM:SS[ UTC]` export style.
pub fn parse_timestamp(s: &str) -> Option<Timestamp> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    let bare = s.strip_suffix(" UTC").unwrap_or(s);
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(n) = NaiveDateTime::parse_from_str(bare, fmt) {
            return Some(Utc.from_utc_datetime(&n));
        }
    }
    None
}

fn optional_timestamp(s: &str) -> Result<Option<Timestamp>, ()> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("null") || s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    parse_timestamp(s).map(Some).ok_or(())
}

/// Parse one source in the declared format.
///
/// Malformed rows are counted and skipped; if more than half of the rows are
/// malformed the source is rejected as a format mismatch.
pub fn parse_events<R: Read>(source: R, format: EventFormat) -> Result<ParseOutcome, IngestError> {
    let (outcome, total) = match format {
        EventFormat::GharchiveJsonl => parse_jsonl(source)?,
        _ => parse_csv(source, format)?,
    };
    if total > 0 && outcome.skipped * 2 > total {
        return Err(IngestError::FormatMismatch {
            format,
            malformed: outcome.skipped,
            total,
            first_line: outcome.first_malformed_line.unwrap_or(1),
        });
    }
    Ok(outcome)
}

struct Columns {
    index: BTreeMap<String, usize>,
}

impl Columns {
    fn get<'r>(&self, row: &'r csv::StringRecord, name: &str) -> Option<&'r str> {
        self.index.get(name).and_then(|&i| row.get(i)).map(str::trim)
    }
}

fn required_columns(format: EventFormat) -> &'static [&'static str] {
    match format {
        EventFormat::CommitCsv => &["repo_id", "raw_author", "timestamp"],
        EventFormat::PrCsv => &["repo_id", "pr_number", "raw_author", "created_at"],
        EventFormat::ReviewCsv => &["repo_id", "pr_number", "state", "timestamp"],
        EventFormat::IssueCsv => &["repo_id", "issue_number", "raw_author", "created_at", "comment_count"],
        EventFormat::GharchiveJsonl => &[],
    }
}

fn parse_csv<R: Read>(source: R, format: EventFormat) -> Result<(ParseOutcome, usize), IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) => return Err(csv_io(e)),
    };
    let mut out = ParseOutcome::default();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Ok((out, 0));
    }
    let index: BTreeMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_ascii_lowercase(), i))
        .collect();
    if required_columns(format).iter().any(|c| !index.contains_key(*c)) {
        return Err(IngestError::MissingHeader(format));
    }
    let cols = Columns { index };
    let mut total = 0usize;
    let mut row = csv::StringRecord::new();
    loop {
        let line = reader.position().line() as usize;
        match reader.read_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {
                if row.iter().all(|f| f.trim().is_empty()) {
                    continue;
                }
                total += 1;
                match csv_row(&cols, &row, format) {
                    Some(event) => out.records.push(EventRecord::new(event)),
                    None => out.note_malformed(line.max(2)),
                }
            }
            Err(e) if e.is_io_error() => return Err(csv_io(e)),
            Err(_) => {
                total += 1;
                out.note_malformed(line.max(2));
            }
        }
    }
    Ok((out, total))
}

fn csv_io(e: csv::Error) -> IngestError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => IngestError::Io(io),
        other => IngestError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{other:?}"))),
    }
}

impl ParseOutcome {
    fn note_malformed(&mut self, line: usize) {
        self.skipped += 1;
        self.first_malformed_line.get_or_insert(line);
    }
}

fn non_empty(s: Option<&str>) -> Option<String> {
    s.filter(|v| !v.is_empty()).map(str::to_string)
}

fn csv_row(cols: &Columns, row: &csv::StringRecord, format: EventFormat) -> Option<Event> {
    match format {
        EventFormat::CommitCsv => Some(Event::Commit(CommitRecord {
            repo_id: non_empty(cols.get(row, "repo_id"))?,
            raw_author: non_empty(cols.get(row, "raw_author"))?,
            timestamp: parse_timestamp(cols.get(row, "timestamp")?)?,
        })),
        EventFormat::PrCsv => {
            let pr = PullRequestRecord {
                repo_id: non_empty(cols.get(row, "repo_id"))?,
                pr_number: cols.get(row, "pr_number")?.parse().ok().filter(|&n: &u64| n > 0)?,
                raw_author: non_empty(cols.get(row, "raw_author"))?,
                created_at: parse_timestamp(cols.get(row, "created_at")?)?,
                closed_at: optional_timestamp(cols.get(row, "closed_at").unwrap_or("")).ok()?,
                merged_at: optional_timestamp(cols.get(row, "merged_at").unwrap_or("")).ok()?,
            };
            validate_pr(pr).map(Event::PullRequest)
        }
        EventFormat::ReviewCsv => Some(Event::Review(ReviewRecord {
            repo_id: non_empty(cols.get(row, "repo_id"))?,
            pr_number: cols.get(row, "pr_number")?.parse().ok()?,
            state: ReviewState::parse(cols.get(row, "state")?)?,
            timestamp: parse_timestamp(cols.get(row, "timestamp")?)?,
        })),
        EventFormat::IssueCsv => Some(Event::Issue(IssueRecord {
            repo_id: non_empty(cols.get(row, "repo_id"))?,
            issue_number: cols.get(row, "issue_number")?.parse().ok()?,
            raw_author: non_empty(cols.get(row, "raw_author"))?,
            created_at: parse_timestamp(cols.get(row, "created_at")?)?,
            comment_count: cols.get(row, "comment_count")?.parse().ok()?,
        })),
        EventFormat::GharchiveJsonl => None,
    }
}

/// Enforce `merged_at => closed_at` and `merged_at >= created_at`.
fn validate_pr(mut pr: PullRequestRecord) -> Option<PullRequestRecord> {
    if let Some(m) = pr.merged_at {
        if m < pr.created_at {
            return None;
        }
        if pr.closed_at.is_none() {
            pr.closed_at = Some(m);
        }
    }
    if let Some(c) = pr.closed_at {
        if c < pr.created_at {
            return None;
        }
    }
    Some(pr)
}

enum JsonLine {
    Record(EventRecord),
    Ignored,
}

fn parse_jsonl<R: Read>(source: R) -> Result<(ParseOutcome, usize), IngestError> {
    let mut out = ParseOutcome::default();
    let mut total = 0usize;
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let parsed = serde_json::from_str::<Value>(&line).ok().and_then(|v| archive_object(&v));
        match parsed {
            Some(JsonLine::Record(r)) => out.records.push(r),
            Some(JsonLine::Ignored) => out.ignored += 1,
            None => out.note_malformed(i + 1),
        }
    }
    Ok((out, total))
}

fn str_at<'v>(v: &'v Value, path: &[&str]) -> Option<&'v str> {
    path.iter().try_fold(v, |v, k| v.get(k))?.as_str()
}

fn u64_at(v: &Value, path: &[&str]) -> Option<u64> {
    let leaf = path.iter().try_fold(v, |v, k| v.get(k))?;
    leaf.as_u64().or_else(|| leaf.as_str().and_then(|s| s.parse().ok()))
}

fn time_at(v: &Value, path: &[&str]) -> Option<Timestamp> {
    parse_timestamp(str_at(v, path)?)
}

/// `Some(None)` for an explicit null or absent field, `None` for garbage.
fn opt_time_at(v: &Value, path: &[&str]) -> Option<Option<Timestamp>> {
    match path.iter().try_fold(v, |v, k| v.get(k)) {
        None | Some(Value::Null) => Some(None),
        Some(Value::String(s)) => parse_timestamp(s).map(Some),
        Some(_) => None,
    }
}

fn archive_object(v: &Value) -> Option<JsonLine> {
    let kind = v.get("type")?.as_str()?;
    let actor = match v.get("actor") {
        Some(Value::Object(_)) => {
            let login = str_at(v, &["actor", "login"])?.to_string();
            u64_at(v, &["actor", "id"]).map(|id| ActorRef { id, login })
        }
        _ => None,
    };
    let actor_login = str_at(v, &["actor", "login"])
        .or_else(|| v.get("actor").and_then(Value::as_str))
        .map(str::to_string);
    let repo = str_at(v, &["repo", "name"])?.to_string();
    let created = time_at(v, &["created_at"]);
    let payload = v.get("payload")?;
    let event = match kind {
        "PushEvent" => Event::Commit(CommitRecord {
            repo_id: repo,
            raw_author: actor_login?,
            timestamp: created?,
        }),
        "PullRequestEvent" => {
            let pr = payload.get("pull_request")?;
            let number = u64_at(payload, &["number"]).or_else(|| u64_at(pr, &["number"]))?;
            let author = str_at(pr, &["user", "login"]).map(str::to_string).or(actor_login)?;
            let rec = PullRequestRecord {
                repo_id: repo,
                pr_number: number,
                raw_author: author,
                created_at: time_at(pr, &["created_at"]).or(created)?,
                closed_at: opt_time_at(pr, &["closed_at"])?,
                merged_at: opt_time_at(pr, &["merged_at"])?,
            };
            Event::PullRequest(validate_pr(rec)?)
        }
        "PullRequestReviewEvent" => {
            let number = u64_at(payload, &["pull_request", "number"])?;
            let state = ReviewState::parse(str_at(payload, &["review", "state"])?)?;
            let at = time_at(payload, &["review", "submitted_at"]).or(created)?;
            Event::Review(ReviewRecord { repo_id: repo, pr_number: number, state, timestamp: at })
        }
        "IssuesEvent" | "IssueCommentEvent" => {
            let issue = payload.get("issue")?;
            Event::Issue(IssueRecord {
                repo_id: repo,
                issue_number: u64_at(issue, &["number"])?,
                raw_author: str_at(issue, &["user", "login"]).map(str::to_string).or(actor_login)?,
                created_at: time_at(issue, &["created_at"]).or(created)?,
                comment_count: u64_at(issue, &["comments"]).unwrap_or(0),
            })
        }
        _ => return Some(JsonLine::Ignored),
    };
    Some(JsonLine::Record(EventRecord { actor, event }))
}

/// Collapse repeated PR events to one record per `(repo_id, pr_number)`:
/// earliest creation, latest close, any merge.
pub fn dedup_pull_requests(prs: impl IntoIterator<Item = PullRequestRecord>) -> Vec<PullRequestRecord> {
    let mut by_key: BTreeMap<(String, u64), PullRequestRecord> = BTreeMap::new();
    for pr in prs {
        let key = (pr.repo_id.clone(), pr.pr_number);
        match by_key.get_mut(&key) {
            None => {
                by_key.insert(key, pr);
            }
            Some(seen) => {
                if pr.created_at < seen.created_at {
                    seen.created_at = pr.created_at;
                    seen.raw_author = pr.raw_author;
                }
                seen.closed_at = seen.closed_at.max(pr.closed_at);
                seen.merged_at = match (seen.merged_at, pr.merged_at) {
                    (Some(a), Some(b)) => Some(a.max(b)),
                    (a, b) => a.or(b),
                };
                if let (Some(m), Some(c)) = (seen.merged_at, seen.closed_at) {
                    if c < m {
                        seen.closed_at = Some(m);
                    }
                }
            }
        }
    }
    by_key.into_values().collect()
}

/// One record per `(repo_id, issue_number)`, keeping the largest comment count.
pub fn dedup_issues(issues: impl IntoIterator<Item = IssueRecord>) -> Vec<IssueRecord> {
    let mut by_key: BTreeMap<(String, u64), IssueRecord> = BTreeMap::new();
    for issue in issues {
        let key = (issue.repo_id.clone(), issue.issue_number);
        match by_key.get_mut(&key) {
            None => {
                by_key.insert(key, issue);
            }
            Some(seen) => {
                seen.comment_count = seen.comment_count.max(issue.comment_count);
                if issue.created_at < seen.created_at {
                    seen.created_at = issue.created_at;
                    seen.raw_author = issue.raw_author;
                }
            }
        }
    }
    by_key.into_values().collect()
}
