use super::{
    ActorClass, Attributed, CanonicalActor, CanonicalStreams, Event, EventRecord,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Known automation accounts excluded in addition to any `*[bot]` login.
pub const DEFAULT_BOTS: &[&str] = &[
    "dependabot[bot]",
    "dependabot-preview[bot]",
    "renovate[bot]",
    "github-actions[bot]",
    "allcontributors[bot]",
    "deepsource-autofix[bot]",
    "imgbot[bot]",
    "mergify[bot]",
    "pre-commit-ci[bot]",
    "whitesource-bolt-for-github[bot]",
    "gitter-badger",
];

/// Generic git identities that conflate many people.
pub const DEFAULT_PLACEHOLDERS: &[&str] = &["root", "admin", "git", "user"];

/// Functional `actor_id -> login` table. Logins are stored lower-cased.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityMap {
    pub id_to_login: BTreeMap<u64, String>,
    pub login_set: BTreeSet<String>,
}

impl IdentityMap {
    pub fn login_for(&self, id: u64) -> Option<&str> {
        self.id_to_login.get(&id).map(String::as_str)
    }

    pub fn knows_login(&self, login: &str) -> bool {
        self.login_set.contains(&login.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.id_to_login.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_login.is_empty()
    }
}

/// Curated exclusion lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityRules {
    pub bots: BTreeSet<String>,
    pub placeholders: BTreeSet<String>,
}

impl Default for IdentityRules {
    fn default() -> Self {
        IdentityRules::new(DEFAULT_BOTS.iter().copied(), DEFAULT_PLACEHOLDERS.iter().copied())
    }
}

impl IdentityRules {
    pub fn new<'a>(
        bots: impl IntoIterator<Item = &'a str>,
        placeholders: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        IdentityRules {
            bots: bots.into_iter().map(str::to_lowercase).collect(),
            placeholders: placeholders.into_iter().map(str::to_lowercase).collect(),
        }
    }

    fn is_bot(&self, login: &str) -> bool {
        login.ends_with("[bot]") || self.bots.contains(login)
    }
}

/// Per-class counts of distinct canonical identities and of records.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub human: usize,
    pub bot: usize,
    pub phantom: usize,
    /// Humans whose login string never appeared in the archive actor table.
    pub unknown_logins: usize,
    pub records_by_class: BTreeMap<ActorClass, usize>,
}

impl Census {
    pub fn distinct_identities(&self) -> usize {
        self.human + self.bot + self.phantom
    }
}

/// Majority login per actor id; ties go to the lexicographically smallest login.
pub fn build_identity_map(archive_events: &[EventRecord]) -> IdentityMap {
    let mut seen: BTreeMap<u64, BTreeMap<String, usize>> = BTreeMap::new();
    let mut login_set = BTreeSet::new();
    for actor in archive_events.iter().filter_map(|r| r.actor.as_ref()) {
        let login = actor.login.to_lowercase();
        *seen.entry(actor.id).or_default().entry(login.clone()).or_insert(0) += 1;
        login_set.insert(login);
    }
    let id_to_login = seen
        .into_iter()
        .map(|(id, logins)| {
            // BTreeMap iterates logins in ascending order, so the first maximum wins ties.
            let mut best: Option<(&String, usize)> = None;
            for (login, &n) in &logins {
                if best.is_none_or(|(_, m)| n > m) {
                    best = Some((login, n));
                }
            }
            (id, best.expect("non-empty").0.clone())
        })
        .collect();
    IdentityMap { id_to_login, login_set }
}

fn is_numeric_token(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Resolve one raw author token.
pub fn classify_token(raw: &str, map: &IdentityMap, rules: &IdentityRules) -> CanonicalActor {
    let token = raw.trim().to_lowercase();
    let login = if is_numeric_token(&token) && !map.login_set.contains(&token) {
        match token.parse::<u64>().ok().and_then(|id| map.login_for(id)) {
            Some(login) => login.to_string(),
            None => return CanonicalActor { login: token, class: ActorClass::Phantom },
        }
    } else {
        token
    };
    let class = if rules.is_bot(&login) {
        ActorClass::Bot
    } else if rules.placeholders.contains(&login) {
        ActorClass::Phantom
    } else {
        ActorClass::Human
    };
    CanonicalActor { login, class }
}

/// Re-key every authored record by its canonical actor and tally the census.
/// The returned streams retain all classes; use
/// [`CanonicalStreams::humans_only`] for human-only analyses.
pub fn canonicalize_actors(
    records: &[EventRecord],
    map: &IdentityMap,
    rules: &IdentityRules,
) -> (CanonicalStreams, Census) {
    let mut streams = CanonicalStreams::default();
    let mut identities: BTreeMap<String, ActorClass> = BTreeMap::new();
    let mut census = Census::default();
    let mut resolve = |raw: &str, census: &mut Census| {
        let actor = classify_token(raw, map, rules);
        identities.insert(actor.login.clone(), actor.class);
        *census.records_by_class.entry(actor.class).or_insert(0) += 1;
        actor
    };
    for rec in records {
        match &rec.event {
            Event::Commit(c) => {
                let actor = resolve(&c.raw_author, &mut census);
                streams.commits.push(Attributed { actor, record: c.clone() });
            }
            Event::PullRequest(p) => {
                let actor = resolve(&p.raw_author, &mut census);
                streams.pull_requests.push(Attributed { actor, record: p.clone() });
            }
            Event::Issue(i) => {
                let actor = resolve(&i.raw_author, &mut census);
                streams.issues.push(Attributed { actor, record: i.clone() });
            }
            Event::Review(r) => streams.reviews.push(r.clone()),
        }
    }
    for (login, class) in &identities {
        match class {
            ActorClass::Human => {
                census.human += 1;
                if !map.login_set.contains(login) {
                    census.unknown_logins += 1;
                }
            }
            ActorClass::Bot => census.bot += 1,
            ActorClass::Phantom => census.phantom += 1,
        }
    }
    (streams, census)
}

/// Convenience wrapper for already-typed streams.
pub fn canonicalize_streams(
    streams: &CanonicalStreams,
    map: &IdentityMap,
    rules: &IdentityRules,
) -> (CanonicalStreams, Census) {
    canonicalize_actors(&streams.to_event_records(), map, rules)
}

impl CanonicalStreams {
    /// Back to raw records, with each author token replaced by its canonical login.
    pub fn to_event_records(&self) -> Vec<EventRecord> {
        let mut out = Vec::new();
        for c in &self.commits {
            let mut r = c.record.clone();
            r.raw_author = c.actor.login.clone();
            out.push(EventRecord::new(Event::Commit(r)));
        }
        for p in &self.pull_requests {
            let mut r = p.record.clone();
            r.raw_author = p.actor.login.clone();
            out.push(EventRecord::new(Event::PullRequest(r)));
        }
        for r in &self.reviews {
            out.push(EventRecord::new(Event::Review(r.clone())));
        }
        for i in &self.issues {
            let mut r = i.record.clone();
            r.raw_author = i.actor.login.clone();
            out.push(EventRecord::new(Event::Issue(r)));
        }
        out
    }
}
