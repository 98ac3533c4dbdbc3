use super::{Outcome, PrDepthRecord, Stratum};
use crate::ingest::{CanonicalCommit, CanonicalIssue, Timestamp};
use crate::stats::{
    chi_square_2x2, fisher_exact, mann_whitney_u, mean, quantile_sorted, wilson_ci, ChiSquareResult, FisherResult,
    IntervalEstimate, MannWhitney,
};
use chrono::Duration;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const DEFAULT_RETENTION_DAYS: i64 = 180;

fn wilson(successes: u64, n: u64) -> Option<IntervalEstimate> {
    wilson_ci(successes, n, 0.95).ok()
}

/// `(q1, median, q3)` of an unsorted sample.
fn quartiles(xs: &mut [f64]) -> Option<(f64, f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    Some((quantile_sorted(xs, 0.25), quantile_sorted(xs, 0.5), quantile_sorted(xs, 0.75)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceSlice {
    pub stratum: Stratum,
    pub merged: u64,
    pub rejected: u64,
    /// `None` for an empty stratum.
    pub acceptance: Option<IntervalEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceTable {
    pub intra: AcceptanceSlice,
    pub inter: AcceptanceSlice,
    /// Intra minus inter acceptance, in percentage points.
    pub gap_pp: Option<f64>,
    pub test: Option<ChiSquareResult>,
}

pub fn acceptance_table(prs: &[PrDepthRecord]) -> AcceptanceTable {
    let slice = |stratum: Stratum| {
        let (mut merged, mut rejected) = (0u64, 0u64);
        for p in prs.iter().filter(|p| p.stratum() == stratum) {
            match p.outcome {
                Outcome::Merged => merged += 1,
                Outcome::Rejected => rejected += 1,
            }
        }
        AcceptanceSlice { stratum, merged, rejected, acceptance: wilson(merged, merged + rejected) }
    };
    let (intra, inter) = (slice(Stratum::Intra), slice(Stratum::Inter));
    let gap_pp = intra.acceptance.zip(inter.acceptance).map(|(a, b)| 100.0 * (a.point - b.point));
    let test = gap_pp.map(|_| {
        let t = [intra.merged, intra.rejected, inter.merged, inter.rejected];
        // A zero margin (e.g. everything merged) carries no evidence of a difference.
        chi_square_2x2(t).unwrap_or(ChiSquareResult { statistic: 0.0, p_value: 1.0 })
    });
    AcceptanceTable { intra, inter, gap_pp, test }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyCell {
    pub stratum: Stratum,
    pub outcome: Outcome,
    pub n: usize,
    pub median_hours: Option<f64>,
    pub q1_hours: Option<f64>,
    pub q3_hours: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyComparison {
    pub outcome: Outcome,
    /// Intra sample first.
    pub mann_whitney: Option<MannWhitney>,
    /// Inter median over intra median.
    pub median_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyTable {
    pub cells: Vec<LatencyCell>,
    pub comparisons: Vec<LatencyComparison>,
}

pub fn latency_table(prs: &[PrDepthRecord]) -> LatencyTable {
    let mut cells = Vec::new();
    let mut comparisons = Vec::new();
    for outcome in [Outcome::Merged, Outcome::Rejected] {
        let sample = |s: Stratum| -> Vec<f64> {
            prs.iter().filter(|p| p.outcome == outcome && p.stratum() == s).map(|p| p.turnaround_hours).collect()
        };
        let (intra, inter) = (sample(Stratum::Intra), sample(Stratum::Inter));
        let mut medians = [None, None];
        for (i, (stratum, xs)) in [(Stratum::Intra, &intra), (Stratum::Inter, &inter)].into_iter().enumerate() {
            let q = quartiles(&mut xs.clone());
            medians[i] = q.map(|q| q.1);
            cells.push(LatencyCell {
                stratum,
                outcome,
                n: xs.len(),
                median_hours: q.map(|q| q.1),
                q1_hours: q.map(|q| q.0),
                q3_hours: q.map(|q| q.2),
            });
        }
        comparisons.push(LatencyComparison {
            outcome,
            mann_whitney: mann_whitney_u(&intra, &inter).ok(),
            median_ratio: match medians {
                [Some(a), Some(b)] if a > 0.0 => Some(b / a),
                _ => None,
            },
        });
    }
    LatencyTable { cells, comparisons }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewMixCell {
    pub stratum: Stratum,
    /// Merged PRs with at least one review event.
    pub n: u64,
    pub with_changes_requested: u64,
    pub share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewMixTable {
    pub intra: ReviewMixCell,
    pub inter: ReviewMixCell,
    /// Rows intra then inter, columns with then without a change request.
    pub fisher: Option<FisherResult>,
    pub diagnostics: Vec<String>,
}

pub fn review_mix_table(prs: &[PrDepthRecord]) -> ReviewMixTable {
    let cell = |stratum: Stratum| {
        let reviewed = prs.iter().filter(|p| p.stratum() == stratum && p.outcome == Outcome::Merged && p.review_count > 0);
        let (mut n, mut cr) = (0u64, 0u64);
        for p in reviewed {
            n += 1;
            cr += u64::from(p.had_changes_requested);
        }
        ReviewMixCell { stratum, n, with_changes_requested: cr, share: (n > 0).then(|| cr as f64 / n as f64) }
    };
    let (intra, inter) = (cell(Stratum::Intra), cell(Stratum::Inter));
    let mut diagnostics = Vec::new();
    let fisher = if intra.n + inter.n == 0 {
        diagnostics.push("no reviewed merged pull requests; review mix skipped".to_string());
        None
    } else {
        let t = [
            intra.with_changes_requested,
            intra.n - intra.with_changes_requested,
            inter.with_changes_requested,
            inter.n - inter.with_changes_requested,
        ];
        match fisher_exact(t) {
            Ok(f) => {
                if f.odds_ratio.is_none() {
                    diagnostics.push("odds ratio undefined (zero cell)".to_string());
                }
                Some(f)
            }
            Err(e) => {
                diagnostics.push(format!("fisher test undefined: {e}"));
                None
            }
        }
    };
    ReviewMixTable { intra, inter, fisher, diagnostics }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueCell {
    pub stratum: Stratum,
    pub n: usize,
    pub median_comments: Option<f64>,
    pub mean_comments: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueDepthTable {
    pub intra: IssueCell,
    pub inter: IssueCell,
    pub mann_whitney: Option<MannWhitney>,
    /// Issues whose author has no home or whose repository has no community.
    pub excluded: usize,
}

pub fn issue_depth_table(
    issues: &[CanonicalIssue],
    home: &BTreeMap<String, usize>,
    repo_community: &BTreeMap<String, usize>,
) -> IssueDepthTable {
    let mut samples: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut excluded = 0;
    for i in issues {
        match (home.get(&i.actor.login), repo_community.get(&i.record.repo_id)) {
            (Some(h), Some(c)) => samples[usize::from(h != c)].push(i.record.comment_count as f64),
            _ => excluded += 1,
        }
    }
    let cell = |stratum: Stratum, xs: &[f64]| IssueCell {
        stratum,
        n: xs.len(),
        median_comments: quartiles(&mut xs.to_vec()).map(|q| q.1),
        mean_comments: (!xs.is_empty()).then(|| mean(xs)),
    };
    IssueDepthTable {
        intra: cell(Stratum::Intra, &samples[0]),
        inter: cell(Stratum::Inter, &samples[1]),
        mann_whitney: mann_whitney_u(&samples[0], &samples[1]).ok(),
        excluded,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionCell {
    pub stratum: Stratum,
    /// Author-community pairs whose follow-up window closes inside the data.
    pub n: u64,
    pub retained: u64,
    pub rate: Option<IntervalEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionTable {
    pub window_days: i64,
    pub intra: RetentionCell,
    pub inter: RetentionCell,
    /// Pairs whose first PR falls within the window of the data end.
    pub excluded_late: u64,
}

/// For each (author, recipient community) pair, whether the author commits
/// or opens another PR there within `window_days` after their first PR there.
pub fn retention_table(
    prs: &[PrDepthRecord],
    commits: &[CanonicalCommit],
    repo_community: &BTreeMap<String, usize>,
    data_end: Timestamp,
    window_days: i64,
) -> RetentionTable {
    let mut first: BTreeMap<(&str, usize), (Timestamp, Stratum)> = BTreeMap::new();
    let mut activity: BTreeMap<(&str, usize), Vec<Timestamp>> = BTreeMap::new();
    for p in prs {
        let key = (p.author.as_str(), p.repo_community);
        first
            .entry(key)
            .and_modify(|e| {
                if p.created_at < e.0 {
                    *e = (p.created_at, p.stratum());
                }
            })
            .or_insert((p.created_at, p.stratum()));
        activity.entry(key).or_default().push(p.created_at);
    }
    for c in commits {
        if let Some(&comm) = repo_community.get(&c.record.repo_id) {
            if let Some(v) = activity.get_mut(&(c.actor.login.as_str(), comm)) {
                v.push(c.record.timestamp);
            }
        }
    }
    let window = Duration::days(window_days);
    let mut tallies = [(0u64, 0u64); 2];
    let mut excluded_late = 0;
    for (key, (t0, stratum)) in &first {
        if *t0 + window > data_end {
            excluded_late += 1;
            continue;
        }
        let back = activity[key].iter().any(|t| t > t0 && *t <= *t0 + window);
        let cell = &mut tallies[usize::from(*stratum == Stratum::Inter)];
        cell.0 += 1;
        cell.1 += u64::from(back);
    }
    let cell = |stratum: Stratum, (n, retained): (u64, u64)| RetentionCell { stratum, n, retained, rate: wilson(retained, n) };
    RetentionTable {
        window_days,
        intra: cell(Stratum::Intra, tallies[0]),
        inter: cell(Stratum::Inter, tallies[1]),
        excluded_late,
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::{at, commit, record};
    use super::*;
    use crate::ingest::{ActorClass, Attributed, CanonicalActor, IssueRecord};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, LogNormal};

    #[test]
    fn all_merged_has_no_signal() {
        let prs: Vec<PrDepthRecord> = Stratum::BOTH.iter().flat_map(|&s| (0..5).map(move |_| record(s, Outcome::Merged, 1.0))).collect();
        let t = acceptance_table(&prs);
        assert_eq!(t.gap_pp, Some(0.0));
        assert_eq!(t.test.unwrap().statistic, 0.0);
    }

    #[test]
    fn empty_stratum_skips_test() {
        let t = acceptance_table(&[record(Stratum::Intra, Outcome::Merged, 1.0)]);
        assert!(t.inter.acceptance.is_none());
        assert!(t.test.is_none());
    }

    #[test]
    fn planted_acceptance_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut prs = Vec::new();
        for (s, rate) in [(Stratum::Intra, 0.8), (Stratum::Inter, 0.6)] {
            for _ in 0..1000 {
                let o = if rng.random_bool(rate) { Outcome::Merged } else { Outcome::Rejected };
                prs.push(record(s, o, 1.0));
            }
        }
        let t = acceptance_table(&prs);
        assert!(t.intra.acceptance.unwrap().contains(0.8));
        assert!(t.inter.acceptance.unwrap().contains(0.6));
        assert!(t.test.unwrap().p_value < 1e-10);
    }

    #[test]
    fn latency_ratio_under_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = LogNormal::new(20f64.ln(), 1.0).unwrap();
        let mut prs = Vec::new();
        for _ in 0..4000 {
            let x = base.sample(&mut rng);
            prs.push(record(Stratum::Intra, Outcome::Rejected, x));
            prs.push(record(Stratum::Inter, Outcome::Rejected, 2.0 * base.sample(&mut rng)));
        }
        let t = latency_table(&prs);
        let r = t.comparisons.iter().find(|c| c.outcome == Outcome::Rejected).unwrap();
        assert!((r.median_ratio.unwrap() / 2.0 - 1.0).abs() < 0.1);
        assert!(r.mann_whitney.unwrap().p_value < 1e-6);
        let same: Vec<PrDepthRecord> =
            Stratum::BOTH.iter().flat_map(|&s| [1.0, 2.0, 3.0].map(|h| record(s, Outcome::Merged, h))).collect();
        assert_eq!(latency_table(&same).comparisons[0].median_ratio, Some(1.0));
    }

    #[test]
    fn review_mix_zero_cells_flagged() {
        let mut prs: Vec<PrDepthRecord> =
            Stratum::BOTH.iter().flat_map(|&s| (0..4).map(move |_| record(s, Outcome::Merged, 1.0))).collect();
        prs.iter_mut().for_each(|p| p.review_count = 1);
        let t = review_mix_table(&prs);
        assert_eq!(t.intra.share, Some(0.0));
        assert_eq!(t.inter.share, Some(0.0));
        assert!(!t.diagnostics.is_empty());
        assert!(t.fisher.is_none_or(|f| f.odds_ratio.is_none()));
        assert!(!review_mix_table(&[]).diagnostics.is_empty());
    }

    #[test]
    fn review_mix_planted_odds_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut prs = Vec::new();
        for (s, p, n) in [(Stratum::Intra, 0.13, 40000), (Stratum::Inter, 0.083, 40000)] {
            for _ in 0..n {
                let mut r = record(s, Outcome::Merged, 1.0);
                r.review_count = 1;
                r.had_changes_requested = rng.random_bool(p);
                prs.push(r);
            }
        }
        let or = review_mix_table(&prs).fisher.unwrap().odds_ratio.unwrap();
        let planted = (0.13 / 0.87) / (0.083 / 0.917);
        assert!((or / planted - 1.0).abs() < 0.08, "{or} vs {planted}");
    }

    fn issue(login: &str, repo: &str, comments: u64) -> CanonicalIssue {
        Attributed {
            actor: CanonicalActor { login: login.into(), class: ActorClass::Human },
            record: IssueRecord {
                repo_id: repo.into(),
                issue_number: 1,
                raw_author: login.into(),
                created_at: at(0),
                comment_count: comments,
            },
        }
    }

    #[test]
    fn issue_depth_strata() {
        let home: BTreeMap<String, usize> = [("x".to_string(), 0)].into();
        let comm: BTreeMap<String, usize> = [("ra".to_string(), 0), ("rb".to_string(), 1)].into();
        let t = issue_depth_table(
            &[issue("x", "ra", 0), issue("x", "ra", 0), issue("x", "rb", 4), issue("x", "rb", 2), issue("q", "ra", 9)],
            &home,
            &comm,
        );
        assert_eq!(t.intra.median_comments, Some(0.0));
        assert_eq!(t.inter.mean_comments, Some(3.0));
        assert_eq!(t.excluded, 1);
    }

    #[test]
    fn retention_definitions() {
        let comm: BTreeMap<String, usize> = [("ra".to_string(), 0), ("rb".to_string(), 1)].into();
        let mut a = record(Stratum::Inter, Outcome::Merged, 1.0);
        a.author = "x".into();
        a.created_at = at(0);
        let mut b = a.clone();
        b.author = "y".into();
        let mut late = a.clone();
        late.author = "z".into();
        late.created_at = at(900);
        let commits = [commit("x", "rb", 10), commit("y", "rb", 400), commit("y", "ra", 5)];
        let t = retention_table(&[a, b, late], &commits, &comm, at(1000), 180);
        assert_eq!((t.inter.n, t.inter.retained, t.excluded_late), (2, 1, 1));
    }

    #[test]
    fn planted_retention_recovered() {
        let comm: BTreeMap<String, usize> = [("rb".to_string(), 1)].into();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut prs = Vec::new();
        let mut commits = Vec::new();
        for i in 0..2000 {
            let mut r = record(Stratum::Inter, Outcome::Merged, 1.0);
            r.author = format!("u{i}");
            prs.push(r);
            if rng.random_bool(0.4) {
                commits.push(commit(&format!("u{i}"), "rb", rng.random_range(1..180)));
            }
        }
        let t = retention_table(&prs, &commits, &comm, at(2000), 180);
        assert!(t.inter.rate.unwrap().contains(0.4));
    }

    proptest! {
        #[test]
        fn strata_partition_and_bounds(cells in proptest::collection::vec((any::<bool>(), any::<bool>(), 0.0f64..100.0), 0..60)) {
            let prs: Vec<PrDepthRecord> = cells.iter().map(|&(inter, merged, h)| record(
                if inter { Stratum::Inter } else { Stratum::Intra },
                if merged { Outcome::Merged } else { Outcome::Rejected }, h)).collect();
            let t = acceptance_table(&prs);
            prop_assert_eq!(t.intra.merged + t.intra.rejected + t.inter.merged + t.inter.rejected, prs.len() as u64);
            for s in [&t.intra, &t.inter] {
                if let Some(a) = s.acceptance {
                    prop_assert!((0.0..=1.0).contains(&a.point) && a.contains(a.point));
                }
            }
            let l = latency_table(&prs);
            prop_assert_eq!(l.cells.iter().map(|c| c.n).sum::<usize>(), prs.len());
            for c in &l.cells {
                if let (Some(a), Some(m), Some(b)) = (c.q1_hours, c.median_hours, c.q3_hours) {
                    prop_assert!(a <= m && m <= b);
                }
            }
        }
    }
}
