//! Contributor breadth: how many communities each contributor commits to,
//! the two-regime shape of that distribution, and the carrier layer above the
//! breakpoint.

mod kde;
mod powerlaw;
mod regimes;

pub use kde::{abramson_kde, abramson_kde_raw, Kde, KDE_GRID_POINTS};
pub use powerlaw::{discrete_powerlaw_mle, hurwitz_zeta, powerlaw_alpha, PowerLawFit};
pub use regimes::{breakpoint_scan_fit, RegimeFit, ScanEntry, DEFAULT_DISTINCTNESS};

use crate::ingest::CanonicalCommit;
use crate::stats::{self, OlsFit, StatsError};
use chrono::Datelike;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

pub const CCDF_LOG_BINS: usize = 8;
pub const SPLIT_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BreadthError {
    #[error("repository {0} has no community assignment")]
    Coverage(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate bandwidth: all observations identical")]
    DegenerateBandwidth,
    #[error("no eligible breakpoint candidate among {} scanned", scan.len())]
    ScanInfeasible { scan: Vec<ScanEntry> },
    #[error("only {n} observations at or above k_min={k_min}; need 50")]
    InsufficientTail { n: usize, k_min: u64 },
    #[error("likelihood unbounded: {0}")]
    Unbounded(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcdfPoint {
    /// Geometric mean of the distinct k values in the bin.
    pub k_geo_mean: f64,
    /// Smallest k in the bin, where the CCDF is evaluated.
    pub k_low: usize,
    pub ccdf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreadthProfile {
    pub per_contributor_k: BTreeMap<String, usize>,
    pub counts: BTreeMap<usize, u64>,
    pub pmf: BTreeMap<usize, f64>,
    pub ccdf_logbinned: Vec<CcdfPoint>,
    pub n_total: usize,
}

impl BreadthProfile {
    /// P(X >= k) from the exact counts.
    pub fn ccdf_at(&self, k: usize) -> f64 {
        self.counts.range(k..).map(|(_, &c)| c).sum::<u64>() as f64 / self.n_total as f64
    }

    pub fn ks(&self) -> Vec<usize> {
        self.per_contributor_k.values().copied().collect()
    }
}

fn community_of<'a>(repo_community: &'a BTreeMap<String, usize>, repo: &str) -> Result<&'a usize, BreadthError> {
    repo_community.get(repo).ok_or_else(|| BreadthError::Coverage(repo.to_string()))
}

/// Breadth k per contributor with the empirical PMF and a log-binned CCDF.
pub fn compute_breadth_profile(
    commits: &[CanonicalCommit],
    repo_community: &BTreeMap<String, usize>,
) -> Result<BreadthProfile, BreadthError> {
    let mut touched: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for c in commits {
        let comm = *community_of(repo_community, &c.record.repo_id)?;
        touched.entry(c.actor.login.as_str()).or_default().insert(comm);
    }
    let per_contributor_k: BTreeMap<String, usize> =
        touched.into_iter().map(|(login, set)| (login.to_string(), set.len())).collect();
    Ok(profile_from_ks(per_contributor_k))
}

/// Builds the distributional summaries from a ready k map.
pub fn profile_from_ks(per_contributor_k: BTreeMap<String, usize>) -> BreadthProfile {
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    for &k in per_contributor_k.values() {
        *counts.entry(k).or_insert(0) += 1;
    }
    let n_total = per_contributor_k.len();
    let pmf = counts.iter().map(|(&k, &c)| (k, c as f64 / n_total as f64)).collect();
    let mut profile = BreadthProfile { per_contributor_k, counts, pmf, ccdf_logbinned: Vec::new(), n_total };
    profile.ccdf_logbinned = log_binned_ccdf(&profile);
    profile
}

fn log_binned_ccdf(p: &BreadthProfile) -> Vec<CcdfPoint> {
    let (Some(&kmin), Some(&kmax)) = (p.counts.keys().next(), p.counts.keys().next_back()) else {
        return Vec::new();
    };
    let (lo, hi) = ((kmin as f64).log10(), (kmax as f64).log10());
    let width = (hi - lo) / CCDF_LOG_BINS as f64;
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); CCDF_LOG_BINS];
    for &k in p.counts.keys() {
        let b = if width > 0.0 { (((k as f64).log10() - lo) / width).floor() as usize } else { 0 };
        bins[b.min(CCDF_LOG_BINS - 1)].push(k);
    }
    bins.into_iter()
        .filter(|b| !b.is_empty())
        .map(|b| {
            let geo = (b.iter().map(|&k| (k as f64).ln()).sum::<f64>() / b.len() as f64).exp();
            CcdfPoint { k_geo_mean: geo, k_low: b[0], ccdf: p.ccdf_at(b[0]) }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Carrier {
    pub login: String,
    pub k: usize,
}

/// Contributors with k >= k_star, by k descending then login.
pub fn carrier_layer(profile: &BreadthProfile, k_star: usize) -> Vec<Carrier> {
    let mut out: Vec<Carrier> = profile
        .per_contributor_k
        .iter()
        .filter(|(_, &k)| k >= k_star)
        .map(|(l, &k)| Carrier { login: l.clone(), k })
        .collect();
    out.sort_by(|a, b| b.k.cmp(&a.k).then_with(|| a.login.cmp(&b.login)));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub home_community: usize,
    pub n_intra: u64,
    pub n_inter: u64,
    /// Year of the first commit inside the home community.
    pub first_year: i32,
    pub k: usize,
}

impl SplitEntry {
    pub fn inter_share(&self) -> f64 {
        self.n_inter as f64 / (self.n_intra + self.n_inter) as f64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommitSplit {
    pub per_contributor: BTreeMap<String, SplitEntry>,
}

impl CommitSplit {
    pub fn home_map(&self) -> BTreeMap<String, usize> {
        self.per_contributor.iter().map(|(l, e)| (l.clone(), e.home_community)).collect()
    }
}

/// Intra/inter commit counts around each contributor's home community: the
/// modal community by commits, ties to the community holding the earliest
/// commit, then to the smallest id.
pub fn commit_split(
    commits: &[CanonicalCommit],
    repo_community: &BTreeMap<String, usize>,
) -> Result<CommitSplit, BreadthError> {
    struct Acc {
        n: u64,
        first: crate::ingest::Timestamp,
    }
    let mut per: BTreeMap<&str, BTreeMap<usize, Acc>> = BTreeMap::new();
    for c in commits {
        let comm = *community_of(repo_community, &c.record.repo_id)?;
        let t = c.record.timestamp;
        per.entry(c.actor.login.as_str())
            .or_default()
            .entry(comm)
            .and_modify(|a| {
                a.n += 1;
                a.first = a.first.min(t);
            })
            .or_insert(Acc { n: 1, first: t });
    }
    let per_contributor = per
        .into_iter()
        .map(|(login, comms)| {
            let (&home, acc) = comms
                .iter()
                .max_by(|(ca, a), (cb, b)| a.n.cmp(&b.n).then(b.first.cmp(&a.first)).then(cb.cmp(ca)))
                .expect("at least one community");
            let total: u64 = comms.values().map(|a| a.n).sum();
            let entry = SplitEntry {
                home_community: home,
                n_intra: acc.n,
                n_inter: total - acc.n,
                first_year: acc.first.year(),
                k: comms.len(),
            };
            (login.to_string(), entry)
        })
        .collect();
    Ok(CommitSplit { per_contributor })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAnalysis {
    pub carrier_fit: Option<OlsFit>,
    pub binned_median_fit: Option<OlsFit>,
    pub median_inter_share: Option<f64>,
    pub n_multi: usize,
    pub diagnostics: Vec<String>,
}

/// Sublinear scaling of inter on intra commits, over the carrier layer and over
/// per-bin medians of every multi-community contributor.
pub fn commit_split_analysis(split: &CommitSplit, carriers: &[Carrier]) -> SplitAnalysis {
    let mut diagnostics = Vec::new();
    let carrier_set: BTreeSet<&str> = carriers.iter().map(|c| c.login.as_str()).collect();
    let (cx, cy): (Vec<f64>, Vec<f64>) = split
        .per_contributor
        .iter()
        .filter(|(l, e)| carrier_set.contains(l.as_str()) && e.n_inter > 0)
        .map(|(_, e)| (e.n_intra as f64, e.n_inter as f64))
        .unzip();
    let carrier_fit = match stats::ols_loglog(&cx, &cy) {
        Ok(f) => Some(f),
        Err(e) => {
            diagnostics.push(format!("carrier fit skipped: {e}"));
            None
        }
    };
    let multi: Vec<&SplitEntry> = split.per_contributor.values().filter(|e| e.k >= 2).collect();
    let binned_median_fit = match binned_medians(&multi) {
        Ok((xs, ys)) => match stats::ols_loglog(&xs, &ys) {
            Ok(f) => Some(f),
            Err(e) => {
                diagnostics.push(format!("binned median fit skipped: {e}"));
                None
            }
        },
        Err(e) => {
            diagnostics.push(format!("binned median fit skipped: {e}"));
            None
        }
    };
    let shares: Vec<f64> = multi.iter().map(|e| e.inter_share()).collect();
    let median_inter_share = stats::median(&shares).ok();
    if median_inter_share.is_none() {
        diagnostics.push("no multi-community contributors".into());
    }
    SplitAnalysis { carrier_fit, binned_median_fit, median_inter_share, n_multi: multi.len(), diagnostics }
}

/// Median (n_intra, n_inter) within each non-empty log-spaced n_intra bin.
fn binned_medians(multi: &[&SplitEntry]) -> Result<(Vec<f64>, Vec<f64>), StatsError> {
    let pts: Vec<(f64, f64)> = multi
        .iter()
        .filter(|e| e.n_intra > 0 && e.n_inter > 0)
        .map(|e| (e.n_intra as f64, e.n_inter as f64))
        .collect();
    if pts.len() < 3 {
        return Err(StatsError::InsufficientData { needed: 3, got: pts.len() });
    }
    let lo = pts.iter().map(|p| p.0.log10()).fold(f64::INFINITY, f64::min);
    let hi = pts.iter().map(|p| p.0.log10()).fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / SPLIT_BINS as f64;
    let mut bins: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); SPLIT_BINS];
    for (x, y) in pts {
        let b = if width > 0.0 { ((x.log10() - lo) / width).floor() as usize } else { 0 };
        let slot = &mut bins[b.min(SPLIT_BINS - 1)];
        slot.0.push(x);
        slot.1.push(y);
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (bx, by) in bins.into_iter().filter(|b| !b.0.is_empty()) {
        xs.push(stats::median(&bx)?);
        ys.push(stats::median(&by)?);
    }
    Ok((xs, ys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ActorClass, Attributed, CanonicalActor, CommitRecord};
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn commit(login: &str, repo: &str, day: u32) -> CanonicalCommit {
        Attributed {
            actor: CanonicalActor { login: login.into(), class: ActorClass::Human },
            record: CommitRecord {
                repo_id: repo.into(),
                raw_author: login.into(),
                timestamp: Utc.with_ymd_and_hms(2015, 1, day, 0, 0, 0).unwrap(),
            },
        }
    }

    fn repo_map(pairs: &[(&str, usize)]) -> BTreeMap<String, usize> {
        pairs.iter().map(|(r, c)| (r.to_string(), *c)).collect()
    }

    #[test]
    fn k_counts_distinct_communities() {
        let rm = repo_map(&[("a", 0), ("b", 0), ("c", 0), ("x", 1), ("y", 2), ("z", 5)]);
        let cs = vec![
            commit("one", "a", 1),
            commit("one", "b", 1),
            commit("one", "c", 1),
            commit("three", "x", 1),
            commit("three", "y", 1),
            commit("three", "z", 1),
        ];
        let p = compute_breadth_profile(&cs, &rm).unwrap();
        assert_eq!(p.per_contributor_k["one"], 1);
        assert_eq!(p.per_contributor_k["three"], 3);
        assert!(matches!(
            compute_breadth_profile(&[commit("q", "nowhere", 1)], &rm),
            Err(BreadthError::Coverage(_))
        ));
    }

    #[test]
    fn pmf_matches_planted_histogram() {
        let planted: [(usize, usize); 4] = [(1, 50), (2, 20), (3, 7), (9, 3)];
        let mut ks = BTreeMap::new();
        for (k, n) in planted {
            for i in 0..n {
                ks.insert(format!("k{k}-{i}"), k);
            }
        }
        let p = profile_from_ks(ks);
        for (k, n) in planted {
            assert_eq!(p.counts[&k], n as u64);
            assert!((p.pmf[&k] - n as f64 / 80.0).abs() < 1e-15);
        }
        assert_eq!(p.ccdf_logbinned[0].ccdf, 1.0);
        assert!((p.ccdf_at(9) - 3.0 / 80.0).abs() < 1e-15);
    }

    #[test]
    fn carrier_filter() {
        let ks: BTreeMap<String, usize> =
            [("a", 1), ("b", 7), ("c", 9), ("d", 7), ("e", 3)].iter().map(|(l, k)| (l.to_string(), *k)).collect();
        let p = profile_from_ks(ks);
        let layer: Vec<_> = carrier_layer(&p, 7).into_iter().map(|c| c.login).collect();
        assert_eq!(layer, vec!["c", "b", "d"]);
        assert_eq!(carrier_layer(&p, 1).len(), 5);
        assert!(carrier_layer(&p, 10).is_empty());
    }

    #[test]
    fn split_home_and_share() {
        let rm = repo_map(&[("h", 0), ("o", 1)]);
        let mut cs: Vec<_> = (0..10).map(|_| commit("dev", "h", 5)).collect();
        cs.extend((0..5).map(|_| commit("dev", "o", 2)));
        let s = commit_split(&cs, &rm).unwrap();
        let e = s.per_contributor["dev"];
        assert_eq!((e.home_community, e.n_intra, e.n_inter), (0, 10, 5));
        assert!((e.inter_share() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn home_tie_breaks_on_earliest_commit() {
        let rm = repo_map(&[("p", 3), ("q", 1)]);
        let cs = vec![commit("dev", "p", 1), commit("dev", "q", 9)];
        assert_eq!(commit_split(&cs, &rm).unwrap().per_contributor["dev"].home_community, 3);
        let cs = vec![commit("dev", "p", 4), commit("dev", "q", 4)];
        assert_eq!(commit_split(&cs, &rm).unwrap().per_contributor["dev"].home_community, 1);
    }

    #[test]
    fn planted_carrier_scaling() {
        let mut per_contributor = BTreeMap::new();
        let mut carriers = Vec::new();
        for i in 0..9u32 {
            let intra = 10u64 * 2u64.pow(i);
            let inter = (intra as f64).powf(0.53).round() as u64;
            let login = format!("c{i}");
            per_contributor.insert(
                login.clone(),
                SplitEntry { home_community: 0, n_intra: intra, n_inter: inter, first_year: 2010, k: 8 },
            );
            carriers.push(Carrier { login, k: 8 });
        }
        let a = commit_split_analysis(&CommitSplit { per_contributor }, &carriers);
        assert!((a.carrier_fit.unwrap().slope - 0.53).abs() < 0.02);
    }

    proptest! {
        #[test]
        fn profile_invariants(raw in proptest::collection::vec((0u8..30, 0u8..12), 1..200)) {
            let rm: BTreeMap<String, usize> = (0..12).map(|r| (format!("r{r}"), r as usize % 9)).collect();
            let cs: Vec<_> = raw.iter().map(|&(u, r)| commit(&format!("u{u}"), &format!("r{r}"), 1)).collect();
            let p = compute_breadth_profile(&cs, &rm).unwrap();
            prop_assert!((p.pmf.values().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.per_contributor_k.values().all(|&k| k >= 1));
            prop_assert_eq!(p.ccdf_logbinned[0].ccdf, 1.0);
            for w in p.ccdf_logbinned.windows(2) {
                prop_assert!(w[1].ccdf <= w[0].ccdf);
            }
            let s = commit_split(&cs, &rm).unwrap();
            for (login, e) in &s.per_contributor {
                let total = cs.iter().filter(|c| &c.actor.login == login).count() as u64;
                prop_assert_eq!(e.n_intra + e.n_inter, total);
                prop_assert_eq!(e.k, p.per_contributor_k[login]);
            }
            let layer = carrier_layer(&p, 2);
            prop_assert!(layer.iter().all(|c| c.k >= 2));
            let multi = p.per_contributor_k.values().filter(|&&k| k >= 2).count();
            prop_assert_eq!(layer.len(), multi);
        }
    }
}
