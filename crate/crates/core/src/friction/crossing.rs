use super::{FrictionError, Outcome, PrDepthRecord, Stratum};
use crate::breadth::BreadthProfile;
use crate::stats::{quantile_sorted, spearman, t_two_sided, wilson_ci, IntervalEstimate, OlsFit};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

pub const TOP_N: [usize; 3] = [10, 50, 250];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concentration {
    /// `(N, share of inter-community merged PRs from the top N authors)`.
    pub top_shares: Vec<(usize, f64)>,
    pub n_inter_merged: u64,
    pub n_inter_authors: usize,
    /// Spearman rho and p between breadth and inter-PR count.
    pub spearman: Option<(f64, f64)>,
    pub spearman_n: usize,
    /// Share of profiled contributors with at least one inter-community merged PR.
    pub pct_ever_cross: f64,
}

pub fn concentration_and_rank(prs: &[PrDepthRecord], profile: &BreadthProfile) -> Result<Concentration, FrictionError> {
    let mut per_author: BTreeMap<&str, u64> = BTreeMap::new();
    for p in prs.iter().filter(|p| p.is_inter && p.outcome == Outcome::Merged) {
        *per_author.entry(p.author.as_str()).or_default() += 1;
    }
    let total: u64 = per_author.values().sum();
    if total == 0 {
        return Err(FrictionError::InsufficientData("no inter-community merged pull requests".into()));
    }
    let mut counts: Vec<u64> = per_author.values().copied().collect();
    counts.sort_unstable_by(|a, b| b.cmp(a));
    let top_shares = TOP_N
        .iter()
        .map(|&n| (n, counts.iter().take(n).sum::<u64>() as f64 / total as f64))
        .collect();
    let authors: BTreeSet<&str> =
        profile.per_contributor_k.keys().map(String::as_str).chain(per_author.keys().copied()).collect();
    let (ks, prs_n): (Vec<f64>, Vec<f64>) = authors
        .iter()
        .map(|a| {
            let k = profile.per_contributor_k.get(*a).copied().unwrap_or(0);
            (k as f64, per_author.get(a).copied().unwrap_or(0) as f64)
        })
        .filter(|(k, c)| *k >= 1.0 || *c >= 1.0)
        .unzip();
    let crossers = per_author.keys().filter(|a| profile.per_contributor_k.contains_key(**a)).count();
    Ok(Concentration {
        top_shares,
        n_inter_merged: total,
        n_inter_authors: per_author.len(),
        spearman: spearman(&ks, &prs_n).ok(),
        spearman_n: ks.len(),
        pct_ever_cross: if profile.n_total == 0 { 0.0 } else { crossers as f64 / profile.n_total as f64 },
    })
}

/// Inclusive breadth range; `hi = None` is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KBin {
    pub lo: usize,
    pub hi: Option<usize>,
}

impl KBin {
    pub fn contains(&self, k: usize) -> bool {
        k >= self.lo && self.hi.is_none_or(|h| k <= h)
    }

    pub fn label(&self) -> String {
        match self.hi {
            Some(h) if h == self.lo => format!("{h}"),
            Some(h) => format!("{}-{h}", self.lo),
            None => format!(">={}", self.lo),
        }
    }
}

pub const DEFAULT_K_BINS: [KBin; 5] = [
    KBin { lo: 1, hi: Some(1) },
    KBin { lo: 2, hi: Some(2) },
    KBin { lo: 3, hi: Some(4) },
    KBin { lo: 5, hi: Some(9) },
    KBin { lo: 10, hi: None },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KBinCell {
    pub bin: KBin,
    pub stratum: Stratum,
    pub n: u64,
    pub merged: u64,
    pub acceptance: Option<IntervalEstimate>,
    pub median_hours: Option<f64>,
    pub q1_hours: Option<f64>,
    pub q3_hours: Option<f64>,
}

/// Acceptance and turnaround per author-breadth bin and stratum. Records
/// outside every bin (k = 0) are not counted.
pub fn friction_by_k(prs: &[PrDepthRecord], bins: &[KBin]) -> Vec<KBinCell> {
    let mut out = Vec::new();
    for &bin in bins {
        for stratum in Stratum::BOTH {
            let cell: Vec<&PrDepthRecord> =
                prs.iter().filter(|p| p.stratum() == stratum && bin.contains(p.author_k)).collect();
            let n = cell.len() as u64;
            let merged = cell.iter().filter(|p| p.outcome == Outcome::Merged).count() as u64;
            let mut hours: Vec<f64> = cell.iter().map(|p| p.turnaround_hours).collect();
            hours.sort_by(f64::total_cmp);
            let q = |p: f64| (!hours.is_empty()).then(|| quantile_sorted(&hours, p));
            out.push(KBinCell {
                bin,
                stratum,
                n,
                merged,
                acceptance: wilson_ci(merged, n, 0.95).ok(),
                median_hours: q(0.5),
                q1_hours: q(0.25),
                q3_hours: q(0.75),
            });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRegression {
    /// Pooled within-pair slope of log turnaround on sequence index; the
    /// intercept is zero by construction.
    pub fit: OlsFit,
    pub n_pairs: usize,
    pub log_base: String,
    /// `(sequence index, median hours, n)` without fixed effects.
    pub marginal_medians: Vec<(usize, f64, usize)>,
}

/// Turnarounds below one second are floored before taking logs.
const MIN_HOURS: f64 = 1.0 / 3600.0;

/// Fixed-effects regression of ln(turnaround) on the order of each author's
/// inter-community merged PRs to the same repository.
pub fn turnaround_sequence_regression(prs: &[PrDepthRecord]) -> Result<SequenceRegression, FrictionError> {
    let mut pairs: BTreeMap<(&str, &str), Vec<&PrDepthRecord>> = BTreeMap::new();
    for p in prs.iter().filter(|p| p.is_inter && p.outcome == Outcome::Merged) {
        pairs.entry((p.author.as_str(), p.repo_id.as_str())).or_default().push(p);
    }
    pairs.retain(|_, v| v.len() >= 3);
    if pairs.len() < 3 {
        return Err(FrictionError::InsufficientData(format!(
            "sequence regression needs 3 author-repository pairs with 3 inter-community merged PRs, got {}",
            pairs.len()
        )));
    }
    let (mut sxy, mut sxx, mut syy, mut n) = (0.0, 0.0, 0.0, 0usize);
    let mut by_index: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for v in pairs.values_mut() {
        v.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.pr_number.cmp(&b.pr_number)));
        let ys: Vec<f64> = v.iter().map(|p| p.turnaround_hours.max(MIN_HOURS).ln()).collect();
        let m = ys.len() as f64;
        let x_bar = (m + 1.0) / 2.0;
        let constant = ys.iter().all(|&y| y == ys[0]);
        let y_bar = ys.iter().sum::<f64>() / m;
        for (i, y) in ys.iter().enumerate() {
            let dx = (i + 1) as f64 - x_bar;
            let dy = if constant { 0.0 } else { y - y_bar };
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
            by_index.entry(i + 1).or_default().push(v[i].turnaround_hours);
        }
        n += v.len();
    }
    let slope = sxy / sxx;
    let ssr = (syy - slope * sxy).max(0.0);
    let df = (n - pairs.len() - 1) as f64;
    let slope_se = (ssr / df / sxx).sqrt();
    let p_value = if slope_se == 0.0 {
        if slope == 0.0 { 1.0 } else { 0.0 }
    } else {
        t_two_sided(slope / slope_se, df)
    };
    let marginal_medians = by_index
        .into_iter()
        .map(|(i, mut hs)| {
            hs.sort_by(f64::total_cmp);
            (i, quantile_sorted(&hs, 0.5), hs.len())
        })
        .collect();
    Ok(SequenceRegression {
        fit: OlsFit {
            slope,
            intercept: 0.0,
            slope_se: Some(slope_se),
            r2: if syy > 0.0 { 1.0 - ssr / syy } else { 0.0 },
            p_value: Some(p_value),
            n,
            ssr,
        },
        n_pairs: pairs.len(),
        log_base: "e".into(),
        marginal_medians,
    })
}

#[cfg(test)]
mod tests {
    use super::super::tests::{at, record};
    use super::*;
    use crate::breadth::profile_from_ks;
    use chrono::Duration;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn inter_merged(author: &str) -> PrDepthRecord {
        let mut r = record(Stratum::Inter, Outcome::Merged, 1.0);
        r.author = author.into();
        r
    }

    #[test]
    fn single_author_concentration() {
        let prs: Vec<PrDepthRecord> = (0..7).map(|_| inter_merged("solo")).collect();
        let profile = profile_from_ks([("solo".to_string(), 3), ("b".to_string(), 1)].into());
        let c = concentration_and_rank(&prs, &profile).unwrap();
        assert_eq!(c.top_shares[0], (10, 1.0));
        assert_eq!(c.pct_ever_cross, 0.5);
    }

    #[test]
    fn uniform_concentration() {
        let prs: Vec<PrDepthRecord> = (0..1000).map(|i| inter_merged(&format!("a{i}"))).collect();
        let profile = profile_from_ks((0..1000).map(|i| (format!("a{i}"), 2)).collect());
        let c = concentration_and_rank(&prs, &profile).unwrap();
        assert!((c.top_shares[0].1 - 0.01).abs() < 1e-15);
        assert!(concentration_and_rank(&[], &profile).is_err());
    }

    #[test]
    fn k_bins_partition_stratum() {
        let mut prs = Vec::new();
        for k in 1..15 {
            for s in Stratum::BOTH {
                let mut r = record(s, if k % 2 == 0 { Outcome::Merged } else { Outcome::Rejected }, k as f64);
                r.author_k = k;
                prs.push(r);
            }
        }
        let cells = friction_by_k(&prs, &DEFAULT_K_BINS);
        assert_eq!(cells.iter().filter(|c| c.stratum == Stratum::Inter).map(|c| c.n).sum::<u64>(), 14);
        let only_one: Vec<PrDepthRecord> = prs.iter().filter(|p| p.author_k == 1).cloned().collect();
        let cells = friction_by_k(&only_one, &DEFAULT_K_BINS);
        assert!(cells.iter().filter(|c| c.bin.lo > 1).all(|c| c.n == 0 && c.acceptance.is_none()));
        assert_eq!(DEFAULT_K_BINS.map(|b| b.label()), ["1", "2", "3-4", "5-9", ">=10"]);
    }

    #[test]
    fn planted_monotone_acceptance_in_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut prs = Vec::new();
        for (k, rate) in [(1, 0.4), (2, 0.55), (3, 0.65), (6, 0.8), (12, 0.9)] {
            for _ in 0..3000 {
                let mut r = record(Stratum::Inter, if rng.random_bool(rate) { Outcome::Merged } else { Outcome::Rejected }, 1.0);
                r.author_k = k;
                prs.push(r);
            }
        }
        let rates: Vec<f64> = friction_by_k(&prs, &DEFAULT_K_BINS)
            .iter()
            .filter(|c| c.stratum == Stratum::Inter)
            .map(|c| c.acceptance.unwrap().point)
            .collect();
        assert!(rates.windows(2).all(|w| w[0] < w[1]), "{rates:?}");
    }

    fn sequence_data(decay: f64, seed: u64, pairs: usize) -> Vec<PrDepthRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut prs = Vec::new();
        for p in 0..pairs {
            let level: f64 = rng.random_range(0.0..5.0);
            let len = rng.random_range(3..8);
            for s in 0..len {
                let mut r = inter_merged(&format!("a{p}"));
                r.repo_id = format!("r{p}");
                r.pr_number = s;
                r.created_at = at(s as i64) + Duration::hours(1);
                r.turnaround_hours = (level - decay * (s + 1) as f64 + noise.sample(&mut rng)).exp();
                prs.push(r);
            }
        }
        prs
    }

    #[test]
    fn planted_within_pair_decay() {
        let r = turnaround_sequence_regression(&sequence_data(0.1, 4, 400)).unwrap();
        assert!((r.fit.slope + 0.1).abs() < 2.5 * r.fit.slope_se.unwrap(), "{:?}", r.fit);
        assert!((r.fit.slope + 0.1).abs() < 0.02);
        assert_eq!(r.log_base, "e");
    }

    #[test]
    fn constant_turnarounds_and_too_few_pairs() {
        let mut prs = sequence_data(0.0, 1, 5);
        prs.iter_mut().for_each(|p| p.turnaround_hours = 7.3);
        assert_eq!(turnaround_sequence_regression(&prs).unwrap().fit.slope, 0.0);
        assert!(turnaround_sequence_regression(&sequence_data(0.1, 1, 2)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn slope_invariant_to_pair_rescaling(seed in 0u64..1000, scales in proptest::collection::vec(0.01f64..100.0, 6)) {
            let prs = sequence_data(0.05, seed, 6);
            let mut scaled = prs.clone();
            for p in &mut scaled {
                let i: usize = p.author[1..].parse().unwrap();
                p.turnaround_hours *= scales[i];
            }
            let a = turnaround_sequence_regression(&prs).unwrap().fit.slope;
            let b = turnaround_sequence_regression(&scaled).unwrap().fit.slope;
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn top_shares_non_decreasing(authors in proptest::collection::vec(0usize..400, 1..800)) {
            let prs: Vec<PrDepthRecord> = authors.iter().map(|a| inter_merged(&format!("a{a}"))).collect();
            let profile = profile_from_ks(authors.iter().map(|a| (format!("a{a}"), 2)).collect());
            let c = concentration_and_rank(&prs, &profile).unwrap();
            let s: Vec<f64> = c.top_shares.iter().map(|x| x.1).collect();
            prop_assert!(s[0] <= s[1] && s[1] <= s[2] && s[2] <= 1.0);
        }
    }
}
