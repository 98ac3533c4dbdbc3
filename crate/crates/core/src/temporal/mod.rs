//! Annual activity per community, growth-rate inflections, the logistic law of
//! community births and the extensive/intensive (Kaya) split of growth.

mod logistic;

pub use logistic::{fit_logistic_births, LogisticFit, LogisticParams};

use crate::ingest::{CanonicalCommit, ObservationWindow};
use crate::stats::gaussian_smooth_masked;
use chrono::Datelike;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TemporalError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("logistic fit did not converge after {iterations} iterations (rss {rss})")]
    NonConvergence { best: LogisticParams, rss: f64, iterations: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnualMatrix {
    /// Community -> year -> commits; only nonzero cells are stored.
    pub counts: BTreeMap<usize, BTreeMap<i32, u64>>,
    pub first_year: i32,
    pub last_year: i32,
    pub births: BTreeMap<usize, i32>,
}

impl AnnualMatrix {
    pub fn get(&self, community: usize, year: i32) -> u64 {
        self.counts.get(&community).and_then(|r| r.get(&year)).copied().unwrap_or(0)
    }

    pub fn years(&self) -> std::ops::RangeInclusive<i32> {
        self.first_year..=self.last_year
    }

    pub fn totals(&self) -> BTreeMap<i32, u64> {
        let mut t: BTreeMap<i32, u64> = self.years().map(|y| (y, 0)).collect();
        for row in self.counts.values() {
            for (&y, &c) in row {
                *t.get_mut(&y).expect("year in range") += c;
            }
        }
        t
    }

    /// Communities born in or before each year.
    pub fn cumulative_births(&self) -> BTreeMap<i32, f64> {
        let mut per_year: BTreeMap<i32, u64> = BTreeMap::new();
        for &b in self.births.values() {
            *per_year.entry(b).or_insert(0) += 1;
        }
        let mut acc = 0u64;
        self.years()
            .map(|y| {
                acc += per_year.get(&y).copied().unwrap_or(0);
                (y, acc as f64)
            })
            .collect()
    }
}

/// Exact commit tallies per community and full calendar year. Commits on
/// repositories without a community, or outside the full years of the
/// window, are left out.
pub fn annual_matrix(
    commits: &[CanonicalCommit],
    repo_community: &BTreeMap<String, usize>,
    window: &ObservationWindow,
) -> AnnualMatrix {
    let (first_year, last_year) = window.full_year_range();
    let mut counts: BTreeMap<usize, BTreeMap<i32, u64>> = BTreeMap::new();
    for c in commits {
        let y = c.record.timestamp.year();
        if y < first_year || y > last_year || !window.contains(c.record.timestamp) {
            continue;
        }
        if let Some(&comm) = repo_community.get(&c.record.repo_id) {
            *counts.entry(comm).or_default().entry(y).or_insert(0) += 1;
        }
    }
    let births = counts
        .iter()
        .map(|(&c, row)| (c, *row.keys().next().expect("row has a nonzero cell")))
        .collect();
    AnnualMatrix { counts, first_year, last_year, births }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InflectionScores {
    pub years: Vec<i32>,
    /// `None` for the first year and after a zero-total year.
    pub raw: Vec<Option<f64>>,
    pub smoothed: Vec<Option<f64>>,
}

/// Year-on-year relative change of total commits, Gaussian-smoothed with
/// bandwidth given in years.
pub fn inflection_scores(totals: &BTreeMap<i32, u64>, bandwidth: f64) -> Result<InflectionScores, TemporalError> {
    let (Some(&lo), Some(&hi)) = (totals.keys().next(), totals.keys().next_back()) else {
        return Err(TemporalError::InsufficientData("no years".into()));
    };
    if hi - lo + 1 < 3 {
        return Err(TemporalError::InsufficientData(format!("{} years; need 3", hi - lo + 1)));
    }
    let years: Vec<i32> = (lo..=hi).collect();
    let t = |y: i32| totals.get(&y).copied().unwrap_or(0) as f64;
    let raw: Vec<Option<f64>> = years
        .iter()
        .map(|&y| (y > lo && t(y - 1) > 0.0).then(|| (t(y) - t(y - 1)) / t(y - 1)))
        .collect();
    let smoothed = gaussian_smooth_masked(&raw, bandwidth);
    Ok(InflectionScores { years, raw, smoothed })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KayaYear {
    pub year: i32,
    /// Total commits of all communities.
    pub t: u64,
    /// Communities with at least `activity_threshold` commits.
    pub n: usize,
    pub e_bar: Option<f64>,
    pub dlog_t: Option<f64>,
    pub dlog_n: Option<f64>,
    pub dlog_e: Option<f64>,
    pub n_born: usize,
    /// Born but not active this year.
    pub dormant_gap: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeMeans {
    pub dlog_n: f64,
    pub dlog_e: f64,
    pub dlog_t: f64,
    pub n_years: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KayaDecomposition {
    pub per_year: Vec<KayaYear>,
    pub split_year: i32,
    pub pre: Option<RegimeMeans>,
    pub post: Option<RegimeMeans>,
    pub activity_threshold: u64,
    pub log_base: String,
}

/// `T = N * e_bar`, differenced in natural logs, with regime means split at
/// `floor(t0)`.
pub fn kaya_decompose(m: &AnnualMatrix, t0: f64, activity_threshold: u64) -> Result<KayaDecomposition, TemporalError> {
    let threshold = activity_threshold.max(1);
    let totals = m.totals();
    let mut per_year: Vec<KayaYear> = Vec::new();
    for y in m.years() {
        let t = totals[&y];
        let n = m.counts.values().filter(|row| row.get(&y).copied().unwrap_or(0) >= threshold).count();
        let n_born = m.births.values().filter(|&&b| b <= y).count();
        let e_bar = (n > 0).then(|| t as f64 / n as f64);
        let mut ky = KayaYear {
            year: y,
            t,
            n,
            e_bar,
            dlog_t: None,
            dlog_n: None,
            dlog_e: None,
            n_born,
            dormant_gap: n_born - n.min(n_born),
        };
        if let Some(prev) = per_year.last() {
            if let (Some(e0), Some(e1)) = (prev.e_bar, e_bar) {
                if e0 > 0.0 && e1 > 0.0 {
                    let dn = (n as f64).ln() - (prev.n as f64).ln();
                    let de = e1.ln() - e0.ln();
                    ky.dlog_n = Some(dn);
                    ky.dlog_e = Some(de);
                    ky.dlog_t = Some(dn + de);
                }
            }
        }
        per_year.push(ky);
    }
    if per_year.iter().filter(|k| k.n > 0).count() < 2 {
        return Err(TemporalError::InsufficientData("need two years with active communities".into()));
    }
    let split_year = t0.floor() as i32;
    let mean_over = |lo: i32, hi: i32| -> Option<RegimeMeans> {
        let rows: Vec<&KayaYear> =
            per_year.iter().filter(|k| k.year >= lo && k.year <= hi && k.dlog_t.is_some()).collect();
        if rows.is_empty() {
            return None;
        }
        let n = rows.len() as f64;
        let avg = |f: fn(&KayaYear) -> f64| rows.iter().map(|k| f(k)).sum::<f64>() / n;
        Some(RegimeMeans {
            dlog_n: avg(|k| k.dlog_n.unwrap_or(0.0)),
            dlog_e: avg(|k| k.dlog_e.unwrap_or(0.0)),
            dlog_t: avg(|k| k.dlog_t.unwrap_or(0.0)),
            n_years: rows.len(),
        })
    };
    let pre = mean_over(m.first_year + 1, split_year);
    let post = mean_over(split_year + 1, m.last_year);
    Ok(KayaDecomposition {
        per_year,
        split_year,
        pre,
        post,
        activity_threshold: threshold,
        log_base: "e".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ActorClass, Attributed, CanonicalActor, CommitRecord};
    use chrono::{NaiveDate, TimeZone, Utc};
    use proptest::prelude::*;

    fn commit(repo: &str, year: i32) -> CanonicalCommit {
        Attributed {
            actor: CanonicalActor { login: "dev".into(), class: ActorClass::Human },
            record: CommitRecord {
                repo_id: repo.into(),
                raw_author: "dev".into(),
                timestamp: Utc.with_ymd_and_hms(year, 3, 1, 0, 0, 0).unwrap(),
            },
        }
    }

    fn window(a: i32, b: i32) -> ObservationWindow {
        ObservationWindow::from_dates(NaiveDate::from_ymd_opt(a, 1, 1).unwrap(), NaiveDate::from_ymd_opt(b, 12, 31).unwrap())
            .unwrap()
    }

    fn matrix_from(cells: &BTreeMap<usize, BTreeMap<i32, u64>>, lo: i32, hi: i32) -> AnnualMatrix {
        let counts: BTreeMap<usize, BTreeMap<i32, u64>> = cells
            .iter()
            .map(|(&c, row)| (c, row.iter().filter(|(_, &v)| v > 0).map(|(&y, &v)| (y, v)).collect::<BTreeMap<_, _>>()))
            .filter(|(_, row)| !row.is_empty())
            .collect();
        let births = counts.iter().map(|(&c, row)| (c, *row.keys().next().unwrap())).collect();
        AnnualMatrix { counts, first_year: lo, last_year: hi, births }
    }

    #[test]
    fn tallies_and_births() {
        let rm: BTreeMap<String, usize> = [("a".to_string(), 0), ("b".to_string(), 1)].into();
        let mut cs = vec![commit("a", 2015), commit("a", 2015)];
        cs.extend([commit("b", 2012), commit("b", 2018), commit("b", 2018), commit("b", 2018)]);
        cs.push(commit("unknown", 2016));
        let m = annual_matrix(&cs, &rm, &window(2010, 2020));
        assert_eq!(m.births[&0], 2015);
        assert_eq!(m.counts[&0].len(), 1);
        assert_eq!(m.get(0, 2015), 2);
        assert_eq!(m.get(1, 2018), 3);
        assert_eq!(m.births[&1], 2012);
        assert_eq!(m.cumulative_births()[&2014], 1.0);
        assert_eq!(m.cumulative_births()[&2020], 2.0);
    }

    #[test]
    fn partial_final_year_dropped() {
        let rm: BTreeMap<String, usize> = [("a".to_string(), 0)].into();
        let w = ObservationWindow::from_dates(
            NaiveDate::from_ymd_opt(2010, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2022, 5, 31).unwrap(),
        )
        .unwrap();
        let m = annual_matrix(&[commit("a", 2021), commit("a", 2022)], &rm, &w);
        assert_eq!(m.last_year, 2021);
        assert_eq!(m.get(0, 2022), 0);
    }

    #[test]
    fn inflection_arithmetic() {
        let flat: BTreeMap<i32, u64> = (2000..2010).map(|y| (y, 7)).collect();
        let s = inflection_scores(&flat, 1.0).unwrap();
        assert!(s.raw.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(s.raw[0], None);
        let doubling: BTreeMap<i32, u64> = (0..8).map(|i| (2000 + i, 1u64 << i)).collect();
        let s = inflection_scores(&doubling, 1.0).unwrap();
        assert!(s.raw.iter().flatten().all(|&v| v == 1.0));
        let gap: BTreeMap<i32, u64> = [(2000, 3), (2001, 0), (2002, 4)].into();
        assert_eq!(inflection_scores(&gap, 1.0).unwrap().raw[2], None);
    }

    #[test]
    fn smoothing_keeps_alternating_signs_at_small_bandwidth() {
        let totals: BTreeMap<i32, u64> =
            (0..12).map(|i| (2000 + i, if i % 2 == 0 { 100 } else { 150 })).collect();
        let s = inflection_scores(&totals, 0.4).unwrap();
        for (r, sm) in s.raw.iter().zip(&s.smoothed) {
            if let (Some(r), Some(sm)) = (r, sm) {
                assert_eq!(r.signum(), sm.signum());
            }
        }
    }

    #[test]
    fn stationary_kaya() {
        let cells: BTreeMap<usize, BTreeMap<i32, u64>> =
            (0..4).map(|c| (c, (2000..2010).map(|y| (y, 5)).collect())).collect();
        let k = kaya_decompose(&matrix_from(&cells, 2000, 2009), 2005.5, 1).unwrap();
        for y in k.per_year.iter().skip(1) {
            assert_eq!((y.dlog_t, y.dlog_n, y.dlog_e), (Some(0.0), Some(0.0), Some(0.0)));
        }
        assert_eq!(k.split_year, 2005);
        assert_eq!(k.pre.unwrap().n_years, 5);
        assert_eq!(k.post.unwrap().n_years, 4);
    }

    #[test]
    fn threshold_and_dormancy() {
        let mut cells: BTreeMap<usize, BTreeMap<i32, u64>> = BTreeMap::new();
        cells.insert(0, [(2000, 10), (2001, 10), (2002, 10)].into());
        cells.insert(1, [(2000, 2), (2001, 0), (2002, 6)].into());
        let k = kaya_decompose(&matrix_from(&cells, 2000, 2002), 2001.0, 5).unwrap();
        assert_eq!(k.per_year.iter().map(|y| y.n).collect::<Vec<_>>(), vec![1, 1, 2]);
        assert_eq!(k.per_year[1].dormant_gap, 1);
        assert_eq!(k.per_year[0].t, 12);
    }

    proptest! {
        #[test]
        fn kaya_identity(cells in proptest::collection::btree_map(0usize..12, proptest::collection::vec(0u64..40, 8), 1..12)) {
            let cells: BTreeMap<usize, BTreeMap<i32, u64>> = cells
                .into_iter()
                .map(|(c, v)| (c, v.into_iter().enumerate().map(|(i, x)| (2000 + i as i32, x)).collect()))
                .collect();
            let m = matrix_from(&cells, 2000, 2007);
            if let Ok(k) = kaya_decompose(&m, 2003.7, 1) {
                for y in &k.per_year {
                    if let Some(e) = y.e_bar {
                        prop_assert!((e * y.n as f64 - y.t as f64).abs() <= 1e-9 * y.t as f64);
                    }
                    if let (Some(t), Some(n), Some(e)) = (y.dlog_t, y.dlog_n, y.dlog_e) {
                        let direct = (y.t as f64).ln() - (k.per_year[(y.year - 2000 - 1) as usize].t as f64).ln();
                        prop_assert!((t - n - e).abs() <= 1e-12);
                        prop_assert!((direct - n - e).abs() <= 1e-12);
                    }
                }
            }
        }

        #[test]
        fn increasing_series_has_positive_scores(start in 1u64..100, steps in proptest::collection::vec(1u64..50, 3..15)) {
            let mut v = start;
            let mut totals = BTreeMap::new();
            totals.insert(2000, v);
            for (i, s) in steps.iter().enumerate() {
                v += s;
                totals.insert(2001 + i as i32, v);
            }
            let sc = inflection_scores(&totals, 1.0).unwrap();
            prop_assert!(sc.raw.iter().flatten().all(|&x| x > 0.0));
        }
    }
}
