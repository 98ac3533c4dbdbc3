use super::interval::normal_quantile;
use super::{IntervalEstimate, Result, StatsError};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TableTest {
    Chi2,
    Fisher,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherResult {
    /// `None` when both `a*d` and `b*c` are zero.
    pub odds_ratio: Option<f64>,
    pub odds_ratio_ci: Option<IntervalEstimate>,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TableResult {
    Chi2(ChiSquareResult),
    Fisher(FisherResult),
}

impl TableResult {
    pub fn p_value(&self) -> f64 {
        match self {
            TableResult::Chi2(r) => r.p_value,
            TableResult::Fisher(r) => r.p_value,
        }
    }
}

fn check_margins(t: [u64; 4]) -> Result<()> {
    let [a, b, c, d] = t;
    if a + b == 0 || c + d == 0 || a + c == 0 || b + d == 0 {
        return Err(StatsError::DegenerateTable);
    }
    Ok(())
}

/// Pearson chi-square on `[[a, b], [c, d]]`, no continuity correction.
pub fn chi_square_2x2(t: [u64; 4]) -> Result<ChiSquareResult> {
    check_margins(t)?;
    let [a, b, c, d] = t.map(|v| v as f64);
    let n = a + b + c + d;
    let diff = a * d - b * c;
    let statistic = n * diff * diff / ((a + b) * (c + d) * (a + c) * (b + d));
    let p_value = ChiSquared::new(1.0).expect("df 1").sf(statistic).clamp(0.0, 1.0);
    Ok(ChiSquareResult { statistic, p_value })
}

/// Fisher exact test (two-sided, summing tables no more probable than the
/// observed one) with an odds ratio and 95% Woolf interval.
pub fn fisher_exact(t: [u64; 4]) -> Result<FisherResult> {
    check_margins(t)?;
    let [a, b, c, d] = t;
    let r1 = a + b;
    let c1 = a + c;
    let n = a + b + c + d;
    let lo = (r1 + c1).saturating_sub(n);
    let hi = r1.min(c1);
    // Relative hypergeometric weights from the recurrence, anchored at the mode.
    let len = (hi - lo + 1) as usize;
    let mode = (((r1 + 1) as f64 * (c1 + 1) as f64 / (n + 2) as f64).floor() as u64).clamp(lo, hi);
    let mut w = vec![0.0f64; len];
    let mi = (mode - lo) as usize;
    w[mi] = 1.0;
    for x in mode..hi {
        let i = (x - lo) as usize;
        let ratio = ((r1 - x) as f64 * (c1 - x) as f64) / ((x + 1) as f64 * (n + x + 1 - r1 - c1) as f64);
        w[i + 1] = w[i] * ratio;
    }
    for x in (lo + 1..=mode).rev() {
        let i = (x - lo) as usize;
        let ratio = (x as f64 * (n + x - r1 - c1) as f64) / ((r1 - x + 1) as f64 * (c1 - x + 1) as f64);
        w[i - 1] = w[i] * ratio;
    }
    let total: f64 = w.iter().sum();
    let p_obs = w[(a - lo) as usize];
    let cutoff = p_obs * (1.0 + 1e-7);
    let p_value = (w.iter().filter(|&&v| v <= cutoff).sum::<f64>() / total).min(1.0);

    let (af, bf, cf, df) = (a as f64, b as f64, c as f64, d as f64);
    let z = normal_quantile(0.975);
    let (odds_ratio, odds_ratio_ci) = if a * d == 0 && b * c == 0 {
        (None, None)
    } else if [a, b, c, d].iter().all(|&v| v > 0) {
        let or = af * df / (bf * cf);
        let se = (1.0 / af + 1.0 / bf + 1.0 / cf + 1.0 / df).sqrt();
        let ci = IntervalEstimate {
            point: or,
            lo: (or.ln() - z * se).exp(),
            hi: (or.ln() + z * se).exp(),
            confidence: 0.95,
        };
        (Some(or), Some(ci))
    } else {
        // A zero cell: Haldane-corrected bound on the finite side.
        let (ha, hb, hc, hd) = (af + 0.5, bf + 0.5, cf + 0.5, df + 0.5);
        let hor = ha * hd / (hb * hc);
        let se = (1.0 / ha + 1.0 / hb + 1.0 / hc + 1.0 / hd).sqrt();
        if b * c == 0 {
            let lo = (hor.ln() - z * se).exp();
            let ci = IntervalEstimate { point: f64::INFINITY, lo, hi: f64::INFINITY, confidence: 0.95 };
            (Some(f64::INFINITY), Some(ci))
        } else {
            let hi = (hor.ln() + z * se).exp();
            let ci = IntervalEstimate { point: 0.0, lo: 0.0, hi, confidence: 0.95 };
            (Some(0.0), Some(ci))
        }
    };
    Ok(FisherResult { odds_ratio, odds_ratio_ci, p_value })
}

/// Dispatch on the requested test.
pub fn contingency_2x2(t: [u64; 4], test: TableTest) -> Result<TableResult> {
    match test {
        TableTest::Chi2 => chi_square_2x2(t).map(TableResult::Chi2),
        TableTest::Fisher => fisher_exact(t).map(TableResult::Fisher),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binom(n: u64, k: u64) -> u128 {
        let mut r: u128 = 1;
        for i in 0..k {
            r = r * (n - i) as u128 / (i + 1) as u128;
        }
        r
    }

    /// Brute force over all tables with the observed margins, exact integer weights.
    fn fisher_oracle(t: [u64; 4]) -> f64 {
        let [a, b, c, d] = t;
        let (r1, c1, n) = (a + b, a + c, a + b + c + d);
        let weight = |x: u64| binom(r1, x) * binom(n - r1, c1 - x);
        let obs = weight(a);
        let lo = (r1 + c1).saturating_sub(n);
        let hi = r1.min(c1);
        let total: u128 = (lo..=hi).map(weight).sum();
        // Relative tolerance 1e-7 on the observed weight, in exact arithmetic.
        let extreme: u128 = (lo..=hi)
            .map(weight)
            .filter(|&w| w * 10_000_000 <= obs * 10_000_001)
            .sum();
        extreme as f64 / total as f64
    }

    #[test]
    fn fisher_tea_tasting() {
        let r = fisher_exact([3, 1, 1, 3]).unwrap();
        assert!((r.p_value - 0.4857142857142857).abs() < 1e-12);
        assert!((r.odds_ratio.unwrap() - 9.0).abs() < 1e-12);
    }

    #[test]
    fn fisher_zero_cell_has_one_sided_ci() {
        let r = fisher_exact([5, 0, 1, 6]).unwrap();
        assert_eq!(r.odds_ratio, Some(f64::INFINITY));
        let ci = r.odds_ratio_ci.unwrap();
        assert!(ci.lo > 1.0 && ci.hi.is_infinite());
    }

    #[test]
    fn chi_square_known_value() {
        // n (ad - bc)^2 / margins = 100 * 500^2 / 50^4 = 4.
        let r = chi_square_2x2([30, 20, 20, 30]).unwrap();
        assert!((r.statistic - 4.0).abs() < 1e-12);
        let r = chi_square_2x2([25, 25, 25, 25]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_margins() {
        assert_eq!(chi_square_2x2([0, 0, 3, 4]), Err(StatsError::DegenerateTable));
        assert_eq!(fisher_exact([0, 3, 0, 4]).unwrap_err(), StatsError::DegenerateTable);
    }

    proptest! {
        #[test]
        fn fisher_matches_enumeration(a in 0u64..=10, b in 0u64..=10, c in 0u64..=10, d in 0u64..=10) {
            prop_assume!(a + b > 0 && c + d > 0 && a + c > 0 && b + d > 0);
            let got = fisher_exact([a, b, c, d]).unwrap().p_value;
            prop_assert!((got - fisher_oracle([a, b, c, d])).abs() < 1e-12);
            prop_assert!(got > 0.0 && got <= 1.0);
        }
    }
}
