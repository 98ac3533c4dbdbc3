//! Shared statistical kernel.
//!
//! Regression in log-log space, rank statistics, 2x2 contingency tests,
//! interval estimates, descriptive measures, Gaussian smoothing and
//! seeded bootstrap resampling. Everything here is a pure function.

mod describe;
mod interval;
mod ols;
mod rank;
mod table;

pub use describe::{gaussian_smooth, gaussian_smooth_masked, gini, mean, median, quantile, quantile_sorted};
pub use interval::{bootstrap_ci, bootstrap_counts_ci, normal_quantile, wilson_ci, BootstrapEstimate};
pub(crate) use ols::t_two_sided;
pub use ols::{fit_line, ols_linear, ols_loglog, OlsFit};
pub use rank::{average_ranks, mann_whitney_u, spearman, MannWhitney, EXACT_MWU_MAX_PRODUCT};
pub use table::{chi_square_2x2, contingency_2x2, fisher_exact, ChiSquareResult, FisherResult, TableResult, TableTest};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular fit: predictor has no variance")]
    SingularFit,
    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("correlation undefined: one input is constant")]
    UndefinedCorrelation,
    #[error("degenerate 2x2 table: a row or column sum is zero")]
    DegenerateTable,
    #[error("empty sample")]
    EmptySample,
    #[error("statistic undefined on the full sample")]
    UndefinedStatistic,
    #[error("bootstrap dropped {dropped} of {replicates} replicates (more than 10%)")]
    TooManyDropped { dropped: usize, replicates: usize },
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// Point estimate with a two-sided interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub confidence: f64,
}

impl IntervalEstimate {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}
