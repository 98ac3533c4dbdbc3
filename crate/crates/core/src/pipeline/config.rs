use super::PipelineError;
use crate::friction::{KBin, DEFAULT_K_BINS, DEFAULT_RETENTION_DAYS};
use crate::ingest::{ObservationWindow, DEFAULT_BOTS, DEFAULT_PLACEHOLDERS};
use crate::survival::Ties;
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Input files per stream. Any stream may be absent; the archive files are
/// the source of the actor id to login map.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputPaths {
    pub commits: Option<PathBuf>,
    pub pull_requests: Option<PathBuf>,
    pub reviews: Option<PathBuf>,
    pub issues: Option<PathBuf>,
    pub archive: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Default for WindowConfig {
    fn default() -> Self {
        let w = ObservationWindow::default();
        WindowConfig { start: w.start.date_naive(), end: w.end.date_naive() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: InputPaths,
    pub window: WindowConfig,
    pub bots: Vec<String>,
    pub placeholders: Vec<String>,
    /// Master seed; every stochastic step draws from a named substream of it.
    pub seed: u64,
    pub resolution: f64,
    pub louvain_restarts: usize,
    /// The first entry is the primary fraction; all are reported.
    pub residual_fractions: Vec<f64>,
    pub activity_threshold: u64,
    pub inflection_bandwidth: f64,
    pub breakpoint_min: usize,
    pub breakpoint_max: usize,
    pub distinctness: f64,
    pub powerlaw_k_min: u64,
    pub bootstrap_replicates: usize,
    pub retention_days: i64,
    pub k_bins: Vec<KBin>,
    pub ties: Ties,
    pub top_purity: usize,
    pub top_jaccard: usize,
    /// Compare against Louvain on the contributor projection; quadratic in repository degree.
    pub projection_diagnostic: bool,
    pub emit_canonical: bool,
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: InputPaths::default(),
            window: WindowConfig::default(),
            bots: DEFAULT_BOTS.iter().map(|s| s.to_string()).collect(),
            placeholders: DEFAULT_PLACEHOLDERS.iter().map(|s| s.to_string()).collect(),
            seed: 20220531,
            resolution: 0.5,
            louvain_restarts: 8,
            residual_fractions: vec![0.05, 0.01, 0.10],
            activity_threshold: 1,
            inflection_bandwidth: 1.0,
            breakpoint_min: 2,
            breakpoint_max: 60,
            distinctness: crate::breadth::DEFAULT_DISTINCTNESS,
            powerlaw_k_min: 2,
            bootstrap_replicates: 1000,
            retention_days: DEFAULT_RETENTION_DAYS,
            k_bins: DEFAULT_K_BINS.to_vec(),
            ties: Ties::Efron,
            top_purity: 10,
            top_jaccard: 10,
            projection_diagnostic: false,
            emit_canonical: false,
            out: PathBuf::from("report"),
        }
    }
}

impl PipelineConfig {
    /// Reads a TOML file. Relative input paths resolve against the file's directory.
    pub fn from_toml_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| PipelineError::Config(vec![format!("{}: {e}", path.display())]))?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative(base);
        }
        Ok(cfg)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let i = &mut self.inputs;
        for p in [&mut i.commits, &mut i.pull_requests, &mut i.reviews, &mut i.issues].into_iter().flatten() {
            fix(p);
        }
        i.archive.iter_mut().for_each(fix);
    }

    pub fn observation_window(&self) -> Result<ObservationWindow, PipelineError> {
        ObservationWindow::from_dates(self.window.start, self.window.end)
            .map_err(|e| PipelineError::Config(vec![e.to_string()]))
    }

    pub fn primary_fraction(&self) -> f64 {
        self.residual_fractions[0]
    }

    /// Every violated constraint, not just the first.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut errs = Vec::new();
        if self.window.end < self.window.start {
            errs.push(format!("window end {} precedes start {}", self.window.end, self.window.start));
        } else if let Ok(w) = self.observation_window() {
            let (a, b) = w.full_year_range();
            if b < a {
                errs.push("window contains no full calendar year".into());
            }
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            errs.push(format!("resolution must be positive, got {}", self.resolution));
        }
        if self.louvain_restarts == 0 {
            errs.push("louvain_restarts must be at least 1".into());
        }
        if self.residual_fractions.is_empty() {
            errs.push("residual_fractions must not be empty".into());
        }
        for f in &self.residual_fractions {
            if !(*f > 0.0 && *f < 1.0) {
                errs.push(format!("residual fraction {f} outside (0, 1)"));
            }
        }
        if self.activity_threshold == 0 {
            errs.push("activity_threshold must be at least 1".into());
        }
        if !(self.inflection_bandwidth > 0.0) {
            errs.push("inflection_bandwidth must be positive".into());
        }
        if self.breakpoint_min < 2 || self.breakpoint_max < self.breakpoint_min {
            errs.push(format!(
                "breakpoint range {}..={} invalid (min >= 2, max >= min)",
                self.breakpoint_min, self.breakpoint_max
            ));
        }
        if !(0.0..1.0).contains(&self.distinctness) {
            errs.push(format!("distinctness {} outside [0, 1)", self.distinctness));
        }
        if self.powerlaw_k_min == 0 {
            errs.push("powerlaw_k_min must be at least 1".into());
        }
        if self.bootstrap_replicates == 0 {
            errs.push("bootstrap_replicates must be at least 1".into());
        }
        if self.retention_days <= 0 {
            errs.push("retention_days must be positive".into());
        }
        if self.k_bins.is_empty() {
            errs.push("k_bins must not be empty".into());
        }
        for b in &self.k_bins {
            if b.lo == 0 || b.hi.is_some_and(|h| h < b.lo) {
                errs.push(format!("k bin {} invalid", b.label()));
            }
        }
        let i = &self.inputs;
        if i.commits.is_none() && i.archive.is_empty() {
            errs.push("no commit source: set inputs.commits or inputs.archive".into());
        }
        if errs.is_empty() { Ok(()) } else { Err(PipelineError::Config(errs)) }
    }
}
