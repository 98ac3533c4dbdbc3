//! End-to-end orchestration: configuration, the staged run, the report
//! bundle and a planted-truth synthetic ecosystem generator.

mod config;
mod export;
mod report;
mod run;
mod synth;

pub use config::{InputPaths, PipelineConfig, WindowConfig};
pub use report::{emit_report, sha256_hex, Manifest, ManifestFile, ReportBundle, StageEntry, StageStatus};
pub use run::{
    run_pipeline, run_pipeline_until, BreadthOutput, CommunitiesOutput, FrictionOutput, IngestOutput,
    PipelineResults, SurvivalOutput, TemporalOutput,
};
pub use synth::{synth_generate, CohortSpec, GroundTruth, SynthOutput, SynthSpec};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("input error: {0}")]
    Input(String),
    #[error("stage '{stage}' failed: {message}")]
    Stage { stage: String, message: String, partial: Box<ReportBundle> },
    #[error("output error: {0}")]
    Output(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Communities,
    Breadth,
    Temporal,
    Survival,
    Friction,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::Ingest, Stage::Communities, Stage::Breadth, Stage::Temporal, Stage::Survival, Stage::Friction];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Communities => "communities",
            Stage::Breadth => "breadth",
            Stage::Temporal => "temporal",
            Stage::Survival => "survival",
            Stage::Friction => "friction",
        }
    }
}

/// Independent 64-bit seed for a named consumer of the master seed.
pub fn derive_seed(master: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(name.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("32-byte digest"))
}
