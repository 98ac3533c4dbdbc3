use super::PipelineError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StageStatus {
    Completed,
    Skipped { reason: String },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: String,
    #[serde(flatten)]
    pub status: StageStatus,
    /// Analyses inside the stage that could not be computed, with reasons.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestFile>,
    pub stages: Vec<StageEntry>,
}

/// Emitted files keyed by name, plus the stage ledger and metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportBundle {
    pub files: BTreeMap<String, Vec<u8>>,
    pub stages: Vec<StageEntry>,
    pub metadata: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ReportBundle {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.insert(name.to_string(), bytes);
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), PipelineError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| PipelineError::Output(e.to_string()))?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    pub fn add_csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), PipelineError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| PipelineError::Output(format!("{name}: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| PipelineError::Output(format!("{name}: {e}")))?;
        self.add(name, bytes);
        Ok(())
    }

    pub fn stage(&self, name: &str) -> Option<&StageEntry> {
        self.stages.iter().find(|s| s.stage == name)
    }

    fn metadata_bytes(&self) -> Vec<u8> {
        let mut b = serde_json::to_vec_pretty(&self.metadata).expect("metadata is plain JSON");
        b.push(b'\n');
        b
    }

    /// Digests of every emitted file including `metadata.json`.
    pub fn manifest(&self) -> Manifest {
        let meta = self.metadata_bytes();
        let mut files: Vec<ManifestFile> = self
            .files
            .iter()
            .map(|(name, b)| ManifestFile { name: name.clone(), sha256: sha256_hex(b), bytes: b.len() })
            .collect();
        files.push(ManifestFile { name: "metadata.json".into(), sha256: sha256_hex(&meta), bytes: meta.len() });
        files.sort_by(|a, b| a.name.cmp(&b.name));
        Manifest { files, stages: self.stages.clone() }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> PipelineError {
    PipelineError::Output(format!("{}: {e}", path.display()))
}

/// Writes the bundle into a sibling staging directory and renames it into
/// place. An existing directory is only replaced when it holds a previous
/// report (has a `manifest.json`) or is empty.
pub fn emit_report(bundle: &ReportBundle, out: &Path) -> Result<Manifest, PipelineError> {
    if out.exists() {
        let is_report = out.join("manifest.json").is_file();
        let is_empty = fs::read_dir(out).map_err(|e| io_err(out, e))?.next().is_none();
        if !is_report && !is_empty {
            return Err(PipelineError::Output(format!(
                "{} exists and is not a previous report; refusing to overwrite",
                out.display()
            )));
        }
    }
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = out.file_name().ok_or_else(|| PipelineError::Output(format!("bad output path {}", out.display())))?;
    fs::create_dir_all(&parent).map_err(|e| io_err(&parent, e))?;
    let staging = parent.join(format!(".{}.staging-{}", name.to_string_lossy(), std::process::id()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| io_err(&staging, e))?;
    }
    fs::create_dir(&staging).map_err(|e| io_err(&staging, e))?;
    let manifest = bundle.manifest();
    let write_all = || -> Result<(), PipelineError> {
        for (name, bytes) in &bundle.files {
            let p = staging.join(name);
            fs::write(&p, bytes).map_err(|e| io_err(&p, e))?;
        }
        let p = staging.join("metadata.json");
        fs::write(&p, bundle.metadata_bytes()).map_err(|e| io_err(&p, e))?;
        let mut m = serde_json::to_vec_pretty(&manifest).map_err(|e| PipelineError::Output(e.to_string()))?;
        m.push(b'\n');
        let p = staging.join("manifest.json");
        fs::write(&p, m).map_err(|e| io_err(&p, e))
    };
    if let Err(e) = write_all() {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    if out.exists() {
        fs::remove_dir_all(out).map_err(|e| io_err(out, e))?;
    }
    fs::rename(&staging, out).map_err(|e| io_err(out, e))?;
    Ok(manifest)
}
