//! Run manifests: a full echo of the spec plus per-row status, enough to
//! regenerate every CSV of a run.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::experiments::{run_with_workers, Table};
use crate::spec::ExperimentSpec;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub file: String,
    pub rows: usize,
    pub failed: usize,
    pub row_status: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub spec: ExperimentSpec,
    pub outputs: Vec<OutputRecord>,
}

impl Manifest {
    pub fn new(spec: &ExperimentSpec, tables: &[Table]) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            spec: spec.clone(),
            outputs: tables
                .iter()
                .map(|t| OutputRecord {
                    file: t.file_name(),
                    rows: t.rows.len(),
                    failed: t.failed_rows(),
                    row_status: t.rows.iter().map(|r| r.status.clone()).collect(),
                })
                .collect(),
        }
    }

    pub fn failed_rows(&self) -> usize {
        self.outputs.iter().map(|o| o.failed).sum()
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}

/// Writes every table and the manifest into `dir`.
pub fn write_outputs(dir: &Path, spec: &ExperimentSpec, tables: &[Table]) -> anyhow::Result<Manifest> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for t in tables {
        let path = dir.join(t.file_name());
        fs::write(&path, t.to_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    let manifest = Manifest::new(spec, tables);
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(manifest)
}

/// Runs `spec` and writes its outputs.
pub fn execute(spec: &ExperimentSpec, dir: &Path, workers: usize) -> anyhow::Result<Manifest> {
    let tables = run_with_workers(spec, workers)?;
    write_outputs(dir, spec, &tables)
}

/// Files whose regenerated bytes differ from the originals.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub manifest: Manifest,
    pub mismatched: Vec<PathBuf>,
}

/// Re-runs the experiment of a manifest into `dir`. With `check`, the new
/// CSVs are compared byte for byte against those next to the manifest.
pub fn replay(manifest_path: &Path, dir: &Path, workers: usize, check: bool) -> anyhow::Result<ReplayReport> {
    let original = Manifest::load(manifest_path)?;
    let manifest = execute(&original.spec, dir, workers)?;
    let mut mismatched = Vec::new();
    if check {
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        for o in &original.outputs {
            let old = fs::read(base.join(&o.file)).with_context(|| format!("reading original {}", o.file))?;
            let new = fs::read(dir.join(&o.file))?;
            if old != new {
                mismatched.push(dir.join(&o.file));
            }
        }
    }
    Ok(ReplayReport { manifest, mismatched })
}
