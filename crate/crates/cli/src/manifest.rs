//! Run manifests: everything needed to repeat an induction run.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use taxoprompt::induction::SkippedTerm;
use taxoprompt::{Method, ModelKind, Normalization, Term};

use crate::settings::Settings;

pub const CANONICALIZATION: &str =
    "terms lowercased, underscores mapped to spaces, whitespace collapsed";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        ToolInfo {
            name: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemplateInfo {
    pub name: String,
    pub pattern: String,
    pub period: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelInfo {
    pub name: String,
    pub kind: ModelKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileInfo {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileInfo {
    pub fn of(path: &Path) -> anyhow::Result<FileInfo> {
        Ok(FileInfo {
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: ToolInfo,
    pub method: Method,
    pub template: TemplateInfo,
    pub k: usize,
    pub normalization: Normalization,
    pub model: ModelInfo,
    pub terminology: FileInfo,
    pub terms: usize,
    pub duplicate_terms: usize,
    pub output: FileInfo,
    pub edges: usize,
    pub skipped: Vec<SkippedTerm>,
    /// Terms that cannot be predicted because they span several tokens.
    pub excluded_candidates: Vec<Term>,
    pub canonicalization: String,
    pub started_at: String,
    pub finished_at: String,
    /// Merged flags and config; `induce --config` on this file repeats the run.
    pub settings: Settings,
}

impl RunManifest {
    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json + "\n")
            .with_context(|| format!("cannot write manifest {}", path.display()))
    }
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

pub fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// `out.tsv` → `out.tsv.manifest.json`.
pub fn default_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_os_string();
    name.push(".manifest.json");
    PathBuf::from(name)
}
