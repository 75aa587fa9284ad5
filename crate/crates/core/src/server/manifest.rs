//! JSON-lines slide manifests.
//!
//! One object per line: `{"path": "...", "dataset": "...", "mpp": 0.25}`,
//! `mpp` optional. Relative paths resolve against the manifest's directory.
//! Blank lines and lines starting with `#` are skipped.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::slide::{OpenOptions, SlideHandle};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("manifest line {line}: {path}: {reason}")]
    Validation {
        line: usize,
        path: PathBuf,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mpp: Option<f64>,
}

/// A validated manifest with every slide already opened.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub slides: Vec<SlideHandle>,
}

impl DatasetManifest {
    /// Opens every entry, rejecting duplicates and slides without a spacing.
    pub fn from_entries(entries: Vec<ManifestEntry>) -> Result<Self, ManifestError> {
        let lines: Vec<usize> = (1..=entries.len()).collect();
        Self::from_numbered(entries, &lines)
    }

    fn from_numbered(entries: Vec<ManifestEntry>, lines: &[usize]) -> Result<Self, ManifestError> {
        let mut seen = HashSet::new();
        let mut slides = Vec::with_capacity(entries.len());
        for (e, &line) in entries.iter().zip(lines) {
            let invalid = |reason: String| ManifestError::Validation {
                line,
                path: e.path.clone(),
                reason,
            };
            if e.dataset.is_empty() {
                return Err(invalid("empty dataset name".into()));
            }
            if let Some(m) = e.mpp {
                if !(m.is_finite() && m > 0.0) {
                    return Err(invalid(format!("mpp must be positive, got {m}")));
                }
            }
            let key = std::fs::canonicalize(&e.path).unwrap_or_else(|_| e.path.clone());
            if !seen.insert(key) {
                return Err(invalid("duplicate path".into()));
            }
            let opts = OpenOptions { mpp_override: e.mpp };
            let slide = SlideHandle::open_with(&e.path, &e.dataset, &opts).map_err(|err| invalid(err.to_string()))?;
            slides.push(slide);
        }
        Ok(DatasetManifest { entries, slides })
    }

    /// Slide count per dataset.
    pub fn counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.dataset.clone()).or_insert(0) += 1;
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Parses manifest text. `base` is used to resolve relative paths.
pub fn parse_manifest(text: &str, base: &Path) -> Result<DatasetManifest, ManifestError> {
    let mut entries = Vec::new();
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut e: ManifestEntry = serde_json::from_str(trimmed).map_err(|err| ManifestError::Parse {
            line,
            message: err.to_string(),
        })?;
        if e.path.is_relative() {
            e.path = base.join(&e.path);
        }
        entries.push(e);
        lines.push(line);
    }
    DatasetManifest::from_numbered(entries, &lines)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, ManifestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base)
}

/// Renders entries back to JSON lines.
pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> std::io::Result<()> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e).expect("manifest entries serialize"));
        out.push('\n');
    }
    std::fs::write(path, out)
}
