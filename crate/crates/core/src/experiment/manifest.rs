use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::CellKey;
use crate::error::{Error, Result};
use crate::temporal::UsageHistograms;

pub const MANIFEST_FORMAT: &str = "inforelay-manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Headline numbers of a completed cell, kept so summaries need no CSV parsing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub final_accuracy: f64,
    pub epochs_used: usize,
    pub restarts: usize,
    /// Overall accuracy at delays 0..=9.
    pub delay_accuracy: Vec<f64>,
    /// Undefined when every consecutive pair had zero variance.
    pub correlation: Option<f64>,
    pub overlap: f64,
    pub usage: UsageHistograms,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellOutcome {
    Completed { metrics: CellMetrics },
    Failed { error: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the sweep root, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub key: CellKey,
    pub seed: u64,
    pub dir: String,
    pub outcome: CellOutcome,
    pub files: Vec<FileEntry>,
}

impl CellRecord {
    pub fn is_completed(&self) -> bool {
        matches!(self.outcome, CellOutcome::Completed { .. })
    }

    pub fn metrics(&self) -> Option<&CellMetrics> {
        match &self.outcome {
            CellOutcome::Completed { metrics } => Some(metrics),
            CellOutcome::Failed { .. } => None,
        }
    }

    /// True when every listed file exists under `root` with the recorded checksum.
    pub fn files_intact(&self, root: &Path) -> bool {
        self.files.iter().all(|f| {
            std::fs::read(root.join(&f.path))
                .map(|bytes| sha256_hex(&bytes) == f.sha256)
                .unwrap_or(false)
        })
    }
}

/// Index of a sweep's output: one record per cell, sorted by cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub base_seed: u64,
    pub cells: Vec<CellRecord>,
}

impl Manifest {
    pub fn new(base_seed: u64) -> Self {
        Manifest {
            format: MANIFEST_FORMAT.to_string(),
            base_seed,
            cells: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Parse(format!("unsupported manifest format `{}`", m.format)));
        }
        if m.cells.windows(2).any(|w| w[0].key >= w[1].key) {
            return Err(Error::Parse("manifest cells must be sorted and unique".into()));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Writes through a temporary file so a crash never leaves a torn manifest.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, self.to_json()?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn get(&self, key: &CellKey) -> Option<&CellRecord> {
        self.cells
            .binary_search_by(|r| r.key.cmp(key))
            .ok()
            .map(|i| &self.cells[i])
    }

    /// Inserts or replaces the record for its cell, keeping the list sorted.
    pub fn upsert(&mut self, record: CellRecord) {
        match self.cells.binary_search_by(|r| r.key.cmp(&record.key)) {
            Ok(i) => self.cells[i] = record,
            Err(i) => self.cells.insert(i, record),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
