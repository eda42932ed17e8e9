use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lab::MetricReport;
use crate::store::write_atomic;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub id: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub files: Vec<PathBuf>,
}

impl CellRecord {
    pub fn ok(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            ok: true,
            error: None,
            seed: None,
            metrics: None,
            files: Vec::new(),
        }
    }

    pub fn failed(id: impl Into<String>, error: impl ToString) -> Self {
        Self {
            ok: false,
            error: Some(error.to_string()),
            ..Self::ok(id)
        }
    }
}

/// What a command did: per-cell outcomes, the files it wrote and how long it took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub manifest_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub cells: Vec<CellRecord>,
    /// Report files, relative to nothing: paths as written.
    pub outputs: Vec<PathBuf>,
    pub elapsed_secs: f64,
}

impl RunRecord {
    pub fn failures(&self) -> usize {
        self.cells.iter().filter(|c| !c.ok).count()
    }

    /// Every file referenced by cells and outputs.
    pub fn files(&self) -> impl Iterator<Item = &PathBuf> {
        self.cells
            .iter()
            .flat_map(|c| &c.files)
            .chain(&self.outputs)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_vec_pretty(self)?;
        json.push(b'\n');
        write_atomic(path, &json)
    }
}
