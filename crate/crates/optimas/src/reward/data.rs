//! Preference records and datasets.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::io::{read_jsonl, write_atomic};
use crate::value::ValueVec;

/// One labeled preference pair for a component. `gap` is the estimated
/// expected-global-reward difference (winner minus loser) that produced the
/// label; it is signed under stochastic labeling and non-negative under
/// deterministic labeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    #[serde(rename = "k")]
    pub component: usize,
    #[serde(rename = "x_k")]
    pub context: ValueVec,
    pub y_plus: ValueVec,
    pub y_minus: ValueVec,
    pub gap: f64,
    /// Joint-config snapshot the pair was generated under.
    pub snapshot_id: u64,
    /// Loop iteration of origin (0 for the offline phase).
    pub iteration: usize,
}

/// A collection of preference records with per-component access.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreferenceDataset {
    pub records: Vec<PreferenceRecord>,
    /// Snapshot id of the configuration the dataset was generated under.
    pub snapshot_id: u64,
}

impl PreferenceDataset {
    pub fn new(records: Vec<PreferenceRecord>, snapshot_id: u64) -> Self {
        PreferenceDataset {
            records,
            snapshot_id,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Component ids present, ascending.
    pub fn components(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.records.iter().map(|r| r.component).collect();
        set.into_iter().collect()
    }

    pub fn for_component(&self, component: usize) -> Vec<&PreferenceRecord> {
        self.records
            .iter()
            .filter(|r| r.component == component)
            .collect()
    }

    /// Merges another dataset in, keeping this dataset's snapshot id.
    pub fn extend(&mut self, other: PreferenceDataset) {
        self.records.extend(other.records);
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut buf, r).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?;
            buf.push(b'\n');
        }
        write_atomic(path, &buf)
    }

    pub fn load_jsonl(path: &Path) -> Result<Self> {
        let records: Vec<PreferenceRecord> = read_jsonl(path)?;
        let snapshot_id = records.first().map(|r| r.snapshot_id).unwrap_or(0);
        Ok(PreferenceDataset {
            records,
            snapshot_id,
        })
    }
}
