//! Loading and saving system definitions and trajectory streams.
//!
//! Systems live in a single JSON document; trajectories stream as JSONL, one
//! object per line. All writes go through a temp-file-and-rename so readers
//! never observe a half-written artifact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::system::{SystemGraph, Trajectory};
use crate::value::ValueVec;

/// Writes bytes to `path` atomically (write to sibling temp file, rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let display = path.display().to_string();
    let tmp = path.with_extension("tmp-write");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(display.clone(), e))?;
        f.write_all(bytes).map_err(|e| Error::io(display.clone(), e))?;
        f.sync_all().map_err(|e| Error::io(display.clone(), e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(display, e))
}

/// Serializes a value as pretty JSON and writes it atomically.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        detail: format!("line {} column {}: {e}", e.line(), e.column()),
    })
}

/// Loads a system definition and validates it.
pub fn load_system(path: &Path) -> Result<SystemGraph> {
    let graph: SystemGraph = read_json(path)?;
    graph.validate().into_result()?;
    Ok(graph)
}

pub fn save_system(path: &Path, graph: &SystemGraph) -> Result<()> {
    write_json(path, graph)
}

/// Writes trajectories as JSONL, one object per line.
pub fn save_trajectories(path: &Path, trajectories: &[Trajectory]) -> Result<()> {
    let mut buf = Vec::new();
    for t in trajectories {
        serde_json::to_writer(&mut buf, t).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

pub fn load_trajectories(path: &Path) -> Result<Vec<Trajectory>> {
    read_jsonl(path)
}

/// One system input per line: `{"input": [...]}`.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct InputRecord {
    pub input: ValueVec,
}

pub fn save_inputs(path: &Path, inputs: &[ValueVec]) -> Result<()> {
    let records: Vec<InputRecord> = inputs
        .iter()
        .map(|v| InputRecord { input: v.clone() })
        .collect();
    let mut buf = Vec::new();
    for r in &records {
        serde_json::to_writer(&mut buf, r).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

pub fn load_inputs(path: &Path) -> Result<Vec<ValueVec>> {
    let records: Vec<InputRecord> = read_jsonl(path)?;
    Ok(records.into_iter().map(|r| r.input).collect())
}

/// Reads a JSONL file into a vector, reporting the offending line on error.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            detail: format!("line {}: {e}", lineno + 1),
        })?;
        out.push(item);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::exec::forward_execute;
    use crate::system::testkit::{identity_chain, vv};

    #[test]
    fn system_round_trips_through_json() {
        let g = identity_chain(2, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("system.json");
        save_system(&path, &g).unwrap();
        let loaded = load_system(&path).unwrap();
        assert_eq!(loaded, g);
    }

    #[test]
    fn invalid_system_fails_to_load() {
        let mut g = identity_chain(2, 1);
        g.edges = vec![(0, 1), (2, 1)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("system.json");
        write_json(&path, &g).unwrap();
        assert!(load_system(&path).is_err());
    }

    #[test]
    fn trajectories_round_trip_through_jsonl() {
        let g = identity_chain(2, 1);
        let cfg = g.default_config();
        let ts: Vec<Trajectory> = (0..3)
            .map(|s| forward_execute(&g, &cfg, &vv(&[0.25]), s).unwrap())
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trajectories.jsonl");
        save_trajectories(&path, &ts).unwrap();
        assert_eq!(load_trajectories(&path).unwrap(), ts);
    }

    #[test]
    fn inputs_round_trip_and_report_bad_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("inputs.jsonl");
        let inputs = vec![vv(&[1.0, 2.0]), vv(&[-0.5, 0.0])];
        save_inputs(&path, &inputs).unwrap();
        assert_eq!(load_inputs(&path).unwrap(), inputs);
        std::fs::write(&path, "{\"input\": [1.0]}\nnot json\n").unwrap();
        let err = load_inputs(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }
}
