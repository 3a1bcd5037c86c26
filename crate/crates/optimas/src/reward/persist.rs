//! Reward-network serialization.
//!
//! Parameters are written as base-10 decimals with 17 significant digits so
//! the document is plain JSON, byte-stable, and round-trips every f64
//! exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::reward::net::{NetArchitecture, RewardNet};
use crate::system::io::write_atomic;

/// Formats one f64 with 17 significant digits as a JSON number.
fn format_param(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn net_to_json(net: &RewardNet) -> Result<String> {
    let arch = serde_json::to_string(&net.arch).map_err(|e| Error::Parse {
        path: "<net>".into(),
        detail: e.to_string(),
    })?;
    let mut head_index = String::from("{");
    for (slot, id) in net.arch.heads.iter().enumerate() {
        if slot > 0 {
            head_index.push(',');
        }
        let _ = write!(head_index, "\"{id}\":{slot}");
    }
    head_index.push('}');
    let mut out = String::with_capacity(net.param_count() * 26 + arch.len() + 64);
    out.push_str("{\"architecture\":");
    out.push_str(&arch);
    out.push_str(",\"head_index\":");
    out.push_str(&head_index);
    out.push_str(",\"params\":[");
    for (i, p) in net.params.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format_param(*p));
    }
    out.push_str("]}\n");
    Ok(out)
}

pub fn save_net(path: &Path, net: &RewardNet) -> Result<()> {
    write_atomic(path, net_to_json(net)?.as_bytes())
}

#[derive(Deserialize)]
struct NetDoc {
    architecture: NetArchitecture,
    #[serde(default)]
    head_index: BTreeMap<String, usize>,
    params: Vec<f64>,
}

pub fn load_net(path: &Path) -> Result<RewardNet> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    net_from_json(&text).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })
}

pub fn net_from_json(text: &str) -> Result<RewardNet> {
    let doc: NetDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: "<net>".into(),
        detail: e.to_string(),
    })?;
    if doc.params.len() != doc.architecture.param_count() {
        return Err(Error::validation(format!(
            "parameter vector length {} does not match architecture ({})",
            doc.params.len(),
            doc.architecture.param_count()
        )));
    }
    for (id, slot) in &doc.head_index {
        let expect = doc.architecture.heads.iter().position(|h| h.to_string() == *id);
        if expect != Some(*slot) {
            return Err(Error::validation(format!(
                "head index entry {id} -> {slot} contradicts architecture"
            )));
        }
    }
    Ok(RewardNet {
        arch: doc.architecture,
        params: doc.params,
    })
}
