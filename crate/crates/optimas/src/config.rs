//! Component configuration spaces and values.
//!
//! Each component carries one of four configuration kinds: nothing to tune,
//! a discrete option set, a bounded continuous vector, or a pool of
//! identified candidates (prompt-like alternatives with parameter vectors).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::fnv1a64;
use crate::value::ValueVec;

/// One member of a candidate pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: u32,
    pub params: ValueVec,
}

/// The legal domain of one component's configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConfigSpace {
    Empty,
    Discrete { options: Vec<ValueVec> },
    Continuous { lower: ValueVec, upper: ValueVec },
    CandidatePool { candidates: Vec<Candidate> },
}

impl ConfigSpace {
    pub fn is_empty(&self) -> bool {
        matches!(self, ConfigSpace::Empty)
    }

    /// Structural validation of the space itself.
    pub fn validate(&self) -> Result<()> {
        match self {
            ConfigSpace::Empty => Ok(()),
            ConfigSpace::Discrete { options } => {
                if options.is_empty() {
                    return Err(Error::validation("empty option set"));
                }
                for (i, a) in options.iter().enumerate() {
                    if a.dim() != options[0].dim() {
                        return Err(Error::validation("discrete options differ in dim"));
                    }
                    for b in options.iter().skip(i + 1) {
                        if a == b {
                            return Err(Error::validation("discrete options must be distinct"));
                        }
                    }
                }
                Ok(())
            }
            ConfigSpace::Continuous { lower, upper } => {
                if lower.dim() != upper.dim() {
                    return Err(Error::validation("continuous bounds differ in dim"));
                }
                if lower.iter().zip(upper.iter()).any(|(l, u)| l > u) {
                    return Err(Error::validation("continuous lower bound exceeds upper"));
                }
                Ok(())
            }
            ConfigSpace::CandidatePool { candidates } => {
                if candidates.is_empty() {
                    return Err(Error::validation("empty candidate pool"));
                }
                for (i, a) in candidates.iter().enumerate() {
                    for b in candidates.iter().skip(i + 1) {
                        if a.id == b.id {
                            return Err(Error::validation(format!(
                                "duplicate candidate id {}",
                                a.id
                            )));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// Checks that a value lies inside this space.
    pub fn contains(&self, value: &ConfigValue) -> Result<()> {
        match (self, value) {
            (ConfigSpace::Empty, ConfigValue::Empty) => Ok(()),
            (ConfigSpace::Discrete { options }, ConfigValue::DiscreteIndex(i)) => {
                if *i < options.len() {
                    Ok(())
                } else {
                    Err(Error::validation(format!(
                        "discrete index {i} out of range (size {})",
                        options.len()
                    )))
                }
            }
            (ConfigSpace::Continuous { lower, upper }, ConfigValue::ContinuousVec(v)) => {
                if v.dim() != lower.dim() {
                    return Err(Error::validation("continuous value dim mismatch"));
                }
                let inside = v
                    .iter()
                    .zip(lower.iter().zip(upper.iter()))
                    .all(|(x, (l, u))| x >= l && x <= u);
                if inside {
                    Ok(())
                } else {
                    Err(Error::validation("continuous value outside bounds"))
                }
            }
            (ConfigSpace::CandidatePool { candidates }, ConfigValue::CandidateId(id)) => {
                if candidates.iter().any(|c| c.id == *id) {
                    Ok(())
                } else {
                    Err(Error::validation(format!("candidate id {id} not in pool")))
                }
            }
            _ => Err(Error::validation("config value kind does not match space")),
        }
    }

    /// Default starting value: first option, interval midpoint, or lowest id.
    pub fn default_value(&self) -> ConfigValue {
        match self {
            ConfigSpace::Empty => ConfigValue::Empty,
            ConfigSpace::Discrete { .. } => ConfigValue::DiscreteIndex(0),
            ConfigSpace::Continuous { lower, upper } => ConfigValue::ContinuousVec(
                lower
                    .iter()
                    .zip(upper.iter())
                    .map(|(l, u)| 0.5 * (l + u))
                    .collect::<Vec<_>>()
                    .into(),
            ),
            ConfigSpace::CandidatePool { candidates } => {
                let id = candidates.iter().map(|c| c.id).min().unwrap_or(0);
                ConfigValue::CandidateId(id)
            }
        }
    }

    /// Number of distinct choices, if finite.
    pub fn finite_size(&self) -> Option<usize> {
        match self {
            ConfigSpace::Empty => Some(1),
            ConfigSpace::Discrete { options } => Some(options.len()),
            ConfigSpace::Continuous { .. } => None,
            ConfigSpace::CandidatePool { candidates } => Some(candidates.len()),
        }
    }
}

/// One component's configured value, matching its space kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConfigValue {
    Empty,
    DiscreteIndex(usize),
    ContinuousVec(ValueVec),
    CandidateId(u32),
}

impl ConfigValue {
    /// The numeric vector a transfer function sees for this value.
    /// Discrete values map to their option vector, pool ids to their
    /// candidate parameters; `Empty` maps to no vector.
    pub fn as_param_vec<'a>(&'a self, space: &'a ConfigSpace) -> Option<&'a ValueVec> {
        match (self, space) {
            (ConfigValue::DiscreteIndex(i), ConfigSpace::Discrete { options }) => options.get(*i),
            (ConfigValue::ContinuousVec(v), _) => Some(v),
            (ConfigValue::CandidateId(id), ConfigSpace::CandidatePool { candidates }) => {
                candidates.iter().find(|c| c.id == *id).map(|c| &c.params)
            }
            _ => None,
        }
    }

    fn hash_bytes(&self, out: &mut Vec<u8>) {
        match self {
            ConfigValue::Empty => out.push(0),
            ConfigValue::DiscreteIndex(i) => {
                out.push(1);
                out.extend_from_slice(&(*i as u64).to_le_bytes());
            }
            ConfigValue::ContinuousVec(v) => {
                out.push(2);
                for x in v.iter() {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            ConfigValue::CandidateId(id) => {
                out.push(3);
                out.extend_from_slice(&id.to_le_bytes());
            }
        }
    }
}

/// The joint configuration of a whole system, indexed by component id
/// (1-based; entry `k - 1` belongs to component `k`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointConfig(pub Vec<ConfigValue>);

impl JointConfig {
    pub fn value_for(&self, component: usize) -> &ConfigValue {
        &self.0[component - 1]
    }

    pub fn with_value(&self, component: usize, value: ConfigValue) -> JointConfig {
        let mut next = self.clone();
        next.0[component - 1] = value;
        next
    }

    /// Stable snapshot id: FNV-1a over the byte encoding of every value.
    pub fn snapshot_id(&self) -> u64 {
        let mut bytes = Vec::new();
        for v in &self.0 {
            v.hash_bytes(&mut bytes);
        }
        fnv1a64(&bytes)
    }
}
