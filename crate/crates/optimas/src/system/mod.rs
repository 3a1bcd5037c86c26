//! Compound system graphs and their execution records.
//!
//! A system is a DAG of components indexed 1..=K in topological order, with
//! the system input acting as source node 0. Each component applies a pure
//! transfer to the concatenation of its parents' outputs (parent ids
//! ascending) and the executor adds seeded Gaussian noise scaled by the
//! component's `noise_scale`. A reward function over (system input, final
//! output) closes every trajectory.

pub mod exec;
pub mod io;
pub mod transfer;

use serde::{Deserialize, Serialize};

use crate::config::{ConfigSpace, ConfigValue, JointConfig};
use crate::error::{Error, Result};
use crate::value::{squared_distance, ValueVec};
use transfer::{Matrix, Transfer};

pub use exec::{forward_execute, partial_execute, resume_from, NoiseSource, PartialTrajectory};

/// Index of the source pseudo-node carrying the system input.
pub const SOURCE: usize = 0;

/// One configurable node of the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    /// 1-based index; indices follow the topological order of the edges.
    pub id: usize,
    /// Expected dimensions of the incoming ports, in ascending parent order.
    pub in_dims: Vec<usize>,
    pub out_dim: usize,
    pub config_space: ConfigSpace,
    pub transfer: Transfer,
    /// Scale of the additive Gaussian noise applied to the transfer output.
    pub noise_scale: f64,
}

/// Global reward registry: a bounded scalar function of (input, final output).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    #[serde(flatten)]
    pub kind: RewardKind,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum RewardKind {
    /// R = clamp(max - coeff * ||y - (target_matrix x + target_offset)||^2).
    QuadraticDistance {
        coeff: f64,
        target_matrix: Matrix,
        target_offset: Vec<f64>,
    },
    /// R = clamp(weight . y + bias).
    Linear { weight: Vec<f64>, bias: f64 },
}

impl RewardSpec {
    pub fn evaluate(&self, input: &ValueVec, output: &ValueVec) -> f64 {
        let raw = match &self.kind {
            RewardKind::QuadraticDistance {
                coeff,
                target_matrix,
                target_offset,
            } => {
                let mut target = target_matrix.mul_vec(input.as_slice());
                for (t, o) in target.iter_mut().zip(target_offset) {
                    *t += o;
                }
                self.max - coeff * squared_distance(output.as_slice(), &target)
            }
            RewardKind::Linear { weight, bias } => {
                weight
                    .iter()
                    .zip(output.as_slice())
                    .map(|(w, y)| w * y)
                    .sum::<f64>()
                    + bias
            }
        };
        raw.clamp(self.min, self.max)
    }
}

/// Input-dependent edge gating. The registry is closed so that validation can
/// enumerate every edge subset a selector may produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeSelector {
    /// All edges active for every input.
    #[default]
    All,
    /// `positive_edges` are active only when input[dim] >= threshold;
    /// `negative_edges` only when it is below. Unlisted edges always run.
    InputSign {
        dim: usize,
        threshold: f64,
        positive_edges: Vec<(usize, usize)>,
        negative_edges: Vec<(usize, usize)>,
    },
}

impl EdgeSelector {
    /// Edges active for one input instance.
    pub fn select<'a>(&self, edges: &'a [(usize, usize)], input: &ValueVec) -> Vec<(usize, usize)> {
        match self {
            EdgeSelector::All => edges.to_vec(),
            EdgeSelector::InputSign {
                dim,
                threshold,
                positive_edges,
                negative_edges,
            } => {
                let dropped: &Vec<(usize, usize)> = if input[*dim] >= *threshold {
                    negative_edges
                } else {
                    positive_edges
                };
                edges
                    .iter()
                    .copied()
                    .filter(|e| !dropped.contains(e))
                    .collect()
            }
        }
    }

    /// Every edge subset this selector can produce, for validation.
    pub fn possible_subsets(&self, edges: &[(usize, usize)]) -> Vec<Vec<(usize, usize)>> {
        match self {
            EdgeSelector::All => vec![edges.to_vec()],
            EdgeSelector::InputSign {
                positive_edges,
                negative_edges,
                ..
            } => [negative_edges, positive_edges]
                .iter()
                .map(|dropped| {
                    edges
                        .iter()
                        .copied()
                        .filter(|e| !dropped.contains(e))
                        .collect()
                })
                .collect(),
        }
    }

    fn referenced_edges(&self) -> Vec<(usize, usize)> {
        match self {
            EdgeSelector::All => vec![],
            EdgeSelector::InputSign {
                positive_edges,
                negative_edges,
                ..
            } => positive_edges
                .iter()
                .chain(negative_edges)
                .copied()
                .collect(),
        }
    }
}

/// A validated-on-demand compound system. Immutable after construction and
/// safe to share across threads; execution never mutates the graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemGraph {
    pub components: Vec<Component>,
    /// Dimension of the system input produced by the source node.
    pub source_dim: usize,
    /// Directed edges (i, j): output of node i feeds component j. Node 0 is
    /// the source.
    pub edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "is_default_selector")]
    pub edge_selector: EdgeSelector,
    pub reward: RewardSpec,
}

fn is_default_selector(s: &EdgeSelector) -> bool {
    matches!(s, EdgeSelector::All)
}

/// One violation found by `SystemGraph::validate`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub code: &'static str,
    pub detail: String,
}

/// Report-style validation outcome.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, code: &'static str, detail: impl Into<String>) {
        self.violations.push(Violation {
            code,
            detail: detail.into(),
        });
    }

    /// Converts the report into a hard error when violations exist.
    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            let lines: Vec<String> = self
                .violations
                .iter()
                .map(|v| format!("{}: {}", v.code, v.detail))
                .collect();
            Err(Error::validation(lines.join("; ")))
        }
    }
}

impl SystemGraph {
    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, id: usize) -> &Component {
        &self.components[id - 1]
    }

    /// Ids of components with a non-empty configuration space.
    pub fn configurable_components(&self) -> Vec<usize> {
        self.components
            .iter()
            .filter(|c| !c.config_space.is_empty())
            .map(|c| c.id)
            .collect()
    }

    /// Output dimension of a node (0 = source).
    pub fn node_out_dim(&self, node: usize) -> usize {
        if node == SOURCE {
            self.source_dim
        } else {
            self.component(node).out_dim
        }
    }

    /// Parents of `component` under an edge set, ascending.
    pub fn parents_in(&self, edges: &[(usize, usize)], component: usize) -> Vec<usize> {
        let mut p: Vec<usize> = edges
            .iter()
            .filter(|(_, j)| *j == component)
            .map(|(i, _)| *i)
            .collect();
        p.sort_unstable();
        p.dedup();
        p
    }

    /// Default joint configuration (first option / midpoint / lowest id).
    pub fn default_config(&self) -> JointConfig {
        JointConfig(
            self.components
                .iter()
                .map(|c| c.config_space.default_value())
                .collect(),
        )
    }

    /// Checks a joint configuration against every component's space.
    pub fn check_config(&self, config: &JointConfig) -> Result<()> {
        if config.0.len() != self.components.len() {
            return Err(Error::validation(format!(
                "joint config has {} entries for {} components",
                config.0.len(),
                self.components.len()
            )));
        }
        for c in &self.components {
            c.config_space
                .contains(config.value_for(c.id))
                .map_err(|e| Error::validation(format!("component {}: {e}", c.id)))?;
        }
        Ok(())
    }

    /// Structural validation. Report-style: collects every violation instead
    /// of stopping at the first.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let k = self.components.len();
        if k == 0 {
            report.push("empty-graph", "system has no components");
            return report;
        }
        if self.source_dim == 0 {
            report.push("bad-source", "source dimension must be positive");
        }
        for (i, c) in self.components.iter().enumerate() {
            if c.id != i + 1 {
                report.push(
                    "bad-index",
                    format!("component at position {i} has id {}", c.id),
                );
            }
            if c.out_dim == 0 {
                report.push("bad-dim", format!("component {} has out_dim 0", c.id));
            }
            if !(c.noise_scale.is_finite() && c.noise_scale >= 0.0) {
                report.push(
                    "bad-noise",
                    format!("component {} noise_scale must be finite and >= 0", c.id),
                );
            }
            if let Err(e) = c.config_space.validate() {
                let code = match &c.config_space {
                    ConfigSpace::Discrete { options } if options.is_empty() => "empty-option-set",
                    _ => "bad-config-space",
                };
                report.push(code, format!("component {}: {e}", c.id));
            }
        }
        for &(i, j) in &self.edges {
            if i > k || j > k || j == SOURCE {
                report.push("dangling-edge", format!("edge ({i}, {j}) references no node"));
                continue;
            }
            if i == j {
                report.push("cycle", format!("self-loop on node {i}"));
            } else if i > j {
                report.push(
                    "not-topologically-indexed",
                    format!("edge ({i}, {j}) goes against the index order"),
                );
            }
        }
        for e in self.edge_selector.referenced_edges() {
            if !self.edges.contains(&e) {
                report.push(
                    "selector-unknown-edge",
                    format!("edge selector references edge ({}, {}) not in the graph", e.0, e.1),
                );
            }
        }
        // Port structure under the full edge set.
        for c in &self.components {
            let parents = self.parents_in(&self.edges, c.id);
            if parents.is_empty() {
                report.push("no-parents", format!("component {} has no incoming edge", c.id));
                continue;
            }
            if parents.len() != c.in_dims.len() {
                report.push(
                    "dim-mismatch",
                    format!(
                        "component {} declares {} input ports but has {} parents",
                        c.id,
                        c.in_dims.len(),
                        parents.len()
                    ),
                );
                continue;
            }
            for (port, &p) in parents.iter().enumerate() {
                if self.node_out_dim(p) != c.in_dims[port] {
                    report.push(
                        "dim-mismatch",
                        format!(
                            "component {} port {port} expects dim {} but parent {p} emits {}",
                            c.id,
                            c.in_dims[port],
                            self.node_out_dim(p)
                        ),
                    );
                }
            }
            let total_in: usize = c.in_dims.iter().sum();
            if let Some(implied) = c.transfer.implied_out_dim(total_in) {
                if implied != c.out_dim {
                    report.push(
                        "dim-mismatch",
                        format!(
                            "component {} transfer implies out_dim {implied}, declared {}",
                            c.id, c.out_dim
                        ),
                    );
                }
            }
        }
        if !(self.reward.min < self.reward.max)
            || !self.reward.min.is_finite()
            || !self.reward.max.is_finite()
        {
            report.push("bad-reward-range", "reward bounds must be finite with min < max");
        }
        // The terminal component must stay reachable under every edge subset
        // the selector can produce.
        for subset in self.edge_selector.possible_subsets(&self.edges) {
            if !self.active_components(&subset).contains(&k) {
                report.push(
                    "terminal-unreachable",
                    "an edge selection disconnects the terminal component",
                );
            }
        }
        report
    }

    /// Components reachable from the source under an edge set. A component is
    /// active when at least one selected incoming edge comes from an active
    /// node; ports whose edge was dropped (or whose parent is inactive) are
    /// zero-filled at execution time, so dims stay static under gating.
    pub fn active_components(&self, selected: &[(usize, usize)]) -> Vec<usize> {
        let mut active = vec![false; self.components.len() + 1];
        active[SOURCE] = true;
        for c in &self.components {
            active[c.id] = self
                .parents_in(selected, c.id)
                .iter()
                .any(|&p| active[p]);
        }
        (1..=self.components.len()).filter(|&i| active[i]).collect()
    }
}

/// One executed component record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub component: usize,
    /// Concatenated parent outputs the component consumed.
    pub input: ValueVec,
    pub output: ValueVec,
    pub config: ConfigValue,
}

/// One end-to-end execution of the system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub system_input: ValueVec,
    pub records: Vec<TrajectoryRecord>,
    pub final_output: ValueVec,
    pub global_reward: f64,
    pub seed: u64,
}


#[cfg(test)]
mod tests {
    use super::testkit::*;
    use super::*;

    #[test]
    fn minimal_chain_validates() {
        let g = identity_chain(1, 2);
        assert!(g.validate().is_ok());
    }

    #[test]
    fn reversed_edge_is_flagged_as_not_topological() {
        let mut g = identity_chain(2, 1);
        g.edges = vec![(0, 1), (0, 2), (2, 1)];
        let report = g.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| v.code == "not-topologically-indexed"));
    }

    #[test]
    fn empty_option_set_is_flagged() {
        let mut g = identity_chain(1, 1);
        g.components[0].config_space = ConfigSpace::Discrete { options: vec![] };
        let report = g.validate();
        assert!(report.violations.iter().any(|v| v.code == "empty-option-set"));
    }

    #[test]
    fn dangling_edge_and_dim_mismatch_are_flagged() {
        let mut g = identity_chain(2, 2);
        g.edges.push((1, 9));
        g.components[1].in_dims = vec![3];
        let report = g.validate();
        assert!(report.violations.iter().any(|v| v.code == "dangling-edge"));
        assert!(report.violations.iter().any(|v| v.code == "dim-mismatch"));
    }

    #[test]
    fn reward_clamps_to_declared_bounds() {
        let spec = RewardSpec {
            kind: RewardKind::QuadraticDistance {
                coeff: 1.0,
                target_matrix: Matrix::identity(1),
                target_offset: vec![0.0],
            },
            min: 0.0,
            max: 1.0,
        };
        let x = vv(&[0.0]);
        assert_eq!(spec.evaluate(&x, &vv(&[0.0])), 1.0);
        assert_eq!(spec.evaluate(&x, &vv(&[5.0])), 0.0);
        let mid = spec.evaluate(&x, &vv(&[0.5]));
        assert!((mid - 0.75).abs() < 1e-15);
    }

    #[test]
    fn selector_subsets_cover_both_branches() {
        let mut g = identity_chain(3, 1);
        // Gate the 1->2 edge on the input sign; component 3 keeps its own feed.
        g.edges = vec![(0, 1), (1, 2), (1, 3), (2, 3)];
        g.components[2].in_dims = vec![1, 1];
        g.components[2].transfer = Transfer::Linear {
            weight: Matrix::new(1, 2, vec![1.0, 0.0]).unwrap(),
            bias: vec![0.0],
            config_weight: None,
        };
        let selector = EdgeSelector::InputSign {
            dim: 0,
            threshold: 0.0,
            positive_edges: vec![],
            negative_edges: vec![(1, 2)],
        };
        let subsets = selector.possible_subsets(&g.edges);
        assert_eq!(subsets.len(), 2);
        assert!(subsets.iter().any(|s| s.len() == 4));
        assert!(subsets.iter().any(|s| s.len() == 3));
    }
}
