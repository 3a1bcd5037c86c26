//! Synthetic compound systems with exactly computable objectives.
//!
//! Three small systems cover the configuration-space zoo while keeping the
//! joint space exhaustively enumerable:
//!
//! - **S1** — three-component chain: bounded continuous offset, discrete gain
//!   (five options), candidate pool of five output offsets. Reward is a
//!   clamped negative quadratic distance to a hidden input-dependent target.
//! - **S2** — four-component diamond: a gated-routing selector (four linear
//!   routes) feeding two fixed scorers whose outputs an aggregator rescales
//!   with weights from {0.1, 1.0}^2.
//! - **S3** — three-component chain: candidate-pool rewriter, a retriever
//!   with hyperparameter k in {1, 5, 10, 25} whose quality is unimodal in k,
//!   and a fixed reader.
//!
//! Constants are chosen so every coordinate slice has a unique maximizer with
//! comfortable margins; `tied_variant` deliberately breaks that for negative
//! testing.

pub mod checks;
pub mod oracle;
pub mod verify;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Candidate, ConfigSpace};
use crate::seed::{indexed_seed, rng_for};
use crate::system::transfer::{LookupMode, Matrix, Route, Transfer};
use crate::system::{Component, EdgeSelector, RewardKind, RewardSpec, SystemGraph};
use crate::value::ValueVec;

/// Identifier of a built-in synthetic system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SyntheticSystemId {
    S1,
    S2,
    S3,
}

impl std::str::FromStr for SyntheticSystemId {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Ok(SyntheticSystemId::S1),
            "S2" => Ok(SyntheticSystemId::S2),
            "S3" => Ok(SyntheticSystemId::S3),
            other => Err(crate::error::Error::validation(format!(
                "unknown synthetic system {other} (expected S1, S2, or S3)"
            ))),
        }
    }
}

impl std::fmt::Display for SyntheticSystemId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SyntheticSystemId::S1 => "S1",
            SyntheticSystemId::S2 => "S2",
            SyntheticSystemId::S3 => "S3",
        };
        f.write_str(s)
    }
}

/// Ground-truth notes shipped with each generated system.
#[derive(Debug, Clone, Serialize)]
pub struct SystemDoc {
    pub id: SyntheticSystemId,
    pub input_dim: usize,
    /// Inputs are uniform over this box.
    pub input_lower: Vec<f64>,
    pub input_upper: Vec<f64>,
    /// Human-readable structure notes.
    pub notes: &'static str,
}

/// A generated synthetic system plus its documentation.
#[derive(Debug, Clone)]
pub struct SyntheticSystem {
    pub graph: SystemGraph,
    pub doc: SystemDoc,
}

fn vv(data: &[f64]) -> ValueVec {
    ValueVec::from(data.to_vec())
}

/// S1 gain options.
pub const S1_GAINS: [f64; 5] = [0.8, 0.9, 1.0, 1.1, 1.2];
/// S1 pool offsets, by candidate id.
pub const S1_OFFSETS: [f64; 5] = [-0.6, -0.3, 0.0, 0.3, 0.6];
/// S1 hidden target: reward peaks where the final output equals x + this.
pub const S1_TARGET_OFFSET: f64 = 0.05;
/// S2 aggregator weight options, lexicographic over {0.1, 1.0}^2.
pub const S2_WEIGHT_OPTIONS: [[f64; 2]; 4] =
    [[0.1, 0.1], [0.1, 1.0], [1.0, 0.1], [1.0, 1.0]];
/// S3 retriever hyperparameter options.
pub const S3_RETRIEVAL_K: [f64; 4] = [1.0, 5.0, 10.0, 25.0];
/// S3 pool offsets, by candidate id.
pub const S3_OFFSETS: [f64; 5] = [-0.4, -0.15, 0.05, 0.2, 0.45];

/// Builds one of the synthetic systems. `tied_variant` removes the
/// tie-breaking margins (S1 only) to produce coordinate slices with
/// non-unique maximizers for negative tests.
pub fn make_system(id: SyntheticSystemId, tied_variant: bool) -> SyntheticSystem {
    match id {
        SyntheticSystemId::S1 => make_s1(tied_variant),
        SyntheticSystemId::S2 => make_s2(),
        SyntheticSystemId::S3 => make_s3(),
    }
}

fn pool(offsets: &[f64]) -> ConfigSpace {
    ConfigSpace::CandidatePool {
        candidates: offsets
            .iter()
            .enumerate()
            .map(|(id, o)| Candidate {
                id: id as u32,
                params: vv(&[*o]),
            })
            .collect(),
    }
}

fn make_s1(tied: bool) -> SyntheticSystem {
    // Chain: y1 = x + v1 (deterministic), y2 = g * y1 + n2, y3 = y2 + b.
    // Reward 1 - 2 * (y3 - (x + 0.05))^2 clamped to [0, 1]; the hidden
    // optimum is v1 = 0.05, g = 1.0, b = 0.0. The first component is
    // noiseless so downstream contexts determine the hidden target exactly;
    // its candidate diversity comes from configuration perturbation. The
    // tied variant moves the target onto a pool option so that two (v1, b)
    // slices attain identical values.
    let target_offset = if tied { 0.0 } else { S1_TARGET_OFFSET };
    let gains: Vec<ValueVec> = S1_GAINS.iter().map(|g| vv(&[*g])).collect();
    let graph = SystemGraph {
        components: vec![
            Component {
                id: 1,
                in_dims: vec![1],
                out_dim: 1,
                config_space: ConfigSpace::Continuous {
                    lower: vv(&[-0.06]),
                    upper: vv(&[0.18]),
                },
                transfer: Transfer::Linear {
                    weight: Matrix::identity(1),
                    bias: vec![0.0],
                    config_weight: Some(Matrix::identity(1)),
                },
                noise_scale: 0.0,
            },
            Component {
                id: 2,
                in_dims: vec![1],
                out_dim: 1,
                config_space: ConfigSpace::Discrete { options: gains },
                transfer: Transfer::LookupTable {
                    mode: LookupMode::Scale,
                },
                noise_scale: 0.05,
            },
            Component {
                id: 3,
                in_dims: vec![1],
                out_dim: 1,
                config_space: pool(&S1_OFFSETS),
                transfer: Transfer::LookupTable {
                    mode: LookupMode::Offset,
                },
                noise_scale: 0.0,
            },
        ],
        source_dim: 1,
        edges: vec![(0, 1), (1, 2), (2, 3)],
        edge_selector: EdgeSelector::All,
        reward: RewardSpec {
            kind: RewardKind::QuadraticDistance {
                coeff: 2.0,
                target_matrix: Matrix::identity(1),
                target_offset: vec![target_offset],
            },
            min: 0.0,
            max: 1.0,
        },
    };
    SyntheticSystem {
        graph,
        doc: SystemDoc {
            id: SyntheticSystemId::S1,
            input_dim: 1,
            input_lower: vec![-1.0],
            input_upper: vec![1.0],
            notes: "chain: continuous offset -> discrete gain (5) -> pool offset (5); \
                    optimum v1=0.05, gain=1.0, pool id 2",
        },
    }
}

fn make_s2() -> SyntheticSystem {
    // Diamond: selector routes x through one of four linear maps, two fixed
    // scorers project the routed value, the aggregator rescales both scores.
    // The reward target equals the identity route with weights (1, 1), so the
    // optimum is route index 3, weight index 3.
    let u = [0.9, 0.3];
    let w = [0.25, 1.1];
    let routes = vec![
        Route {
            weight: Matrix::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap(),
            bias: vec![0.0, 0.0],
        },
        Route {
            weight: Matrix::new(2, 2, vec![0.6, 0.0, 0.0, 1.4]).unwrap(),
            bias: vec![0.0, 0.0],
        },
        Route {
            weight: Matrix::new(2, 2, vec![-1.0, 0.0, 0.0, -1.0]).unwrap(),
            bias: vec![0.0, 0.0],
        },
        Route {
            weight: Matrix::identity(2),
            bias: vec![0.0, 0.0],
        },
    ];
    let route_options: Vec<ValueVec> = (0..4).map(|m| vv(&[m as f64])).collect();
    let weight_options: Vec<ValueVec> = S2_WEIGHT_OPTIONS.iter().map(|o| vv(o)).collect();
    let graph = SystemGraph {
        components: vec![
            Component {
                id: 1,
                in_dims: vec![2],
                out_dim: 2,
                config_space: ConfigSpace::Discrete {
                    options: route_options,
                },
                transfer: Transfer::GatedRouting { routes },
                noise_scale: 0.04,
            },
            Component {
                id: 2,
                in_dims: vec![2],
                out_dim: 1,
                config_space: ConfigSpace::Empty,
                transfer: Transfer::Linear {
                    weight: Matrix::new(1, 2, u.to_vec()).unwrap(),
                    bias: vec![0.05],
                    config_weight: None,
                },
                noise_scale: 0.0,
            },
            Component {
                id: 3,
                in_dims: vec![2],
                out_dim: 1,
                config_space: ConfigSpace::Empty,
                transfer: Transfer::Linear {
                    weight: Matrix::new(1, 2, w.to_vec()).unwrap(),
                    bias: vec![-0.03],
                    config_weight: None,
                },
                noise_scale: 0.0,
            },
            Component {
                id: 4,
                in_dims: vec![1, 1],
                out_dim: 2,
                config_space: ConfigSpace::Discrete {
                    options: weight_options,
                },
                transfer: Transfer::LookupTable {
                    mode: LookupMode::Scale,
                },
                noise_scale: 0.0,
            },
        ],
        source_dim: 2,
        edges: vec![(0, 1), (1, 2), (1, 3), (2, 4), (3, 4)],
        edge_selector: EdgeSelector::All,
        reward: RewardSpec {
            kind: RewardKind::QuadraticDistance {
                coeff: 1.0,
                target_matrix: Matrix::new(2, 2, vec![u[0], u[1], w[0], w[1]]).unwrap(),
                target_offset: vec![0.05, -0.03],
            },
            min: 0.0,
            max: 1.0,
        },
    };
    SyntheticSystem {
        graph,
        doc: SystemDoc {
            id: SyntheticSystemId::S2,
            input_dim: 2,
            input_lower: vec![-1.0, -1.0],
            input_upper: vec![1.0, 1.0],
            notes: "diamond: 4-route selector -> two fixed scorers -> aggregator with \
                    weights in {0.1,1.0}^2; optimum route 3, weights (1,1)",
        },
    }
}

fn make_s3() -> SyntheticSystem {
    // Chain: y1 = x + p + n1, y2 = y1 + (0.35 - 0.002 (k - 10)^2),
    // y3 = 0.8 y2 + 0.1; reward peaks at p = 0.05, k = 10, and the four k
    // values give a unimodal reward profile 1 < 5 < 10 > 25.
    let k_options: Vec<ValueVec> = S3_RETRIEVAL_K.iter().map(|k| vv(&[*k])).collect();
    let target = 0.1 + 0.8 * (S3_OFFSETS[2] + 0.35);
    let graph = SystemGraph {
        components: vec![
            Component {
                id: 1,
                in_dims: vec![1],
                out_dim: 1,
                config_space: pool(&S3_OFFSETS),
                transfer: Transfer::LookupTable {
                    mode: LookupMode::Offset,
                },
                noise_scale: 0.05,
            },
            Component {
                id: 2,
                in_dims: vec![1],
                out_dim: 1,
                config_space: ConfigSpace::Discrete { options: k_options },
                transfer: Transfer::QuadraticBowl {
                    center: vec![10.0],
                    curvature: vec![0.002],
                    peak: 0.35,
                    direction: vec![1.0],
                },
                noise_scale: 0.0,
            },
            Component {
                id: 3,
                in_dims: vec![1],
                out_dim: 1,
                config_space: ConfigSpace::Empty,
                transfer: Transfer::Linear {
                    weight: Matrix::new(1, 1, vec![0.8]).unwrap(),
                    bias: vec![0.1],
                    config_weight: None,
                },
                noise_scale: 0.0,
            },
        ],
        source_dim: 1,
        edges: vec![(0, 1), (1, 2), (2, 3)],
        edge_selector: EdgeSelector::All,
        reward: RewardSpec {
            kind: RewardKind::QuadraticDistance {
                coeff: 2.0,
                target_matrix: Matrix::new(1, 1, vec![0.8]).unwrap(),
                target_offset: vec![target],
            },
            min: 0.0,
            max: 1.0,
        },
    };
    SyntheticSystem {
        graph,
        doc: SystemDoc {
            id: SyntheticSystemId::S3,
            input_dim: 1,
            input_lower: vec![-1.0],
            input_upper: vec![1.0],
            notes: "chain: pool offset (5) -> retrieval k in {1,5,10,25} -> fixed reader; \
                    optimum pool id 2, k=10",
        },
    }
}

/// Samples `n` inputs uniformly from the system's documented input box.
pub fn sample_inputs(doc: &SystemDoc, n: usize, seed: u64) -> Vec<ValueVec> {
    (0..n)
        .map(|i| {
            let mut rng = rng_for(indexed_seed(seed, i as u64));
            let v: Vec<f64> = doc
                .input_lower
                .iter()
                .zip(&doc.input_upper)
                .map(|(l, u)| rng.gen_range(*l..*u))
                .collect();
            ValueVec::from(v)
        })
        .collect()
}

/// Deterministic midpoint grid over the input box: `per_axis` points per
/// dimension, tensorized. Used by the exact oracles.
pub fn grid_inputs(doc: &SystemDoc, per_axis: usize) -> Vec<ValueVec> {
    let dim = doc.input_dim;
    let mut out = Vec::with_capacity(per_axis.pow(dim as u32));
    let mut counter = vec![0usize; dim];
    loop {
        let point: Vec<f64> = (0..dim)
            .map(|d| {
                let frac = (counter[d] as f64 + 0.5) / per_axis as f64;
                doc.input_lower[d] + frac * (doc.input_upper[d] - doc.input_lower[d])
            })
            .collect();
        out.push(ValueVec::from(point));
        let mut d = 0;
        loop {
            if d == dim {
                return out;
            }
            counter[d] += 1;
            if counter[d] < per_axis {
                break;
            }
            counter[d] = 0;
            d += 1;
        }
    }
}
