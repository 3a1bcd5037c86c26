//! optimas: local-reward optimization for compound pipelines.
//!
//! A compound pipeline is a DAG of components with heterogeneous
//! configuration spaces (discrete choices, bounded continuous vectors,
//! candidate pools, or nothing to tune). This crate learns one local reward
//! function per configurable component — a shared feature backbone with
//! per-component linear heads, trained on pairwise preferences whose labels
//! come from Monte-Carlo estimates of downstream global reward — and runs a
//! block-coordinate loop that picks a component, refreshes its reward head
//! online, locally optimizes its configuration inside a trust region, and
//! accepts the update only when held-out global reward does not drop.
//!
//! Module map:
//!
//! - [`system`] — graph definition, validation, deterministic execution.
//! - [`reward`] — reward network, ranking loss, offline/online training.
//! - [`preference`] — candidate sampling, rollout estimates, pair labeling.
//! - [`optimizer`] — component scheduling, local optimizers, the main loop.
//! - [`bench`] — synthetic systems with exact enumeration oracles and the
//!   convergence/alignment/shift verification harness.
//! - [`cli`] — run configuration, metrics emission, subcommand entry points.
//!
//! Everything is deterministic given a root seed: randomness flows through
//! named FNV-1a-derived sub-seeds ([`seed`]), so identical manifests
//! reproduce identical artifacts byte for byte.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod optimizer;
pub mod preference;
pub mod quad;
pub mod reward;
pub mod seed;
pub mod system;
pub mod value;

pub use config::{Candidate, ConfigSpace, ConfigValue, JointConfig};
pub use error::{Error, Result};
pub use system::{
    forward_execute, partial_execute, resume_from, Component, PartialTrajectory, SystemGraph,
    Trajectory, TrajectoryRecord,
};
pub use value::ValueVec;
