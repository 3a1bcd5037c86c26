//! Scorers used by the local optimizers.
//!
//! The loop maximizes a local score of candidate component outputs. In normal
//! operation that score comes from the learned reward net; the verification
//! harness swaps in an oracle that computes the exact conditional expected
//! global reward by quadrature, which turns every local update into exact
//! coordinate maximization.

use crate::bench::oracle::exact_conditional_reward;
use crate::config::JointConfig;
use crate::error::Result;
use crate::reward::net::RewardNet;
use crate::system::exec::PartialTrajectory;
use crate::system::SystemGraph;
use crate::value::ValueVec;

/// Scores one candidate output of the component a partial trajectory stops
/// before.
pub trait LocalScorer: Sync {
    fn score_output(
        &self,
        graph: &SystemGraph,
        config: &JointConfig,
        partial: &PartialTrajectory,
        output: &ValueVec,
    ) -> Result<f64>;
}

/// The learned reward net: scores (context, output) through the component's
/// head.
pub struct NetScorer<'a> {
    pub net: &'a RewardNet,
}

impl LocalScorer for NetScorer<'_> {
    fn score_output(
        &self,
        _graph: &SystemGraph,
        _config: &JointConfig,
        partial: &PartialTrajectory,
        output: &ValueVec,
    ) -> Result<f64> {
        self.net.score(partial.target, &partial.target_input, output)
    }
}

/// Exact conditional expected global reward, integrated over downstream noise
/// on a quadrature grid.
pub struct OracleScorer {
    pub quad_points: usize,
}

impl LocalScorer for OracleScorer {
    fn score_output(
        &self,
        graph: &SystemGraph,
        config: &JointConfig,
        partial: &PartialTrajectory,
        output: &ValueVec,
    ) -> Result<f64> {
        exact_conditional_reward(graph, config, partial, output, self.quad_points)
    }
}

/// Sign-flipped wrapper, used to verify that the alignment metrics detect
/// reversed scorers.
pub struct NegatedScorer<S: LocalScorer>(pub S);

impl<S: LocalScorer> LocalScorer for NegatedScorer<S> {
    fn score_output(
        &self,
        graph: &SystemGraph,
        config: &JointConfig,
        partial: &PartialTrajectory,
        output: &ValueVec,
    ) -> Result<f64> {
        Ok(-self.0.score_output(graph, config, partial, output)?)
    }
}
