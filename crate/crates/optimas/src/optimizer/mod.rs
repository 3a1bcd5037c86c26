//! The block-coordinate optimization loop.
//!
//! Each iteration: pick a component (uniformly or by preference-gap weight),
//! build a fresh preference mini-batch for it, adapt its reward head online,
//! locally optimize its configuration inside the trust region with the
//! type-matched optimizer, then accept or revert by held-out validation
//! reward. Accepted validation values never decrease.

pub mod local;
pub mod run;
pub mod scorer;
pub mod select;

pub use local::{
    build_contexts_exact, build_contexts_sampled, mean_score_for_value, optimize_candidate_pool,
    optimize_continuous, optimize_discrete, EvalContext, OwnNoise, TrustRegion,
};
pub use run::{
    evaluate_config, run_iteration, run_optimization, IterationRecord, LoopOptions,
    OptimizationState, RunOutcome, ScorerMode,
};
pub use scorer::{LocalScorer, NegatedScorer, NetScorer, OracleScorer};
pub use select::{select_component, softmax_sample, SchedulerPolicy};
