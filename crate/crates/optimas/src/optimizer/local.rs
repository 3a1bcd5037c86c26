//! Type-matched local optimizers inside a trust region.
//!
//! All three optimizers evaluate candidate configuration values by rerunning
//! the target component's transfer on a fixed set of evaluation contexts and
//! averaging the scorer over the resulting outputs. Contexts carry common
//! random numbers (or a quadrature rule, in exact mode) so value comparisons
//! are deterministic.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigSpace, ConfigValue, JointConfig};
use crate::error::{Error, Result};
use crate::quad::GaussHermite;
use crate::seed::{indexed_seed, rng_for};
use crate::system::exec::{partial_execute, partial_with_noise, NoiseSource, PartialTrajectory};
use crate::system::SystemGraph;
use crate::value::ValueVec;

use super::scorer::LocalScorer;
use super::select::softmax_sample;

/// Per-iteration update caps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustRegion {
    /// Gradient-ascent steps per continuous update.
    pub max_local_steps: usize,
    /// Per-step L-infinity cap on continuous moves.
    pub continuous_step_cap: f64,
    /// Maximum discrete/pool choice changes per iteration.
    pub discrete_changes_cap: usize,
}

impl Default for TrustRegion {
    fn default() -> Self {
        TrustRegion {
            max_local_steps: 3,
            continuous_step_cap: 0.1,
            discrete_changes_cap: 1,
        }
    }
}

/// How component-noise enters candidate evaluation.
#[derive(Debug, Clone)]
pub enum OwnNoise {
    /// One fixed standard-normal draw per context (common random numbers).
    Fixed(Vec<f64>),
    /// Integrate the component's own noise on a quadrature rule.
    Quadrature(usize),
}

/// One evaluation context: a realized prefix plus its weight.
#[derive(Debug, Clone)]
pub struct EvalContext {
    pub partial: PartialTrajectory,
    pub weight: f64,
    pub own_noise: OwnNoise,
}

/// Sampled contexts for one component: seeded partial executions over the
/// given inputs, one fixed noise draw each. Inputs where the component is
/// inactive are skipped.
pub fn build_contexts_sampled(
    graph: &SystemGraph,
    config: &JointConfig,
    inputs: &[ValueVec],
    component: usize,
    seed: u64,
) -> Result<Vec<EvalContext>> {
    let out_dim = graph.component(component).out_dim;
    let mut contexts = Vec::new();
    for (i, input) in inputs.iter().enumerate() {
        let s = indexed_seed(seed, i as u64);
        match partial_execute(graph, config, input, s, component) {
            Ok(partial) => {
                let mut rng = rng_for(indexed_seed(s, u64::MAX));
                let z: Vec<f64> = (0..out_dim).map(|_| rng.sample(StandardNormal)).collect();
                contexts.push(EvalContext {
                    partial,
                    weight: 1.0,
                    own_noise: OwnNoise::Fixed(z),
                });
            }
            Err(Error::ComponentInactive { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    if contexts.is_empty() {
        return Err(Error::validation(format!(
            "component {component} inactive for every evaluation input"
        )));
    }
    normalize_weights(&mut contexts);
    Ok(contexts)
}

/// Exact contexts: upstream noise enumerated on the quadrature grid, own
/// noise integrated by quadrature. With an exact scorer, candidate values are
/// then compared under the true coordinate objective restricted to `inputs`.
pub fn build_contexts_exact(
    graph: &SystemGraph,
    config: &JointConfig,
    inputs: &[ValueVec],
    component: usize,
    quad_points: usize,
) -> Result<Vec<EvalContext>> {
    let upstream: Vec<usize> = (1..component).collect();
    let grid = crate::quad::noise_grid(graph, &upstream, quad_points);
    let mut contexts = Vec::new();
    for input in inputs {
        for point in &grid {
            match partial_with_noise(graph, config, input, &NoiseSource::Fixed(&point.z), component)
            {
                Ok(partial) => contexts.push(EvalContext {
                    partial,
                    weight: point.weight,
                    own_noise: OwnNoise::Quadrature(quad_points),
                }),
                Err(Error::ComponentInactive { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
    }
    if contexts.is_empty() {
        return Err(Error::validation(format!(
            "component {component} inactive for every evaluation input"
        )));
    }
    normalize_weights(&mut contexts);
    Ok(contexts)
}

fn normalize_weights(contexts: &mut [EvalContext]) {
    let total: f64 = contexts.iter().map(|c| c.weight).sum();
    for c in contexts.iter_mut() {
        c.weight /= total;
    }
}

/// Weighted mean scorer value of the component's output under `value` across
/// the contexts.
pub fn mean_score_for_value(
    graph: &SystemGraph,
    config: &JointConfig,
    scorer: &dyn LocalScorer,
    contexts: &[EvalContext],
    value: &ConfigValue,
) -> Result<f64> {
    let mut total = 0.0;
    for ctx in contexts {
        total += ctx.weight * context_score(graph, config, scorer, ctx, value)?;
    }
    Ok(total)
}

fn context_score(
    graph: &SystemGraph,
    config: &JointConfig,
    scorer: &dyn LocalScorer,
    ctx: &EvalContext,
    value: &ConfigValue,
) -> Result<f64> {
    let k = ctx.partial.target;
    let comp = graph.component(k);
    let base = comp.transfer.apply(
        ctx.partial.target_input.as_slice(),
        value,
        &comp.config_space,
        comp.out_dim,
    )?;
    if comp.noise_scale == 0.0 {
        return scorer.score_output(graph, config, &ctx.partial, &base);
    }
    match &ctx.own_noise {
        OwnNoise::Fixed(z) => {
            let y: Vec<f64> = base
                .as_slice()
                .iter()
                .zip(z)
                .map(|(b, n)| b + comp.noise_scale * n)
                .collect();
            scorer.score_output(graph, config, &ctx.partial, &ValueVec::from(y))
        }
        OwnNoise::Quadrature(points) => {
            let rule = GaussHermite::new(*points);
            // Tensor rule over the component's own output dims.
            let dims = comp.out_dim;
            let mut counter = vec![0usize; dims];
            let mut total = 0.0;
            loop {
                let mut weight = 1.0;
                let y: Vec<f64> = base
                    .as_slice()
                    .iter()
                    .enumerate()
                    .map(|(d, b)| {
                        weight *= rule.weights[counter[d]];
                        b + comp.noise_scale * rule.nodes[counter[d]]
                    })
                    .collect();
                total +=
                    weight * scorer.score_output(graph, config, &ctx.partial, &ValueVec::from(y))?;
                let mut d = 0;
                loop {
                    if d == dims {
                        return Ok(total);
                    }
                    counter[d] += 1;
                    if counter[d] < rule.len() {
                        break;
                    }
                    counter[d] = 0;
                    d += 1;
                }
            }
        }
    }
}

/// Discrete update: mean score per option, then a softmax draw over the
/// option scores. A draw that would change more choices than the trust
/// region allows keeps the current value.
pub fn optimize_discrete(
    graph: &SystemGraph,
    config: &JointConfig,
    scorer: &dyn LocalScorer,
    component: usize,
    contexts: &[EvalContext],
    trust: &TrustRegion,
    softmax_temperature: f64,
    seed: u64,
) -> Result<ConfigValue> {
    let options = match &graph.component(component).config_space {
        ConfigSpace::Discrete { options } => options.len(),
        ConfigSpace::CandidatePool { candidates } => candidates.len(),
        _ => {
            return Err(Error::validation(format!(
                "component {component} is not discrete"
            )))
        }
    };
    let values: Vec<ConfigValue> = match &graph.component(component).config_space {
        ConfigSpace::Discrete { .. } => (0..options).map(ConfigValue::DiscreteIndex).collect(),
        ConfigSpace::CandidatePool { candidates } => candidates
            .iter()
            .map(|c| ConfigValue::CandidateId(c.id))
            .collect(),
        _ => unreachable!(),
    };
    let scores: Vec<f64> = values
        .iter()
        .map(|v| mean_score_for_value(graph, config, scorer, contexts, v))
        .collect::<Result<Vec<f64>>>()?;
    let pick = softmax_sample(&scores, softmax_temperature, seed);
    let current = config.value_for(component);
    if &values[pick] != current && trust.discrete_changes_cap < 1 {
        return Ok(current.clone());
    }
    Ok(values[pick].clone())
}

/// Candidate-pool update: evaluates the incumbent plus up to
/// `candidate_count - 1` members not yet tried this run (refilling from the
/// whole pool once everything has been seen) and returns the best by mean
/// score, ties broken by lowest candidate id.
#[allow(clippy::too_many_arguments)]
pub fn optimize_candidate_pool(
    graph: &SystemGraph,
    config: &JointConfig,
    scorer: &dyn LocalScorer,
    component: usize,
    contexts: &[EvalContext],
    trust: &TrustRegion,
    candidate_count: usize,
    tried: &mut BTreeSet<u32>,
    seed: u64,
) -> Result<ConfigValue> {
    let pool: Vec<u32> = match &graph.component(component).config_space {
        ConfigSpace::CandidatePool { candidates } => candidates.iter().map(|c| c.id).collect(),
        _ => {
            return Err(Error::validation(format!(
                "component {component} has no candidate pool"
            )))
        }
    };
    let incumbent = match config.value_for(component) {
        ConfigValue::CandidateId(id) => *id,
        other => {
            return Err(Error::validation(format!(
                "component {component} config {other:?} is not a candidate id"
            )))
        }
    };
    let mut rng = rng_for(seed);
    let mut untried: Vec<u32> = pool
        .iter()
        .copied()
        .filter(|id| *id != incumbent && !tried.contains(id))
        .collect();
    untried.shuffle(&mut rng);
    let extra = candidate_count.saturating_sub(1);
    let mut shortlist: Vec<u32> = vec![incumbent];
    shortlist.extend(untried.iter().take(extra));
    if shortlist.len() < candidate_count.min(pool.len()) {
        // Everything has been tried; refill from the rest of the pool.
        let mut rest: Vec<u32> = pool
            .iter()
            .copied()
            .filter(|id| !shortlist.contains(id))
            .collect();
        rest.shuffle(&mut rng);
        shortlist.extend(
            rest.iter()
                .take(candidate_count.min(pool.len()) - shortlist.len()),
        );
    }
    let mut best = incumbent;
    let mut best_score = f64::NEG_INFINITY;
    for id in &shortlist {
        let score = mean_score_for_value(
            graph,
            config,
            scorer,
            contexts,
            &ConfigValue::CandidateId(*id),
        )?;
        tried.insert(*id);
        if score > best_score || (score == best_score && *id < best) {
            best = *id;
            best_score = score;
        }
    }
    if best != incumbent && trust.discrete_changes_cap < 1 {
        return Ok(ConfigValue::CandidateId(incumbent));
    }
    Ok(ConfigValue::CandidateId(best))
}

/// Continuous update: central-difference gradient ascent on the mean score,
/// each step capped in L-infinity norm, backtracked until it improves, and
/// projected into the bounds.
pub fn optimize_continuous(
    graph: &SystemGraph,
    config: &JointConfig,
    scorer: &dyn LocalScorer,
    component: usize,
    contexts: &[EvalContext],
    trust: &TrustRegion,
) -> Result<ConfigValue> {
    let (lower, upper) = match &graph.component(component).config_space {
        ConfigSpace::Continuous { lower, upper } => (lower.clone(), upper.clone()),
        _ => {
            return Err(Error::validation(format!(
                "component {component} is not continuous"
            )))
        }
    };
    let dims = lower.dim();
    let mut v: Vec<f64> = match config.value_for(component) {
        ConfigValue::ContinuousVec(x) => x.as_slice().to_vec(),
        other => {
            return Err(Error::validation(format!(
                "component {component} config {other:?} is not continuous"
            )))
        }
    };
    let objective = |point: &[f64]| -> Result<f64> {
        mean_score_for_value(
            graph,
            config,
            scorer,
            contexts,
            &ConfigValue::ContinuousVec(ValueVec::from(point.to_vec())),
        )
    };
    let project = |point: &mut [f64]| {
        for d in 0..dims {
            point[d] = point[d].clamp(lower[d], upper[d]);
        }
    };
    if trust.continuous_step_cap <= 0.0 {
        return Ok(ConfigValue::ContinuousVec(ValueVec::from(v)));
    }
    for _ in 0..trust.max_local_steps {
        let mut grad = vec![0.0; dims];
        for d in 0..dims {
            let h = 1e-3 * (upper[d] - lower[d]).max(1e-9);
            let mut hi = v.clone();
            hi[d] += h;
            let mut lo = v.clone();
            lo[d] -= h;
            grad[d] = (objective(&hi)? - objective(&lo)?) / (2.0 * h);
        }
        let g_inf = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if g_inf <= 1e-12 {
            break;
        }
        let mut step: Vec<f64> = grad
            .iter()
            .map(|g| trust.continuous_step_cap * g / g_inf)
            .collect();
        let f0 = objective(&v)?;
        let mut moved = false;
        for _ in 0..20 {
            let mut cand: Vec<f64> = v.iter().zip(&step).map(|(x, s)| x + s).collect();
            project(&mut cand);
            if objective(&cand)? > f0 {
                v = cand;
                moved = true;
                break;
            }
            for s in step.iter_mut() {
                *s *= 0.5;
            }
        }
        if !moved {
            break;
        }
    }
    Ok(ConfigValue::ContinuousVec(ValueVec::from(v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{grid_inputs, make_system, SyntheticSystemId};
    use crate::optimizer::scorer::OracleScorer;
    use crate::system::testkit::vv;

    /// Scorer with a closed-form concave quadratic in the output.
    struct QuadraticScorer {
        peak: f64,
    }

    impl LocalScorer for QuadraticScorer {
        fn score_output(
            &self,
            _graph: &SystemGraph,
            _config: &JointConfig,
            _partial: &PartialTrajectory,
            output: &ValueVec,
        ) -> Result<f64> {
            Ok(-(output[0] - self.peak) * (output[0] - self.peak))
        }
    }

    fn s1_setup() -> (crate::bench::SyntheticSystem, JointConfig, Vec<ValueVec>) {
        let sys = make_system(SyntheticSystemId::S1, false);
        let cfg = sys.graph.default_config();
        let inputs = grid_inputs(&sys.doc, 8);
        (sys, cfg, inputs)
    }

    #[test]
    fn zero_step_cap_keeps_continuous_config_unchanged() {
        let (sys, cfg, inputs) = s1_setup();
        let contexts = build_contexts_sampled(&sys.graph, &cfg, &inputs, 1, 3).unwrap();
        let trust = TrustRegion {
            continuous_step_cap: 0.0,
            ..TrustRegion::default()
        };
        let scorer = QuadraticScorer { peak: 0.4 };
        let out =
            optimize_continuous(&sys.graph, &cfg, &scorer, 1, &contexts, &trust).unwrap();
        assert_eq!(&out, cfg.value_for(1));
    }

    #[test]
    fn concave_quadratic_objective_increases_monotonically_to_the_peak() {
        // Component 1 output is x + v1 (+ fixed noise); the scorer peaks when
        // the mean output hits `peak`, so the objective is a concave
        // quadratic in v1 with a closed-form maximizer inside the bounds.
        let (sys, mut cfg, inputs) = s1_setup();
        cfg.0[0] = ConfigValue::ContinuousVec(vv(&[-0.06]));
        let contexts = build_contexts_exact(&sys.graph, &cfg, &inputs, 1, 5).unwrap();
        let scorer = QuadraticScorer { peak: 0.1 };
        let trust = TrustRegion {
            max_local_steps: 12,
            continuous_step_cap: 0.02,
            discrete_changes_cap: 1,
        };
        let objective = |value: &ConfigValue| {
            mean_score_for_value(&sys.graph, &cfg, &scorer, &contexts, value).unwrap()
        };
        // The maximizer of E[-(x + v - 0.1)^2] over the input grid is
        // v* = 0.1 - mean(x) = 0.1 (grid is symmetric).
        let before = objective(cfg.value_for(1));
        let out = optimize_continuous(&sys.graph, &cfg, &scorer, 1, &contexts, &trust).unwrap();
        let after = objective(&out);
        assert!(after > before);
        if let ConfigValue::ContinuousVec(v) = &out {
            assert!(
                (v[0] - 0.1).abs() <= trust.continuous_step_cap,
                "ended at {}",
                v[0]
            );
        } else {
            panic!("expected continuous value");
        }
    }

    #[test]
    fn ascent_from_the_boundary_stays_inside_bounds() {
        let (sys, mut cfg, inputs) = s1_setup();
        cfg.0[0] = ConfigValue::ContinuousVec(vv(&[0.18]));
        let contexts = build_contexts_sampled(&sys.graph, &cfg, &inputs, 1, 3).unwrap();
        // Peak far beyond the upper bound: ascent pushes outward.
        let scorer = QuadraticScorer { peak: 5.0 };
        let out = optimize_continuous(
            &sys.graph,
            &cfg,
            &scorer,
            1,
            &contexts,
            &TrustRegion::default(),
        )
        .unwrap();
        if let ConfigValue::ContinuousVec(v) = out {
            assert!(v[0] <= 0.18 + 1e-12);
        } else {
            panic!("expected continuous value");
        }
    }

    #[test]
    fn trust_region_bounds_total_continuous_movement() {
        let (sys, mut cfg, inputs) = s1_setup();
        cfg.0[0] = ConfigValue::ContinuousVec(vv(&[-0.06]));
        let contexts = build_contexts_sampled(&sys.graph, &cfg, &inputs, 1, 3).unwrap();
        let scorer = QuadraticScorer { peak: 5.0 };
        let trust = TrustRegion {
            max_local_steps: 3,
            continuous_step_cap: 0.01,
            discrete_changes_cap: 1,
        };
        let out =
            optimize_continuous(&sys.graph, &cfg, &scorer, 1, &contexts, &trust).unwrap();
        if let ConfigValue::ContinuousVec(v) = out {
            assert!(v[0] + 0.06 <= 3.0 * 0.01 + 1e-12);
        } else {
            panic!("expected continuous value");
        }
    }

    #[test]
    fn dominant_option_is_selected_almost_surely() {
        let (sys, cfg, inputs) = s1_setup();
        let contexts = build_contexts_sampled(&sys.graph, &cfg, &inputs, 2, 3).unwrap();
        // Scorer whose mean separates the top gain from the runner-up by
        // well over ten score units, saturating the softmax.
        struct GainLover;
        impl LocalScorer for GainLover {
            fn score_output(
                &self,
                _g: &SystemGraph,
                _c: &JointConfig,
                _p: &PartialTrajectory,
                y: &ValueVec,
            ) -> Result<f64> {
                Ok(400.0 * y[0].abs())
            }
        }
        let mut picks = BTreeSet::new();
        for seed in 0..200 {
            let v = optimize_discrete(
                &sys.graph,
                &cfg,
                &GainLover,
                2,
                &contexts,
                &TrustRegion::default(),
                1.0,
                seed,
            )
            .unwrap();
            picks.insert(match v {
                ConfigValue::DiscreteIndex(i) => i,
                _ => unreachable!(),
            });
        }
        assert_eq!(picks.into_iter().collect::<Vec<_>>(), vec![4]);
    }

    #[test]
    fn zero_changes_cap_keeps_the_current_discrete_choice() {
        let (sys, cfg, inputs) = s1_setup();
        let contexts = build_contexts_sampled(&sys.graph, &cfg, &inputs, 2, 3).unwrap();
        let scorer = OracleScorer { quad_points: 5 };
        let trust = TrustRegion {
            discrete_changes_cap: 0,
            ..TrustRegion::default()
        };
        for seed in 0..20 {
            let v = optimize_discrete(
                &sys.graph,
                &cfg,
                &scorer,
                2,
                &contexts,
                &trust,
                1.0,
                seed,
            )
            .unwrap();
            assert_eq!(&v, cfg.value_for(2));
        }
    }

    #[test]
    fn pool_shortlist_always_contains_the_incumbent_and_returns_no_worse() {
        let (sys, cfg, inputs) = s1_setup();
        let contexts = build_contexts_sampled(&sys.graph, &cfg, &inputs, 3, 3).unwrap();
        let scorer = OracleScorer { quad_points: 5 };
        let incumbent_score = mean_score_for_value(
            &sys.graph,
            &cfg,
            &scorer,
            &contexts,
            cfg.value_for(3),
        )
        .unwrap();
        let mut tried = BTreeSet::new();
        let v = optimize_candidate_pool(
            &sys.graph,
            &cfg,
            &scorer,
            3,
            &contexts,
            &TrustRegion::default(),
            3,
            &mut tried,
            11,
        )
        .unwrap();
        let picked_score =
            mean_score_for_value(&sys.graph, &cfg, &scorer, &contexts, &v).unwrap();
        assert!(picked_score >= incumbent_score);
        // The incumbent id 0 was evaluated.
        assert!(tried.contains(&0));
    }

    #[test]
    fn pool_sweeps_every_member_within_two_calls() {
        let (sys, cfg, inputs) = s1_setup();
        let contexts = build_contexts_sampled(&sys.graph, &cfg, &inputs, 3, 3).unwrap();
        let scorer = OracleScorer { quad_points: 5 };
        let mut tried = BTreeSet::new();
        for call in 0..2 {
            optimize_candidate_pool(
                &sys.graph,
                &cfg,
                &scorer,
                3,
                &contexts,
                &TrustRegion::default(),
                3,
                &mut tried,
                call,
            )
            .unwrap();
        }
        assert_eq!(tried.len(), 5);
    }
}
