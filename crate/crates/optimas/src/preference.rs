//! Preference-pair generation.
//!
//! For one component: execute the system up to it, sample candidate outputs
//! (scaled-up noise, or alternate configuration values when the component is
//! deterministic), estimate each candidate's expected downstream global
//! reward by Monte-Carlo resumes, and label the extreme pair — the higher
//! estimate wins outright under deterministic labeling, or with probability
//! sigmoid(alpha * estimate gap) under stochastic labeling.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ConfigSpace, ConfigValue, JointConfig};
use crate::error::{Error, Result};
use crate::reward::data::{PreferenceDataset, PreferenceRecord};
use crate::reward::loss::sigmoid;
use crate::seed::{indexed_seed, named_seed, rng_for};
use crate::system::exec::{partial_execute, resume_from, PartialTrajectory};
use crate::system::SystemGraph;
use crate::value::ValueVec;

/// Monte-Carlo estimate of an expected downstream global reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub n_samples: usize,
    /// Sample standard deviation over sqrt(n); zero for a single sample.
    pub std_err: f64,
}

/// Preference labeling model. `alpha = +inf` labels deterministically by the
/// larger estimate; finite alpha draws the winner with probability
/// sigmoid(alpha * gap).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelingPolicy {
    pub alpha: f64,
}

impl LabelingPolicy {
    pub fn deterministic() -> Self {
        LabelingPolicy {
            alpha: f64::INFINITY,
        }
    }

    pub fn stochastic(alpha: f64) -> Result<Self> {
        if alpha > 0.0 {
            Ok(LabelingPolicy { alpha })
        } else {
            Err(Error::validation("labeling alpha must be positive"))
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.alpha.is_infinite()
    }
}

impl Default for LabelingPolicy {
    fn default() -> Self {
        LabelingPolicy::deterministic()
    }
}

/// Candidate outputs for one component, in sampling order.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub outputs: Vec<ValueVec>,
    /// Set when duplicate rejection gave up and duplicates were kept.
    pub duplicates_allowed: bool,
}

const DUPLICATE_RETRIES: usize = 10;

/// Samples `n` candidate outputs of the target component by re-running its
/// transfer with noise scaled by `temperature`. Deterministic components fall
/// back to drawing alternate configuration values from their own space.
/// Duplicates are rejected and resampled up to ten times, then kept with the
/// `duplicates_allowed` flag raised.
pub fn sample_candidates(
    graph: &SystemGraph,
    config: &JointConfig,
    partial: &PartialTrajectory,
    n: usize,
    temperature: f64,
    seed: u64,
) -> Result<CandidateSet> {
    if n < 2 {
        return Err(Error::validation("need at least two candidates"));
    }
    if temperature < 1.0 {
        return Err(Error::validation("temperature multiplier must be >= 1"));
    }
    let k = partial.target;
    let comp = graph.component(k);
    let x_k = &partial.target_input;
    let use_noise = comp.noise_scale > 0.0;
    if !use_noise && !has_config_diversity(&comp.config_space) {
        return Err(Error::NoCandidateDiversity { component: k });
    }

    let mut outputs: Vec<ValueVec> = Vec::with_capacity(n);
    let mut duplicates_allowed = false;
    let mut draw = 0u64;
    while outputs.len() < n {
        let mut accepted = None;
        let mut last = None;
        for _ in 0..=DUPLICATE_RETRIES {
            let candidate = if use_noise {
                let mut rng = rng_for(indexed_seed(seed, draw));
                let base = comp.transfer.apply(
                    x_k.as_slice(),
                    config.value_for(k),
                    &comp.config_space,
                    comp.out_dim,
                )?;
                let data: Vec<f64> = base
                    .as_slice()
                    .iter()
                    .map(|y| y + comp.noise_scale * temperature * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                ValueVec::from(data)
            } else {
                let alt = draw_config(&comp.config_space, indexed_seed(seed, draw));
                comp.transfer
                    .apply(x_k.as_slice(), &alt, &comp.config_space, comp.out_dim)?
            };
            candidate.check_finite("candidate output")?;
            draw += 1;
            if outputs.iter().all(|o| o != &candidate) {
                accepted = Some(candidate);
                break;
            }
            last = Some(candidate);
        }
        match accepted {
            Some(c) => outputs.push(c),
            None => {
                duplicates_allowed = true;
                outputs.push(last.expect("at least one attempt"));
            }
        }
    }
    Ok(CandidateSet {
        outputs,
        duplicates_allowed,
    })
}

fn has_config_diversity(space: &ConfigSpace) -> bool {
    match space {
        ConfigSpace::Empty => false,
        ConfigSpace::Discrete { options } => options.len() >= 2,
        ConfigSpace::Continuous { lower, upper } => {
            lower.iter().zip(upper.iter()).any(|(l, u)| u > l)
        }
        ConfigSpace::CandidatePool { candidates } => candidates.len() >= 2,
    }
}

/// Uniform draw from a configuration space.
fn draw_config(space: &ConfigSpace, seed: u64) -> ConfigValue {
    let mut rng = rng_for(seed);
    match space {
        ConfigSpace::Empty => ConfigValue::Empty,
        ConfigSpace::Discrete { options } => {
            ConfigValue::DiscreteIndex(rng.gen_range(0..options.len()))
        }
        ConfigSpace::Continuous { lower, upper } => {
            let v: Vec<f64> = lower
                .iter()
                .zip(upper.iter())
                .map(|(l, u)| if u > l { rng.gen_range(*l..*u) } else { *l })
                .collect();
            ConfigValue::ContinuousVec(ValueVec::from(v))
        }
        ConfigSpace::CandidatePool { candidates } => {
            ConfigValue::CandidateId(candidates[rng.gen_range(0..candidates.len())].id)
        }
    }
}

/// Mean global reward over `m` completions of the partial trajectory with the
/// target output pinned to `forced`, each with fresh downstream seeds.
pub fn mc_downstream_reward(
    graph: &SystemGraph,
    config: &JointConfig,
    partial: &PartialTrajectory,
    forced: &ValueVec,
    m: usize,
    seed: u64,
) -> Result<McEstimate> {
    if m < 1 {
        return Err(Error::validation("need at least one rollout"));
    }
    let rewards: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|j| {
            resume_from(graph, config, partial, forced, indexed_seed(seed, j as u64))
                .map(|t| t.global_reward)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = rewards.iter().sum::<f64>() / m as f64;
    // Identical samples have exactly zero spread; computing the variance
    // against the divided mean would leave rounding residue.
    let all_equal = rewards.iter().all(|r| *r == rewards[0]);
    let std_err = if m >= 2 && !all_equal {
        let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (m - 1) as f64;
        (var / m as f64).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        n_samples: m,
        std_err,
    })
}

/// Picks the preferred side of a candidate pair. Returns the winner index
/// (0 for the first estimate) and the signed gap `winner mean - loser mean`.
/// Deterministic labeling breaks exact ties with a seeded coin flip.
pub fn label_pair(
    e_first: &McEstimate,
    e_second: &McEstimate,
    policy: &LabelingPolicy,
    seed: u64,
) -> (usize, f64) {
    let d = e_first.mean - e_second.mean;
    let winner = if policy.is_deterministic() {
        if d > 0.0 {
            0
        } else if d < 0.0 {
            1
        } else if rng_for(seed).gen_bool(0.5) {
            0
        } else {
            1
        }
    } else {
        let p_first = sigmoid(policy.alpha * d);
        if rng_for(seed).gen::<f64>() < p_first {
            0
        } else {
            1
        }
    };
    let gap = if winner == 0 { d } else { -d };
    (winner, gap)
}

/// Options for one preference-generation pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreferenceOptions {
    /// Candidates sampled per input; the extreme pair by estimated mean is
    /// kept, so 2 keeps both.
    pub n_candidates: usize,
    /// Monte-Carlo rollouts per candidate.
    pub mc_rollouts: usize,
    pub policy: LabelingPolicy,
    /// Noise multiplier for candidate sampling.
    pub temperature: f64,
    pub seed: u64,
    /// Iteration tag stored on each record (0 for the offline phase).
    pub iteration: usize,
}

impl Default for PreferenceOptions {
    fn default() -> Self {
        PreferenceOptions {
            n_candidates: 2,
            mc_rollouts: 5,
            policy: LabelingPolicy::deterministic(),
            temperature: 2.0,
            seed: 0,
            iteration: 0,
        }
    }
}

/// Builds a labeled preference dataset for one component over a batch of
/// system inputs. Inputs where the component is inactive are skipped; it is
/// an error for every input to be inactive. Per-input work runs in parallel
/// and results merge in input order.
pub fn build_preferences(
    graph: &SystemGraph,
    config: &JointConfig,
    inputs: &[ValueVec],
    component: usize,
    opts: &PreferenceOptions,
) -> Result<PreferenceDataset> {
    if inputs.is_empty() {
        return Err(Error::validation("no inputs for preference generation"));
    }
    let snapshot_id = config.snapshot_id();
    let per_input: Vec<Option<PreferenceRecord>> = inputs
        .par_iter()
        .enumerate()
        .map(|(i, input)| {
            build_one(graph, config, input, component, opts, snapshot_id, i as u64)
        })
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<PreferenceRecord> = per_input.into_iter().flatten().collect();
    if records.is_empty() {
        return Err(Error::validation(format!(
            "component {component} produced no preference pairs (inactive for all inputs \
             or all candidates tied)"
        )));
    }
    Ok(PreferenceDataset::new(records, snapshot_id))
}

fn build_one(
    graph: &SystemGraph,
    config: &JointConfig,
    input: &ValueVec,
    component: usize,
    opts: &PreferenceOptions,
    snapshot_id: u64,
    index: u64,
) -> Result<Option<PreferenceRecord>> {
    let input_seed = indexed_seed(named_seed(opts.seed, "pref_input"), index);
    let partial = match partial_execute(
        graph,
        config,
        input,
        named_seed(input_seed, "partial"),
        component,
    ) {
        Ok(p) => p,
        Err(Error::ComponentInactive { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    let candidates = sample_candidates(
        graph,
        config,
        &partial,
        opts.n_candidates,
        opts.temperature,
        named_seed(input_seed, "candidates"),
    )?;
    let estimates: Vec<McEstimate> = candidates
        .outputs
        .iter()
        .enumerate()
        .map(|(j, y)| {
            mc_downstream_reward(
                graph,
                config,
                &partial,
                y,
                opts.mc_rollouts,
                indexed_seed(named_seed(input_seed, "mc"), j as u64),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    // Extreme pair by estimated mean; first occurrence wins ties for
    // determinism.
    let mut best = 0;
    let mut worst = 0;
    for (j, e) in estimates.iter().enumerate() {
        if e.mean > estimates[best].mean {
            best = j;
        }
        if e.mean < estimates[worst].mean {
            worst = j;
        }
    }
    if best == worst {
        // All estimates tied; keep the first two candidates as the pair.
        best = 0;
        worst = 1;
    }
    if candidates.outputs[best] == candidates.outputs[worst] {
        return Ok(None);
    }
    let (winner, gap) = label_pair(
        &estimates[best],
        &estimates[worst],
        &opts.policy,
        named_seed(input_seed, "label"),
    );
    let (y_plus, y_minus) = if winner == 0 {
        (candidates.outputs[best].clone(), candidates.outputs[worst].clone())
    } else {
        (candidates.outputs[worst].clone(), candidates.outputs[best].clone())
    };
    Ok(Some(PreferenceRecord {
        component,
        context: partial.target_input,
        y_plus,
        y_minus,
        gap,
        snapshot_id,
        iteration: opts.iteration,
    }))
}
