//! Alignment verification and the distribution-shift experiment.

use serde::{Deserialize, Serialize};

use crate::config::{ConfigValue, JointConfig};
use crate::error::{Error, Result};
use crate::optimizer::scorer::LocalScorer;
use crate::preference::{build_preferences, LabelingPolicy, PreferenceOptions};
use crate::reward::{adapt_online, pairwise_accuracy, AdaptOptions, ReplayBuffer, RewardNet};
use crate::seed::{indexed_seed, named_seed};
use crate::system::exec::partial_execute;
use crate::system::SystemGraph;
use crate::value::ValueVec;

use super::oracle::exact_conditional_reward;

/// Average ranks with ties sharing their mean rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite values"));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let mean_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = mean_rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation with average-rank tie handling.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    assert!(a.len() >= 2, "need at least two observations");
    let ra = ranks(a);
    let rb = ranks(b);
    let ma = ra.iter().sum::<f64>() / ra.len() as f64;
    let mb = rb.iter().sum::<f64>() / rb.len() as f64;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct AlignmentComponentReport {
    pub component: usize,
    pub n_pairs: usize,
    pub spearman: f64,
    pub sign_agreement: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AlignmentReport {
    pub per_component: Vec<AlignmentComponentReport>,
    pub pooled_spearman: f64,
    pub pooled_sign_agreement: f64,
    pub n_pairs: usize,
}

#[derive(Debug, Clone)]
pub struct AlignmentOptions {
    /// Grid points per dimension when enumerating candidate outputs of a
    /// continuous-config component.
    pub continuous_candidates: usize,
    /// Quadrature points for the exact conditional expectations.
    pub quad_points: usize,
    pub seed: u64,
}

impl Default for AlignmentOptions {
    fn default() -> Self {
        AlignmentOptions {
            continuous_candidates: 5,
            quad_points: 9,
            seed: 0,
        }
    }
}

/// Enumerable candidate outputs of one component given its assembled input:
/// the transfer output under every configuration option (finite spaces) or
/// under a uniform configuration grid (continuous spaces).
pub fn enumerate_candidate_outputs(
    graph: &SystemGraph,
    partial: &crate::system::exec::PartialTrajectory,
    continuous_candidates: usize,
) -> Result<Vec<ValueVec>> {
    let comp = graph.component(partial.target);
    let values = match &comp.config_space {
        crate::config::ConfigSpace::Empty => {
            return Err(Error::validation(format!(
                "component {} has no configuration options to enumerate",
                partial.target
            )))
        }
        _ => {
            let mut per_coord =
                crate::bench::oracle::coordinate_grid_for_space(&comp.config_space, continuous_candidates);
            per_coord.dedup();
            per_coord
        }
    };
    let mut outputs = Vec::with_capacity(values.len());
    for v in &values {
        outputs.push(comp.transfer.apply(
            partial.target_input.as_slice(),
            v,
            &comp.config_space,
            comp.out_dim,
        )?);
    }
    Ok(outputs)
}

/// Compares a scorer's candidate-pair orderings against the exact conditional
/// expected global reward, per configurable component and pooled. For every
/// evaluation input and component: execute up to the component, enumerate the
/// candidate outputs on the component's configuration grid, and collect
/// (score difference, exact gap) for all candidate pairs.
pub fn verify_alignment_scorer(
    graph: &SystemGraph,
    config: &JointConfig,
    scorer: &dyn LocalScorer,
    components: &[usize],
    inputs: &[ValueVec],
    opts: &AlignmentOptions,
) -> Result<AlignmentReport> {
    let mut per_component = Vec::new();
    let mut pooled_ds: Vec<f64> = Vec::new();
    let mut pooled_de: Vec<f64> = Vec::new();
    for &k in components {
        let mut ds: Vec<f64> = Vec::new();
        let mut de: Vec<f64> = Vec::new();
        for (i, input) in inputs.iter().enumerate() {
            let seed = indexed_seed(named_seed(opts.seed, "align"), (k * inputs.len() + i) as u64);
            let partial = match partial_execute(graph, config, input, seed, k) {
                Ok(p) => p,
                Err(Error::ComponentInactive { .. }) => continue,
                Err(e) => return Err(e),
            };
            let outputs = enumerate_candidate_outputs(graph, &partial, opts.continuous_candidates)?;
            let scores: Vec<f64> = outputs
                .iter()
                .map(|y| scorer.score_output(graph, config, &partial, y))
                .collect::<Result<Vec<f64>>>()?;
            let exacts: Vec<f64> = outputs
                .iter()
                .map(|y| exact_conditional_reward(graph, config, &partial, y, opts.quad_points))
                .collect::<Result<Vec<f64>>>()?;
            for a in 0..outputs.len() {
                for b in (a + 1)..outputs.len() {
                    if outputs[a] == outputs[b] {
                        continue;
                    }
                    ds.push(scores[a] - scores[b]);
                    de.push(exacts[a] - exacts[b]);
                }
            }
        }
        if ds.len() < 2 {
            return Err(Error::validation(format!(
                "component {k} yielded too few candidate pairs for alignment checking"
            )));
        }
        per_component.push(AlignmentComponentReport {
            component: k,
            n_pairs: ds.len(),
            spearman: spearman(&ds, &de),
            sign_agreement: sign_agreement(&ds, &de),
        });
        pooled_ds.extend(ds);
        pooled_de.extend(de);
    }
    Ok(AlignmentReport {
        pooled_spearman: spearman(&pooled_ds, &pooled_de),
        pooled_sign_agreement: sign_agreement(&pooled_ds, &pooled_de),
        n_pairs: pooled_ds.len(),
        per_component,
    })
}

/// Agreement between score-difference signs and exact-gap signs. Exact ties
/// in the reference gap are skipped; score ties count one half.
fn sign_agreement(ds: &[f64], de: &[f64]) -> f64 {
    let mut hits = 0.0;
    let mut total = 0usize;
    for (s, e) in ds.iter().zip(de) {
        if e.abs() < 1e-12 {
            continue;
        }
        total += 1;
        if *s == 0.0 {
            hits += 0.5;
        } else if s.signum() == e.signum() {
            hits += 1.0;
        }
    }
    if total == 0 {
        1.0
    } else {
        hits / total as f64
    }
}

/// Alignment of a trained net's heads against the exact conditional rewards.
pub fn verify_alignment_theorem(
    graph: &SystemGraph,
    config: &JointConfig,
    net: &RewardNet,
    inputs: &[ValueVec],
    opts: &AlignmentOptions,
) -> Result<AlignmentReport> {
    let scorer = crate::optimizer::scorer::NetScorer { net };
    let heads = net.arch.heads.clone();
    verify_alignment_scorer(graph, config, &scorer, &heads, inputs, opts)
}

/// One upstream configuration change to apply and measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShiftSpec {
    /// Component whose configuration flips.
    pub component: usize,
    pub new_value: ConfigValue,
    /// Downstream component whose reward head is measured.
    pub measured: usize,
}

#[derive(Debug, Clone)]
pub struct ShiftOptions {
    /// Inputs per held-out evaluation pair set.
    pub eval_inputs: usize,
    /// Rollouts per candidate when labeling evaluation pairs.
    pub eval_rollouts: usize,
    /// Fresh inputs per adaptation mini-batch.
    pub fresh_size: usize,
    pub max_calls: usize,
    pub adapt: AdaptOptions,
    pub candidate_temperature: f64,
    /// Run the adaptation arm; disabled gives the flat control curve.
    pub adaptation_enabled: bool,
    pub seed: u64,
}

impl Default for ShiftOptions {
    fn default() -> Self {
        ShiftOptions {
            eval_inputs: 200,
            eval_rollouts: 20,
            fresh_size: 20,
            max_calls: 10,
            adapt: AdaptOptions::default(),
            candidate_temperature: 2.0,
            adaptation_enabled: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ShiftReport {
    pub pre_accuracy: f64,
    pub post_accuracy: f64,
    /// Accuracy on the post-shift pair set after each adaptation call.
    pub recovery: Vec<f64>,
    /// First call whose accuracy is within five points of pre-shift
    /// (`max_calls` when never reached).
    pub calls_used: usize,
    pub adaptation_enabled: bool,
}

/// Measures a reward head's pairwise accuracy before an upstream
/// configuration shift, right after it, and along online adaptation on
/// fresh post-shift mini-batches. The net is adapted in place; the
/// configuration itself is not mutated.
pub fn shift_experiment(
    graph: &SystemGraph,
    net: &mut RewardNet,
    config: &JointConfig,
    input_sampler: impl Fn(usize, u64) -> Vec<ValueVec>,
    shift: &ShiftSpec,
    opts: &ShiftOptions,
) -> Result<ShiftReport> {
    if shift.component >= shift.measured {
        return Err(Error::validation(
            "shift component must be upstream of the measured component",
        ));
    }
    if config.value_for(shift.component) == &shift.new_value {
        return Err(Error::validation("shift does not change the configuration"));
    }
    let shifted = config.with_value(shift.component, shift.new_value.clone());
    graph.check_config(&shifted)?;

    let eval_opts = |seed: u64| PreferenceOptions {
        n_candidates: 2,
        mc_rollouts: opts.eval_rollouts,
        policy: LabelingPolicy::deterministic(),
        temperature: opts.candidate_temperature,
        seed,
        iteration: 0,
    };
    let pre_inputs = input_sampler(opts.eval_inputs, named_seed(opts.seed, "pre_inputs"));
    let pre_pairs = build_preferences(
        graph,
        config,
        &pre_inputs,
        shift.measured,
        &eval_opts(named_seed(opts.seed, "pre_pairs")),
    )?;
    let pre_accuracy = pairwise_accuracy(net, &pre_pairs.records)?;

    let post_inputs = input_sampler(opts.eval_inputs, named_seed(opts.seed, "post_inputs"));
    let post_pairs = build_preferences(
        graph,
        &shifted,
        &post_inputs,
        shift.measured,
        &eval_opts(named_seed(opts.seed, "post_pairs")),
    )?;
    let post_accuracy = pairwise_accuracy(net, &post_pairs.records)?;

    let mut buffer = ReplayBuffer::new(ReplayBuffer::DEFAULT_CAPACITY);
    let mut recovery = Vec::with_capacity(opts.max_calls);
    let mut calls_used = opts.max_calls;
    for call in 0..opts.max_calls {
        if opts.adaptation_enabled {
            let call_seed = indexed_seed(named_seed(opts.seed, "adapt_call"), call as u64);
            let fresh = input_sampler(opts.fresh_size, named_seed(call_seed, "inputs"));
            let minibatch = build_preferences(
                graph,
                &shifted,
                &fresh,
                shift.measured,
                &PreferenceOptions {
                    n_candidates: 2,
                    mc_rollouts: opts.eval_rollouts,
                    policy: LabelingPolicy::deterministic(),
                    temperature: opts.candidate_temperature,
                    seed: named_seed(call_seed, "pairs"),
                    iteration: call + 1,
                },
            )?;
            adapt_online(
                net,
                &minibatch.records,
                Some(&mut buffer),
                &AdaptOptions {
                    seed: named_seed(call_seed, "adapt"),
                    ..opts.adapt.clone()
                },
            )?;
        }
        let acc = pairwise_accuracy(net, &post_pairs.records)?;
        recovery.push(acc);
        if calls_used == opts.max_calls && acc >= pre_accuracy - 0.05 {
            calls_used = call + 1;
        }
    }
    Ok(ShiftReport {
        pre_accuracy,
        post_accuracy,
        recovery,
        calls_used,
        adaptation_enabled: opts.adaptation_enabled,
    })
}
