//! Component scheduling and softmax sampling.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;

/// How the loop picks the component to optimize next.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulerPolicy {
    Uniform,
    /// Probability proportional to each component's mean preference gap,
    /// sharpened by `1 / temperature` (1.0 keeps plain proportionality).
    /// Components without gap information receive the mean of the known
    /// gaps.
    GapWeighted { temperature: f64 },
}

impl Default for SchedulerPolicy {
    fn default() -> Self {
        SchedulerPolicy::GapWeighted { temperature: 1.0 }
    }
}

/// Picks one configurable component. `last_gaps` holds each component's most
/// recent mean absolute preference gap; gap-zero batches are uninformative
/// and should not be present.
pub fn select_component(
    configurable: &[usize],
    last_gaps: &BTreeMap<usize, f64>,
    policy: &SchedulerPolicy,
    seed: u64,
) -> Result<usize> {
    if configurable.is_empty() {
        return Err(Error::validation("no configurable components to select"));
    }
    let mut rng = rng_for(seed);
    match policy {
        SchedulerPolicy::Uniform => Ok(configurable[rng.gen_range(0..configurable.len())]),
        SchedulerPolicy::GapWeighted { temperature } => {
            if !(*temperature > 0.0) {
                return Err(Error::validation("gap temperature must be positive"));
            }
            let known: Vec<f64> = configurable
                .iter()
                .filter_map(|k| last_gaps.get(k).copied())
                .filter(|g| *g > 0.0)
                .collect();
            if known.is_empty() {
                return Ok(configurable[rng.gen_range(0..configurable.len())]);
            }
            let fallback = known.iter().sum::<f64>() / known.len() as f64;
            let weights: Vec<f64> = configurable
                .iter()
                .map(|k| {
                    let gap = last_gaps.get(k).copied().filter(|g| *g > 0.0).unwrap_or(fallback);
                    gap.powf(1.0 / temperature)
                })
                .collect();
            let total: f64 = weights.iter().sum();
            if !(total > 0.0) {
                return Ok(configurable[rng.gen_range(0..configurable.len())]);
            }
            let mut u = rng.gen::<f64>() * total;
            for (k, w) in configurable.iter().zip(&weights) {
                if u < *w {
                    return Ok(*k);
                }
                u -= w;
            }
            Ok(*configurable.last().expect("non-empty"))
        }
    }
}

/// Samples an index with probability proportional to `exp(score / temperature)`.
/// Temperature zero is greedy argmax with lowest-index tie-breaking.
pub fn softmax_sample(scores: &[f64], temperature: f64, seed: u64) -> usize {
    assert!(!scores.is_empty(), "softmax over empty scores");
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if temperature <= 0.0 {
        return scores.iter().position(|s| *s == max).unwrap_or(0);
    }
    let weights: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng_for(seed).gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    scores.len() - 1
}
