//! Offline training and online adaptation of the reward network.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reward::data::{PreferenceDataset, PreferenceRecord};
use crate::reward::loss::{pairwise_accuracy, ranking_loss, ranking_loss_grad};
use crate::reward::net::RewardNet;
use crate::seed::{named_seed, rng_for};

/// Datasets smaller than this train full-batch with no held-out split.
const MIN_RECORDS_FOR_VALIDATION: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOptions {
    pub learning_rate: f64,
    /// Classical momentum coefficient (0 disables).
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Early-stopping patience, counted in gradient steps.
    pub patience: usize,
    /// Fraction of records held out for validation (at least one record).
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            // Mini-batch gradient descent with heavy-ball momentum; the
            // ranking-loss gradients through the small-uniform init are tiny
            // and plain steps stall on the initial plateau.
            learning_rate: 0.05,
            momentum: 0.9,
            epochs: 25,
            batch_size: 32,
            patience: 512,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub options: TrainOptions,
    pub records: usize,
    pub val_records: usize,
    pub steps: usize,
    pub epochs_run: usize,
    /// Mean training-batch loss per epoch.
    pub train_curve: Vec<f64>,
    /// Validation loss per epoch (empty when no split).
    pub val_curve: Vec<f64>,
    pub best_val_loss: Option<f64>,
    pub best_step: usize,
    pub stopped_early: bool,
    /// Pairwise accuracy on the validation split at the restored parameters.
    pub val_accuracy: Option<f64>,
}

/// Minimizes the ranking loss by mini-batch gradient descent with early
/// stopping on a held-out split; the network is left at the best-validation
/// parameters. Datasets with fewer than ten records train full-batch without
/// a split.
pub fn train_offline(
    net: &mut RewardNet,
    dataset: &PreferenceDataset,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::validation("training dataset is empty"));
    }
    for &head in &net.arch.heads {
        if !dataset.records.iter().any(|r| r.component == head) {
            return Err(Error::validation(format!(
                "no preference records for headed component {head}"
            )));
        }
    }

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = rng_for(named_seed(opts.seed, "train_split"));
    order.shuffle(&mut rng);

    let use_validation = dataset.len() >= MIN_RECORDS_FOR_VALIDATION;
    let val_n = if use_validation {
        ((dataset.len() as f64 * opts.val_fraction).ceil() as usize).max(1)
    } else {
        0
    };
    let val_set: Vec<PreferenceRecord> = order[..val_n]
        .iter()
        .map(|&i| dataset.records[i].clone())
        .collect();
    let train_idx: Vec<usize> = order[val_n..].to_vec();
    let batch_size = if use_validation {
        opts.batch_size.max(1)
    } else {
        train_idx.len()
    };

    let mut best_params = net.params.clone();
    let mut best_val_loss = if use_validation {
        Some(ranking_loss(net, &val_set)?)
    } else {
        None
    };
    let mut best_step = 0;
    let mut steps = 0usize;
    let mut steps_since_best = 0usize;
    let mut stopped_early = false;
    let mut train_curve = Vec::new();
    let mut val_curve = Vec::new();
    let mut epochs_run = 0;

    let mut velocity = vec![0.0; net.param_count()];
    'epochs: for epoch in 0..opts.epochs {
        let mut idx = train_idx.clone();
        let mut erng = rng_for(named_seed(named_seed(opts.seed, "epoch"), &epoch.to_string()));
        idx.shuffle(&mut erng);
        let mut epoch_losses = Vec::new();
        for chunk in idx.chunks(batch_size) {
            let batch: Vec<PreferenceRecord> =
                chunk.iter().map(|&i| dataset.records[i].clone()).collect();
            let loss = ranking_loss(net, &batch)?;
            if !loss.is_finite() {
                return Err(Error::numeric(format!(
                    "training loss became non-finite at step {steps}"
                )));
            }
            epoch_losses.push(loss);
            let grad = ranking_loss_grad(net, &batch)?;
            for ((p, g), v) in net.params.iter_mut().zip(&grad).zip(velocity.iter_mut()) {
                *v = opts.momentum * *v - opts.learning_rate * g;
                *p += *v;
            }
            net.check_finite()?;
            steps += 1;
            if use_validation {
                let vl = ranking_loss(net, &val_set)?;
                if best_val_loss.map_or(true, |b| vl < b) {
                    best_val_loss = Some(vl);
                    best_params = net.params.clone();
                    best_step = steps;
                    steps_since_best = 0;
                } else {
                    steps_since_best += 1;
                    if steps_since_best >= opts.patience {
                        stopped_early = true;
                    }
                }
            }
            if stopped_early {
                epochs_run = epoch + 1;
                train_curve.push(mean(&epoch_losses));
                if use_validation {
                    val_curve.push(ranking_loss(net, &val_set)?);
                }
                break 'epochs;
            }
        }
        epochs_run = epoch + 1;
        train_curve.push(mean(&epoch_losses));
        if use_validation {
            val_curve.push(ranking_loss(net, &val_set)?);
        }
    }

    if use_validation {
        net.params = best_params;
    }
    let val_accuracy = if use_validation {
        Some(pairwise_accuracy(net, &val_set)?)
    } else {
        None
    };
    Ok(TrainReport {
        options: opts.clone(),
        records: dataset.len(),
        val_records: val_n,
        steps,
        epochs_run,
        train_curve,
        val_curve,
        best_val_loss,
        best_step,
        stopped_early,
        val_accuracy,
    })
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Bounded FIFO store of past preference records for one component.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    store: VecDeque<PreferenceRecord>,
}

impl ReplayBuffer {
    pub const DEFAULT_CAPACITY: usize = 256;

    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity: capacity.max(1),
            store: VecDeque::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn push(&mut self, record: PreferenceRecord) {
        if self.store.len() == self.capacity {
            self.store.pop_front();
        }
        self.store.push_back(record);
    }

    /// Samples up to `n` records without replacement, deterministically.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<PreferenceRecord> {
        let mut idx: Vec<usize> = (0..self.store.len()).collect();
        let mut rng = rng_for(seed);
        idx.shuffle(&mut rng);
        idx.truncate(n);
        idx.sort_unstable();
        idx.into_iter().map(|i| self.store[i].clone()).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptOptions {
    pub steps: usize,
    pub learning_rate: f64,
    /// Classical momentum coefficient (0 disables).
    pub momentum: f64,
    /// Freeze the shared backbone and update only the component head.
    pub freeze_backbone: bool,
    pub seed: u64,
}

impl Default for AdaptOptions {
    fn default() -> Self {
        AdaptOptions {
            steps: 25,
            learning_rate: 0.05,
            momentum: 0.9,
            freeze_backbone: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdaptReport {
    pub component: usize,
    pub steps: usize,
    pub minibatch_size: usize,
    pub replay_size: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Online adaptation: `steps` full-batch gradient steps on the mini-batch
/// plus records sampled from the replay buffer. Only the backbone and the
/// mini-batch component's head receive gradient (other heads see none by
/// construction); with `freeze_backbone` only the head moves. The mini-batch
/// is appended to the buffer afterwards.
pub fn adapt_online(
    net: &mut RewardNet,
    minibatch: &[PreferenceRecord],
    mut buffer: Option<&mut ReplayBuffer>,
    opts: &AdaptOptions,
) -> Result<AdaptReport> {
    if minibatch.is_empty() {
        return Err(Error::validation("adaptation mini-batch is empty"));
    }
    let component = minibatch[0].component;
    if minibatch.iter().any(|r| r.component != component) {
        return Err(Error::validation(
            "adaptation mini-batch mixes components; one component per call",
        ));
    }
    net.arch.head_slot(component).ok_or_else(|| {
        Error::validation(format!("component {component} has no reward head"))
    })?;

    let replay: Vec<PreferenceRecord> = match buffer.as_deref() {
        Some(buf) => buf.sample(minibatch.len(), named_seed(opts.seed, "replay")),
        None => Vec::new(),
    };
    let mut batch: Vec<PreferenceRecord> = minibatch.to_vec();
    batch.extend(replay.iter().cloned());

    let backbone_len = net.param_count() - net.arch.heads.len() * (net.arch.embed_dim + 1);
    let initial_loss = ranking_loss(net, &batch)?;
    let mut final_loss = initial_loss;
    let mut velocity = vec![0.0; net.param_count()];
    for step in 0..opts.steps {
        let grad = ranking_loss_grad(net, &batch)?;
        for (i, ((p, g), v)) in net
            .params
            .iter_mut()
            .zip(&grad)
            .zip(velocity.iter_mut())
            .enumerate()
        {
            if opts.freeze_backbone && i < backbone_len {
                continue;
            }
            *v = opts.momentum * *v - opts.learning_rate * g;
            *p += *v;
        }
        net.check_finite()?;
        final_loss = ranking_loss(net, &batch)?;
        if !final_loss.is_finite() {
            return Err(Error::numeric(format!(
                "adaptation loss became non-finite at step {step}"
            )));
        }
    }
    if let Some(buf) = buffer.as_deref_mut() {
        for r in minibatch {
            buf.push(r.clone());
        }
    }
    Ok(AdaptReport {
        component,
        steps: opts.steps,
        minibatch_size: minibatch.len(),
        replay_size: replay.len(),
        initial_loss,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::net::NetArchitecture;
    use crate::system::testkit::vv;

    fn arch() -> NetArchitecture {
        NetArchitecture {
            max_x_dim: 2,
            max_y_dim: 1,
            num_components: 2,
            widths: vec![16, 16],
            embed_dim: 8,
            heads: vec![1, 2],
        }
    }

    /// Pairs whose preferred output has the larger value of a fixed linear
    /// utility u(y) = y; linearly separable by construction.
    fn separable_pairs(n: usize, component: usize, seed: u64) -> Vec<PreferenceRecord> {
        use rand::Rng;
        let mut rng = rng_for(seed);
        (0..n)
            .map(|_| {
                let x = vv(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
                let a: f64 = rng.gen_range(-1.0..1.0);
                let b: f64 = rng.gen_range(-1.0..1.0);
                let (hi, lo) = if a > b { (a, b) } else { (b, a) };
                PreferenceRecord {
                    component,
                    context: x,
                    y_plus: vv(&[hi]),
                    y_minus: vv(&[lo]),
                    gap: hi - lo,
                    snapshot_id: 0,
                    iteration: 0,
                }
            })
            .collect()
    }

    #[test]
    fn offline_training_separates_linear_utility() {
        let mut records = separable_pairs(120, 1, 3);
        records.extend(separable_pairs(120, 2, 4));
        let dataset = PreferenceDataset::new(records, 0);
        let mut net = RewardNet::init(arch(), 7);
        let opts = TrainOptions {
            epochs: 200,
            ..TrainOptions::default()
        };
        let report = train_offline(&mut net, &dataset, &opts).unwrap();
        assert_eq!(report.options.batch_size, 32);
        assert!(report.val_records >= 1);
        let acc = pairwise_accuracy(&net, &dataset.records).unwrap();
        assert!(acc >= 0.99, "accuracy {acc}");
        assert_eq!(report.val_accuracy, Some(1.0));
    }

    #[test]
    fn defaults_match_reference_hyperparameters() {
        let opts = TrainOptions::default();
        assert_eq!(opts.epochs, 25);
        assert_eq!(opts.batch_size, 32);
        assert_eq!(opts.patience, 512);
        let dataset = PreferenceDataset::new(separable_pairs(40, 1, 5), 0);
        let mut net = RewardNet::init(
            NetArchitecture {
                heads: vec![1],
                ..arch()
            },
            1,
        );
        let report = train_offline(&mut net, &dataset, &opts).unwrap();
        assert_eq!(report.options.epochs, 25);
        assert_eq!(report.options.batch_size, 32);
    }

    #[test]
    fn tiny_dataset_trains_full_batch_without_split() {
        let dataset = PreferenceDataset::new(separable_pairs(6, 1, 5), 0);
        let mut net = RewardNet::init(
            NetArchitecture {
                heads: vec![1],
                ..arch()
            },
            1,
        );
        let report = train_offline(&mut net, &dataset, &TrainOptions::default()).unwrap();
        assert_eq!(report.val_records, 0);
        assert!(report.best_val_loss.is_none());
        assert!(!report.stopped_early);
        // Full batch: one step per epoch.
        assert_eq!(report.steps, report.epochs_run);
    }

    #[test]
    fn missing_component_records_are_rejected() {
        let dataset = PreferenceDataset::new(separable_pairs(20, 1, 5), 0);
        let mut net = RewardNet::init(arch(), 1);
        assert!(train_offline(&mut net, &dataset, &TrainOptions::default()).is_err());
    }

    #[test]
    fn full_batch_descent_monotonically_decreases_loss_to_perfect_accuracy() {
        let dataset = PreferenceDataset::new(separable_pairs(8, 1, 11), 0);
        let mut net = RewardNet::init(
            NetArchitecture {
                heads: vec![1],
                ..arch()
            },
            2,
        );
        let mut prev = ranking_loss(&net, &dataset.records).unwrap();
        let mut reached_perfect = false;
        for _ in 0..4000 {
            let grad = ranking_loss_grad(&net, &dataset.records).unwrap();
            for (p, g) in net.params.iter_mut().zip(&grad) {
                *p -= 5e-3 * g;
            }
            let loss = ranking_loss(&net, &dataset.records).unwrap();
            assert!(loss < prev, "loss failed to decrease: {loss} vs {prev}");
            prev = loss;
            if pairwise_accuracy(&net, &dataset.records).unwrap() == 1.0 {
                reached_perfect = true;
                break;
            }
        }
        assert!(reached_perfect);
    }

    #[test]
    fn zero_steps_leaves_net_unchanged() {
        let mut net = RewardNet::init(arch(), 1);
        let before = net.clone();
        let batch = separable_pairs(4, 1, 9);
        let report = adapt_online(
            &mut net,
            &batch,
            None,
            &AdaptOptions {
                steps: 0,
                ..AdaptOptions::default()
            },
        )
        .unwrap();
        assert_eq!(net, before);
        assert_eq!(report.initial_loss, report.final_loss);
    }

    #[test]
    fn mixed_component_minibatch_is_rejected() {
        let mut net = RewardNet::init(arch(), 1);
        let mut batch = separable_pairs(2, 1, 9);
        batch.extend(separable_pairs(2, 2, 10));
        assert!(adapt_online(&mut net, &batch, None, &AdaptOptions::default()).is_err());
    }

    #[test]
    fn adaptation_updates_only_backbone_and_own_head() {
        let mut net = RewardNet::init(arch(), 1);
        let before = net.clone();
        let batch = separable_pairs(8, 1, 9);
        adapt_online(&mut net, &batch, None, &AdaptOptions::default()).unwrap();
        // Head of component 2 (the last head block) must be untouched.
        let head_len = net.arch.embed_dim + 1;
        let tail = net.param_count() - head_len;
        assert_eq!(net.params[tail..], before.params[tail..]);
        assert_ne!(net.params[..tail], before.params[..tail]);
    }

    #[test]
    fn frozen_backbone_moves_only_the_head() {
        let mut net = RewardNet::init(arch(), 1);
        let before = net.clone();
        let batch = separable_pairs(8, 1, 9);
        adapt_online(
            &mut net,
            &batch,
            None,
            &AdaptOptions {
                freeze_backbone: true,
                ..AdaptOptions::default()
            },
        )
        .unwrap();
        let head_len = net.arch.embed_dim + 1;
        let backbone_len = net.param_count() - 2 * head_len;
        assert_eq!(net.params[..backbone_len], before.params[..backbone_len]);
        assert_ne!(
            net.params[backbone_len..backbone_len + head_len],
            before.params[backbone_len..backbone_len + head_len]
        );
    }

    #[test]
    fn replay_buffer_is_fifo_with_capacity() {
        let mut buf = ReplayBuffer::new(3);
        for i in 0..5 {
            buf.push(PreferenceRecord {
                component: 1,
                context: vv(&[i as f64]),
                y_plus: vv(&[1.0]),
                y_minus: vv(&[0.0]),
                gap: 0.1,
                snapshot_id: 0,
                iteration: i,
            });
        }
        assert_eq!(buf.len(), 3);
        let all = buf.sample(10, 0);
        let iters: Vec<usize> = all.iter().map(|r| r.iteration).collect();
        assert_eq!(iters, vec![2, 3, 4]);
        assert_eq!(buf.sample(2, 7), buf.sample(2, 7));
    }
}
