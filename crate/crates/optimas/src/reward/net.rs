//! Shared-backbone reward network with per-component linear heads.
//!
//! The backbone is a small tanh MLP mapping the concatenated features
//! `[x_k (zero-padded) | y_k (zero-padded) | one-hot(component)]` to an
//! embedding; one linear head per configurable component projects the
//! embedding to a scalar score. All parameters live in one flat vector with
//! an explicit index map so gradients, serialization, and finite-difference
//! checks all speak the same layout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::system::SystemGraph;
use crate::value::ValueVec;

pub const DEFAULT_WIDTHS: [usize; 2] = [64, 64];
pub const DEFAULT_EMBED_DIM: usize = 32;

/// Shape of a reward network. `heads` lists the component ids with a linear
/// head, ascending; the head slot of a component is its position here.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetArchitecture {
    pub max_x_dim: usize,
    pub max_y_dim: usize,
    pub num_components: usize,
    pub widths: Vec<usize>,
    pub embed_dim: usize,
    pub heads: Vec<usize>,
}

impl NetArchitecture {
    /// Architecture sized for a graph: heads for every component with a
    /// non-empty configuration space.
    pub fn for_graph(graph: &SystemGraph) -> Self {
        let max_x_dim = graph
            .components
            .iter()
            .map(|c| c.in_dims.iter().sum::<usize>())
            .max()
            .unwrap_or(1);
        let max_y_dim = graph.components.iter().map(|c| c.out_dim).max().unwrap_or(1);
        NetArchitecture {
            max_x_dim,
            max_y_dim,
            num_components: graph.num_components(),
            widths: DEFAULT_WIDTHS.to_vec(),
            embed_dim: DEFAULT_EMBED_DIM,
            heads: graph.configurable_components(),
        }
    }

    pub fn with_widths(mut self, widths: Vec<usize>, embed_dim: usize) -> Self {
        self.widths = widths;
        self.embed_dim = embed_dim;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.max_x_dim + self.max_y_dim + self.num_components
    }

    /// Layer dimensions: input, hidden widths, embedding.
    fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend_from_slice(&self.widths);
        dims.push(self.embed_dim);
        dims
    }

    pub fn param_count(&self) -> usize {
        let dims = self.layer_dims();
        let backbone: usize = dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum();
        backbone + self.heads.len() * (self.embed_dim + 1)
    }

    /// Flat offsets of layer `l`'s weight matrix and bias vector.
    fn layer_offset(&self, layer: usize) -> (usize, usize) {
        let dims = self.layer_dims();
        let mut off = 0;
        for l in 0..layer {
            off += dims[l + 1] * dims[l] + dims[l + 1];
        }
        (off, off + dims[layer + 1] * dims[layer])
    }

    fn backbone_len(&self) -> usize {
        let dims = self.layer_dims();
        dims.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
    }

    pub fn head_slot(&self, component: usize) -> Option<usize> {
        self.heads.iter().position(|&id| id == component)
    }

    /// Flat offsets of a head's weight vector and bias.
    fn head_offset(&self, slot: usize) -> (usize, usize) {
        let base = self.backbone_len() + slot * (self.embed_dim + 1);
        (base, base + self.embed_dim)
    }
}

/// Activations kept from a forward pass for backpropagation.
pub struct ForwardCache {
    /// `acts[0]` is the feature vector; `acts[l + 1]` the output of layer l.
    acts: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn embedding(&self) -> &[f64] {
        self.acts.last().expect("cache has layers")
    }
}

/// The reward network: architecture plus flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardNet {
    pub arch: NetArchitecture,
    pub params: Vec<f64>,
}

impl RewardNet {
    /// Zero-initialized network (scores are identically zero).
    pub fn zeros(arch: NetArchitecture) -> Self {
        let n = arch.param_count();
        RewardNet {
            arch,
            params: vec![0.0; n],
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weight init, zero biases.
    pub fn init(arch: NetArchitecture, seed: u64) -> Self {
        let mut net = RewardNet::zeros(arch);
        let mut rng = rng_for(seed);
        let dims = net.arch.layer_dims();
        for l in 0..dims.len() - 1 {
            let (w_off, _) = net.arch.layer_offset(l);
            let bound = 1.0 / (dims[l] as f64).sqrt();
            for i in 0..dims[l + 1] * dims[l] {
                net.params[w_off + i] = rng.gen_range(-bound..bound);
            }
        }
        let bound = 1.0 / (net.arch.embed_dim as f64).sqrt();
        for slot in 0..net.arch.heads.len() {
            let (w_off, _) = net.arch.head_offset(slot);
            for i in 0..net.arch.embed_dim {
                net.params[w_off + i] = rng.gen_range(-bound..bound);
            }
        }
        net
    }

    /// Network sized and initialized for a graph.
    pub fn for_graph(graph: &SystemGraph, seed: u64) -> Self {
        RewardNet::init(NetArchitecture::for_graph(graph), seed)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Feature vector `[pad(x) | pad(y) | one-hot(component)]`.
    pub fn features(&self, component: usize, x: &ValueVec, y: &ValueVec) -> Result<Vec<f64>> {
        let a = &self.arch;
        if x.dim() > a.max_x_dim || y.dim() > a.max_y_dim {
            return Err(Error::validation(format!(
                "features for component {component} exceed architecture dims \
                 ({} > {} or {} > {})",
                x.dim(),
                a.max_x_dim,
                y.dim(),
                a.max_y_dim
            )));
        }
        if component == 0 || component > a.num_components {
            return Err(Error::validation(format!("no component {component}")));
        }
        let mut f = vec![0.0; a.input_dim()];
        f[..x.dim()].copy_from_slice(x.as_slice());
        f[a.max_x_dim..a.max_x_dim + y.dim()].copy_from_slice(y.as_slice());
        f[a.max_x_dim + a.max_y_dim + component - 1] = 1.0;
        Ok(f)
    }

    /// Backbone forward pass: tanh hidden layers, linear embedding layer.
    pub fn forward(&self, features: Vec<f64>) -> ForwardCache {
        let dims = self.arch.layer_dims();
        let n_layers = dims.len() - 1;
        let mut acts = Vec::with_capacity(dims.len());
        acts.push(features);
        for l in 0..n_layers {
            let (w_off, b_off) = self.arch.layer_offset(l);
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let prev = &acts[l];
            let mut z = vec![0.0; n_out];
            for (r, zr) in z.iter_mut().enumerate() {
                let row = &self.params[w_off + r * n_in..w_off + (r + 1) * n_in];
                let mut s = self.params[b_off + r];
                for (w, a) in row.iter().zip(prev) {
                    s += w * a;
                }
                *zr = if l + 1 < n_layers { s.tanh() } else { s };
            }
            acts.push(z);
        }
        ForwardCache { acts }
    }

    /// Head projection of an embedding.
    fn head_score(&self, slot: usize, embedding: &[f64]) -> f64 {
        let (w_off, b_off) = self.arch.head_offset(slot);
        let w = &self.params[w_off..w_off + self.arch.embed_dim];
        w.iter().zip(embedding).map(|(a, b)| a * b).sum::<f64>() + self.params[b_off]
    }

    /// Scores one (context, output) pair for a component. Pure: safe to call
    /// concurrently on a shared net.
    pub fn score(&self, component: usize, x: &ValueVec, y: &ValueVec) -> Result<f64> {
        let (s, _) = self.score_cached(component, x, y)?;
        Ok(s)
    }

    /// Score plus the forward cache needed for backprop.
    pub fn score_cached(
        &self,
        component: usize,
        x: &ValueVec,
        y: &ValueVec,
    ) -> Result<(f64, ForwardCache)> {
        let slot = self.arch.head_slot(component).ok_or_else(|| {
            Error::validation(format!(
                "component {component} has no reward head (empty configuration space)"
            ))
        })?;
        let cache = self.forward(self.features(component, x, y)?);
        let s = self.head_score(slot, cache.embedding());
        if !s.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite score for component {component}"
            )));
        }
        Ok((s, cache))
    }

    /// Accumulates `coef * d(score)/d(params)` into `grad`, reusing a forward
    /// cache. Only the backbone and the scored component's head receive
    /// gradient, by construction.
    pub fn accumulate_score_grad(
        &self,
        component: usize,
        cache: &ForwardCache,
        coef: f64,
        grad: &mut [f64],
    ) {
        let slot = self
            .arch
            .head_slot(component)
            .expect("checked by score_cached");
        let dims = self.arch.layer_dims();
        let n_layers = dims.len() - 1;
        let embedding = cache.embedding();
        let (hw_off, hb_off) = self.arch.head_offset(slot);
        for i in 0..self.arch.embed_dim {
            grad[hw_off + i] += coef * embedding[i];
        }
        grad[hb_off] += coef;
        // d(score)/d(embedding) = head weights.
        let mut d_act: Vec<f64> = self.params[hw_off..hw_off + self.arch.embed_dim]
            .iter()
            .map(|w| coef * w)
            .collect();
        for l in (0..n_layers).rev() {
            let (w_off, b_off) = self.arch.layer_offset(l);
            let (n_in, n_out) = (dims[l], dims[l + 1]);
            let out_act = &cache.acts[l + 1];
            let in_act = &cache.acts[l];
            // Hidden layers carry tanh; the embedding layer is linear.
            let dz: Vec<f64> = if l + 1 < n_layers {
                d_act
                    .iter()
                    .zip(out_act)
                    .map(|(d, a)| d * (1.0 - a * a))
                    .collect()
            } else {
                d_act.clone()
            };
            let mut d_prev = vec![0.0; n_in];
            for r in 0..n_out {
                let row_off = w_off + r * n_in;
                grad[b_off + r] += dz[r];
                for c in 0..n_in {
                    grad[row_off + c] += dz[r] * in_act[c];
                    d_prev[c] += self.params[row_off + c] * dz[r];
                }
            }
            d_act = d_prev;
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.params.iter().all(|p| p.is_finite()) {
            Ok(())
        } else {
            Err(Error::numeric("reward net parameters became non-finite"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::testkit::vv;

    pub(crate) fn tiny_arch() -> NetArchitecture {
        NetArchitecture {
            max_x_dim: 2,
            max_y_dim: 2,
            num_components: 3,
            widths: vec![8, 8],
            embed_dim: 4,
            heads: vec![1, 3],
        }
    }

    #[test]
    fn zero_net_scores_zero_everywhere() {
        let net = RewardNet::zeros(tiny_arch());
        for k in [1, 3] {
            let s = net.score(k, &vv(&[0.5, -0.5]), &vv(&[1.0])).unwrap();
            assert_eq!(s, 0.0);
        }
    }

    #[test]
    fn component_without_head_is_rejected() {
        let net = RewardNet::zeros(tiny_arch());
        assert!(net.score(2, &vv(&[0.5]), &vv(&[1.0])).is_err());
    }

    #[test]
    fn param_count_matches_layout() {
        let arch = tiny_arch();
        // (6*8+8) + (8*8+8) + (8*4+4) + 2*(4+1) = 56 + 72 + 36 + 10
        assert_eq!(arch.input_dim(), 7);
        let expect = (7 * 8 + 8) + (8 * 8 + 8) + (8 * 4 + 4) + 2 * 5;
        assert_eq!(arch.param_count(), expect);
        assert_eq!(RewardNet::init(arch, 0).param_count(), expect);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = RewardNet::init(tiny_arch(), 11);
        let b = RewardNet::init(tiny_arch(), 11);
        let c = RewardNet::init(tiny_arch(), 12);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.params.iter().all(|p| p.abs() <= 1.0));
    }

    #[test]
    fn head_isolation_perturbing_other_head_keeps_score() {
        let mut net = RewardNet::init(tiny_arch(), 5);
        let x = vv(&[0.3, 0.1]);
        let y = vv(&[-0.2, 0.9]);
        let before = net.score(1, &x, &y).unwrap();
        // Perturb head of component 3 (slot 1).
        let (w_off, b_off) = net.arch.head_offset(1);
        for i in w_off..=b_off {
            net.params[i] += 10.0;
        }
        let after = net.score(1, &x, &y).unwrap();
        assert_eq!(before, after);
        assert_ne!(net.score(3, &x, &y).unwrap(), before);
    }
}
