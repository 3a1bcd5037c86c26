//! Gauss–Hermite quadrature for exact noise expectations.
//!
//! Component noise is standard normal, so expectations over it are computed
//! on a deterministic node grid instead of by sampling: oracle values are
//! reproducible bit for bit. Nodes and weights for the physicists' weight
//! e^{-t^2} are found by Newton iteration on the Hermite recurrence; for
//! E[f(Z)] with Z ~ N(0,1) the nodes are scaled by sqrt(2) and the weights
//! normalized by 1/sqrt(pi).

use std::collections::BTreeMap;

use crate::system::SystemGraph;
use crate::value::ValueVec;

/// Quadrature rule for one standard normal dimension: `E[f(Z)] ≈ Σ w_i f(z_i)`
/// with the `w_i` summing to 1.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds an `n`-point rule (exact for polynomials up to degree 2n-1).
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        let (t, w) = hermite_nodes(n);
        let norm: f64 = w.iter().sum();
        GaussHermite {
            nodes: t.iter().map(|x| x * std::f64::consts::SQRT_2).collect(),
            weights: w.iter().map(|x| x / norm).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Nodes and weights of the n-point Hermite rule on weight e^{-t^2}.
fn hermite_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let pi_root = std::f64::consts::PI.sqrt();
    let mut z = 0.0_f64;
    for i in 0..(n + 1) / 2 {
        // Initial guesses for the i-th largest root.
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            // Recurrence for orthonormal Hermite polynomials.
            let mut p1 = 1.0 / pi_root.sqrt();
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2
                    - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = z;
        nodes[n - 1 - i] = -z;
        weights[i] = 2.0 / (pp * pp);
        weights[n - 1 - i] = weights[i];
    }
    // Ascending node order for deterministic iteration.
    nodes.reverse();
    (nodes, weights)
}

/// One point of a multi-component noise grid: standard-normal units per
/// component id, plus the product weight.
#[derive(Debug, Clone)]
pub struct NoisePoint {
    pub z: BTreeMap<usize, ValueVec>,
    pub weight: f64,
}

/// Tensor-product grid over the noise dimensions of a set of components.
///
/// Components with `noise_scale == 0` contribute no dimensions. The grid over
/// an empty dimension set is a single zero-noise point with weight 1.
pub fn noise_grid(graph: &SystemGraph, components: &[usize], points_per_dim: usize) -> Vec<NoisePoint> {
    let rule = GaussHermite::new(points_per_dim);
    // (component, dim index) per tensor axis, in component order.
    let mut axes: Vec<(usize, usize)> = Vec::new();
    for &id in components {
        let c = graph.component(id);
        if c.noise_scale > 0.0 {
            for d in 0..c.out_dim {
                axes.push((id, d));
            }
        }
    }
    if axes.is_empty() {
        return vec![NoisePoint {
            z: BTreeMap::new(),
            weight: 1.0,
        }];
    }
    let mut grid = Vec::with_capacity(rule.len().pow(axes.len() as u32));
    let mut counter = vec![0usize; axes.len()];
    loop {
        let mut z: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        let mut weight = 1.0;
        for (axis, &(id, dim)) in axes.iter().enumerate() {
            let node_idx = counter[axis];
            let entry = z
                .entry(id)
                .or_insert_with(|| vec![0.0; graph.component(id).out_dim]);
            entry[dim] = rule.nodes[node_idx];
            weight *= rule.weights[node_idx];
        }
        grid.push(NoisePoint {
            z: z.into_iter().map(|(k, v)| (k, ValueVec::from(v))).collect(),
            weight,
        });
        // Mixed-radix increment.
        let mut axis = 0;
        loop {
            if axis == axes.len() {
                return grid;
            }
            counter[axis] += 1;
            if counter[axis] < rule.len() {
                break;
            }
            counter[axis] = 0;
            axis += 1;
        }
    }
}

/// Number of points `noise_grid` would produce, without building it.
pub fn noise_grid_size(graph: &SystemGraph, components: &[usize], points_per_dim: usize) -> usize {
    let dims: usize = components
        .iter()
        .map(|&id| {
            let c = graph.component(id);
            if c.noise_scale > 0.0 {
                c.out_dim
            } else {
                0
            }
        })
        .sum();
    points_per_dim.pow(dims as u32).max(1)
}
