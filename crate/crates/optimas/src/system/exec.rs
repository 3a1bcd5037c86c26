//! Deterministic system execution.
//!
//! Components run in index order. Component `k` consumes the concatenation of
//! its static parents' outputs (ascending parent id); a port whose edge was
//! dropped by the selector, or whose parent is inactive, is zero-filled. The
//! executor adds `noise_scale * z` to each transfer output, with `z` either
//! drawn from a ChaCha stream seeded per component or injected from a fixed
//! map (used by the exact-expectation oracles).

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::JointConfig;
use crate::error::{Error, Result};
use crate::seed::{component_seed, rng_for};
use crate::value::ValueVec;

use super::{SystemGraph, Trajectory, TrajectoryRecord, SOURCE};

/// Where component noise comes from during one execution.
#[derive(Debug, Clone, Copy)]
pub enum NoiseSource<'a> {
    /// Per-component standard normals from streams seeded by
    /// FNV-1a(seed, component id, instance).
    Seeded(u64),
    /// Standard-normal units injected per component id; components absent
    /// from the map receive zero noise. Used by quadrature oracles.
    Fixed(&'a BTreeMap<usize, ValueVec>),
}

impl NoiseSource<'_> {
    fn draw(&self, component: usize, dim: usize) -> Vec<f64> {
        match self {
            NoiseSource::Seeded(seed) => {
                let mut rng = rng_for(component_seed(*seed, component as u64, 0));
                (0..dim).map(|_| rng.sample(StandardNormal)).collect()
            }
            NoiseSource::Fixed(map) => match map.get(&component) {
                Some(z) => z.as_slice().to_vec(),
                None => vec![0.0; dim],
            },
        }
    }

    fn trajectory_seed(&self) -> u64 {
        match self {
            NoiseSource::Seeded(seed) => *seed,
            NoiseSource::Fixed(_) => 0,
        }
    }
}

/// Execution state up to (but excluding) one target component.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialTrajectory {
    pub system_input: ValueVec,
    /// Records for every active component with index < target.
    pub records: Vec<TrajectoryRecord>,
    /// The component execution stopped before.
    pub target: usize,
    /// Assembled input for the target component.
    pub target_input: ValueVec,
    /// Seed the prefix was executed under.
    pub seed: u64,
}

struct Executor<'g> {
    graph: &'g SystemGraph,
    selected: Vec<(usize, usize)>,
    active: Vec<bool>,
    outputs: Vec<Option<ValueVec>>,
}

impl<'g> Executor<'g> {
    fn new(graph: &'g SystemGraph, input: &ValueVec) -> Result<Self> {
        if input.dim() != graph.source_dim {
            return Err(Error::execution(format!(
                "system input dim {} != declared source dim {}",
                input.dim(),
                graph.source_dim
            )));
        }
        let selected = graph.edge_selector.select(&graph.edges, input);
        let mut active = vec![false; graph.num_components() + 1];
        active[SOURCE] = true;
        for id in graph.active_components(&selected) {
            active[id] = true;
        }
        let mut outputs = vec![None; graph.num_components() + 1];
        outputs[SOURCE] = Some(input.clone());
        Ok(Executor {
            graph,
            selected,
            active,
            outputs,
        })
    }

    /// Concatenated parent outputs for one component, zero-filling dropped or
    /// inactive ports.
    fn assemble_input(&self, component: usize) -> Result<ValueVec> {
        let c = self.graph.component(component);
        let static_parents = self.graph.parents_in(&self.graph.edges, component);
        let mut parts: Vec<ValueVec> = Vec::with_capacity(static_parents.len());
        for (port, &p) in static_parents.iter().enumerate() {
            let fed = self.selected.contains(&(p, component)) && self.active[p];
            let value = if fed {
                self.outputs[p]
                    .clone()
                    .ok_or_else(|| Error::execution(format!("parent {p} has no output")))?
            } else {
                ValueVec::zeros(self.graph.node_out_dim(p))
            };
            if value.dim() != c.in_dims[port] {
                return Err(Error::execution(format!(
                    "dimension mismatch at component {component} port {port}: \
                     expected {}, got {}",
                    c.in_dims[port],
                    value.dim()
                )));
            }
            parts.push(value);
        }
        Ok(ValueVec::concat(parts.iter()))
    }

    fn run_component(
        &mut self,
        component: usize,
        config: &JointConfig,
        noise: &NoiseSource,
    ) -> Result<TrajectoryRecord> {
        let c = self.graph.component(component);
        let input = self.assemble_input(component)?;
        let value = config.value_for(component);
        let mut output = c
            .transfer
            .apply(input.as_slice(), value, &c.config_space, c.out_dim)
            .map_err(|e| Error::execution(format!("component {component}: {e}")))?;
        if c.noise_scale > 0.0 {
            let z = noise.draw(component, c.out_dim);
            let data: Vec<f64> = output
                .as_slice()
                .iter()
                .zip(&z)
                .map(|(y, n)| y + c.noise_scale * n)
                .collect();
            output = ValueVec::from(data);
            output.check_finite(&format!("component {component} output"))?;
        }
        self.outputs[component] = Some(output.clone());
        Ok(TrajectoryRecord {
            component,
            input,
            output,
            config: value.clone(),
        })
    }

    fn finish(
        self,
        input: &ValueVec,
        records: Vec<TrajectoryRecord>,
        seed: u64,
    ) -> Result<Trajectory> {
        let terminal = self.graph.num_components();
        let final_output = self.outputs[terminal]
            .clone()
            .ok_or_else(|| Error::execution("terminal component produced no output"))?;
        let global_reward = self.graph.reward.evaluate(input, &final_output);
        Ok(Trajectory {
            system_input: input.clone(),
            records,
            final_output,
            global_reward,
            seed,
        })
    }
}

/// Executes the full system under one configuration. Deterministic given
/// (graph, config, input, seed).
pub fn forward_execute(
    graph: &SystemGraph,
    config: &JointConfig,
    input: &ValueVec,
    seed: u64,
) -> Result<Trajectory> {
    execute_with_noise(graph, config, input, &NoiseSource::Seeded(seed))
}

/// Full execution with an explicit noise source.
pub fn execute_with_noise(
    graph: &SystemGraph,
    config: &JointConfig,
    input: &ValueVec,
    noise: &NoiseSource,
) -> Result<Trajectory> {
    let mut exec = Executor::new(graph, input)?;
    let mut records = Vec::new();
    for id in 1..=graph.num_components() {
        if exec.active[id] {
            records.push(exec.run_component(id, config, noise)?);
        }
    }
    exec.finish(input, records, noise.trajectory_seed())
}

/// Executes every active component with index < `upto` and returns the
/// assembled input for `upto`.
pub fn partial_execute(
    graph: &SystemGraph,
    config: &JointConfig,
    input: &ValueVec,
    seed: u64,
    upto: usize,
) -> Result<PartialTrajectory> {
    partial_with_noise(graph, config, input, &NoiseSource::Seeded(seed), upto)
}

/// Partial execution with an explicit noise source.
pub fn partial_with_noise(
    graph: &SystemGraph,
    config: &JointConfig,
    input: &ValueVec,
    noise: &NoiseSource,
    upto: usize,
) -> Result<PartialTrajectory> {
    if upto == SOURCE || upto > graph.num_components() {
        return Err(Error::execution(format!("no component {upto}")));
    }
    let mut exec = Executor::new(graph, input)?;
    if !exec.active[upto] {
        return Err(Error::ComponentInactive { component: upto });
    }
    let mut records = Vec::new();
    for id in 1..upto {
        if exec.active[id] {
            records.push(exec.run_component(id, config, noise)?);
        }
    }
    let target_input = exec.assemble_input(upto)?;
    Ok(PartialTrajectory {
        system_input: input.clone(),
        records,
        target: upto,
        target_input,
        seed: noise.trajectory_seed(),
    })
}

/// Completes a partial trajectory with the target component's output pinned
/// to `forced`. Components downstream of the target draw fresh noise derived
/// from `seed`; records with index < target are copied unchanged.
pub fn resume_from(
    graph: &SystemGraph,
    config: &JointConfig,
    partial: &PartialTrajectory,
    forced: &ValueVec,
    seed: u64,
) -> Result<Trajectory> {
    resume_with_noise(graph, config, partial, forced, &NoiseSource::Seeded(seed))
}

/// Resume with an explicit downstream noise source.
pub fn resume_with_noise(
    graph: &SystemGraph,
    config: &JointConfig,
    partial: &PartialTrajectory,
    forced: &ValueVec,
    noise: &NoiseSource,
) -> Result<Trajectory> {
    let k = partial.target;
    let expected = graph.component(k).out_dim;
    if forced.dim() != expected {
        return Err(Error::execution(format!(
            "forced output dim {} != component {k} out_dim {expected}",
            forced.dim()
        )));
    }
    let mut exec = Executor::new(graph, &partial.system_input)?;
    if !exec.active[k] {
        return Err(Error::ComponentInactive { component: k });
    }
    let mut records = partial.records.clone();
    for r in &records {
        exec.outputs[r.component] = Some(r.output.clone());
    }
    exec.outputs[k] = Some(forced.clone());
    records.push(TrajectoryRecord {
        component: k,
        input: partial.target_input.clone(),
        output: forced.clone(),
        config: config.value_for(k).clone(),
    });
    for id in (k + 1)..=graph.num_components() {
        if exec.active[id] {
            records.push(exec.run_component(id, config, noise)?);
        }
    }
    exec.finish(&partial.system_input, records, noise.trajectory_seed())
}
