//! Per-step state dumps for debugging.
//!
//! Columns: `t,kind,id,s,v,e`. Every step writes one `neuron` row per
//! neuron; every `edge_stride` steps it also writes one `edge` row per
//! plastic edge (`id` is the edge index in the topology).

use std::io::Write;

use thiserror::Error;

use crate::engine::{Engine, EngineError};

pub const PROBE_HEADER: &str = "t,kind,id,s,v,e";

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Roll out `xs` from a fresh state, streaming the trace to `out`.
/// `edge_stride = 0` omits edge rows. Returns the output sequence.
pub fn probe_rollout(
    engine: &Engine<'_>,
    xs: &[Vec<f64>],
    edge_stride: usize,
    mut out: impl Write,
) -> Result<Vec<Vec<f64>>, ProbeError> {
    let topology = engine.topology();
    let mut state = engine.initial_state();
    writeln!(out, "{PROBE_HEADER}")?;
    let mut ys = Vec::with_capacity(xs.len());
    for x in xs {
        ys.push(engine.step(&mut state, x)?.y);
        let t = state.t;
        for id in 0..topology.len() {
            writeln!(out, "{t},neuron,{id},{},{},", state.s[id], state.v[id])?;
        }
        if edge_stride > 0 && t.is_multiple_of(edge_stride) {
            for (slot, &k) in topology.plastic_edges().iter().enumerate() {
                writeln!(out, "{t},edge,{k},,,{}", state.plastic.e[slot])?;
            }
        }
    }
    out.flush()?;
    Ok(ys)
}

/// Steps at which neuron `id` emitted `v = 1` in a probe trace.
pub fn spike_steps(trace: &str, id: usize) -> Vec<usize> {
    trace
        .lines()
        .skip(1)
        .filter_map(|line| {
            let cols: Vec<&str> = line.split(',').collect();
            let hit = cols.get(1) == Some(&"neuron")
                && cols.get(2).and_then(|c| c.parse::<usize>().ok()) == Some(id)
                && cols.get(4).and_then(|c| c.parse::<f64>().ok()) == Some(1.0);
            hit.then(|| cols[0].parse().ok()).flatten()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParameterSet;
    use crate::topology::{build_random, ModelTag, RandomTopologySpec};

    #[test]
    fn trace_has_expected_rows() {
        let spec = RandomTopologySpec { n_hidden: 3, density: 1.0, ..Default::default() };
        let t = build_random(&spec).unwrap();
        let p = ParameterSet::from_topology(&t);
        let engine = Engine::new(&t, &p);
        let mut buf = Vec::new();
        let xs = vec![vec![1.0, 0.0]; 4];
        let ys = probe_rollout(&engine, &xs, 2, &mut buf).unwrap();
        assert_eq!(ys, crate::engine::rollout(&t, &p, &xs).unwrap());
        let text = String::from_utf8(buf).unwrap();
        let neuron_rows = text.lines().filter(|l| l.contains(",neuron,")).count();
        let edge_rows = text.lines().filter(|l| l.contains(",edge,")).count();
        assert_eq!(neuron_rows, 4 * t.len());
        assert_eq!(edge_rows, 2 * t.plastic_edges().len());
    }

    #[test]
    fn spikes_are_recovered() {
        let spec = RandomTopologySpec { n_hidden: 2, model: ModelTag::Lif, ..Default::default() };
        let t = build_random(&spec).unwrap();
        let p = ParameterSet::from_topology(&t);
        let engine = Engine::new(&t, &p);
        let mut buf = Vec::new();
        probe_rollout(&engine, &[vec![1.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0]], 0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(spike_steps(&text, 0), vec![1, 3]);
        assert_eq!(spike_steps(&text, 1), vec![3]);
    }
}
