//! Flat trainable parameter vector with a segment registry.
//!
//! Layout, in order: one initial weight per edge, one self-state coefficient
//! and one bias per non-input rate neuron, then one learning rate and one
//! unconstrained retention logit per Hebbian edge. The retention factor is
//! `sigmoid(raw)`.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::topology::{NetworkTopology, NeuronModel, PlasticityRule, Role};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    EdgeWeight,
    SelfWeight,
    Bias,
    Eta,
    LambdaRaw,
}

impl SegmentKind {
    pub const ALL: [SegmentKind; 5] = [
        SegmentKind::EdgeWeight,
        SegmentKind::SelfWeight,
        SegmentKind::Bias,
        SegmentKind::Eta,
        SegmentKind::LambdaRaw,
    ];
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SegmentKind::EdgeWeight => "edge_weight",
            SegmentKind::SelfWeight => "self_weight",
            SegmentKind::Bias => "bias",
            SegmentKind::Eta => "eta",
            SegmentKind::LambdaRaw => "lambda_raw",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterLayout {
    segments: [Range<usize>; 5],
    rate_slot: Vec<Option<usize>>,
    hebb_slot: Vec<Option<usize>>,
}

impl ParameterLayout {
    pub fn new(topology: &NetworkTopology) -> Self {
        let mut rate_slot = vec![None; topology.len()];
        let mut n_rate = 0;
        for spec in topology.neurons() {
            if spec.role != Role::Input && matches!(spec.model, NeuronModel::Rate(_)) {
                rate_slot[spec.id] = Some(n_rate);
                n_rate += 1;
            }
        }
        let mut hebb_slot = vec![None; topology.plastic_edges().len()];
        let mut n_hebb = 0;
        for (slot, &k) in topology.plastic_edges().iter().enumerate() {
            if topology.edges()[k].rule == PlasticityRule::Hebbian {
                hebb_slot[slot] = Some(n_hebb);
                n_hebb += 1;
            }
        }
        let sizes = [topology.edges().len(), n_rate, n_rate, n_hebb, n_hebb];
        let mut start = 0;
        let segments = sizes.map(|len| {
            let r = start..start + len;
            start += len;
            r
        });
        Self { segments, rate_slot, hebb_slot }
    }

    pub fn len(&self) -> usize {
        self.segments[4].end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn segment(&self, kind: SegmentKind) -> Range<usize> {
        self.segments[kind as usize].clone()
    }

    /// Segment containing flat index `i`.
    pub fn kind_of(&self, i: usize) -> SegmentKind {
        SegmentKind::ALL
            .into_iter()
            .find(|&k| self.segment(k).contains(&i))
            .expect("index inside layout")
    }

    pub fn edge_weight(&self, edge: usize) -> usize {
        self.segments[0].start + edge
    }

    pub fn self_weight(&self, neuron: usize) -> Option<usize> {
        self.rate_slot[neuron].map(|s| self.segments[1].start + s)
    }

    pub fn bias(&self, neuron: usize) -> Option<usize> {
        self.rate_slot[neuron].map(|s| self.segments[2].start + s)
    }

    /// Index of `eta` for the edge in plastic slot `slot`, if Hebbian.
    pub fn eta(&self, slot: usize) -> Option<usize> {
        self.hebb_slot[slot].map(|h| self.segments[3].start + h)
    }

    pub fn lambda_raw(&self, slot: usize) -> Option<usize> {
        self.hebb_slot[slot].map(|h| self.segments[4].start + h)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// All trainable scalars of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    layout: ParameterLayout,
    values: Vec<f64>,
    frozen: Vec<SegmentKind>,
}

impl ParameterSet {
    /// Initial values read from the topology: edge `w0`, rate-neuron `w_s`
    /// and `b`, and the network-wide `eta`/`lambda` initializers.
    pub fn from_topology(topology: &NetworkTopology) -> Self {
        let layout = ParameterLayout::new(topology);
        let mut values = vec![0.0; layout.len()];
        for (k, e) in topology.edges().iter().enumerate() {
            values[layout.edge_weight(k)] = e.w0;
        }
        for spec in topology.neurons() {
            if let (Some(i), NeuronModel::Rate(p)) = (layout.self_weight(spec.id), &spec.model) {
                values[i] = p.w_s;
                values[layout.bias(spec.id).expect("rate slot")] = p.b;
            }
        }
        let pc = topology.plasticity();
        for slot in 0..topology.plastic_edges().len() {
            if let Some(i) = layout.eta(slot) {
                values[i] = pc.eta_init;
                values[layout.lambda_raw(slot).expect("hebb slot")] = logit(pc.lambda_init);
            }
        }
        Self { layout, values, frozen: Vec::new() }
    }

    /// Rebuild from stored values; `None` when the count does not match.
    pub fn from_values(topology: &NetworkTopology, values: Vec<f64>) -> Option<Self> {
        let layout = ParameterLayout::new(topology);
        (values.len() == layout.len()).then_some(Self { layout, values, frozen: Vec::new() })
    }

    pub fn layout(&self) -> &ParameterLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn frozen(&self) -> &[SegmentKind] {
        &self.frozen
    }

    pub fn set_frozen(&mut self, kinds: &[SegmentKind]) {
        self.frozen = kinds.to_vec();
        self.frozen.sort();
        self.frozen.dedup();
    }

    pub fn is_frozen(&self, kind: SegmentKind) -> bool {
        self.frozen.contains(&kind)
    }

    /// Zero every entry of `grad` that belongs to a frozen segment.
    pub fn mask_frozen(&self, grad: &mut [f64]) {
        for &kind in &self.frozen {
            grad[self.layout.segment(kind)].fill(0.0);
        }
    }

    pub fn w0(&self, edge: usize) -> f64 {
        self.values[self.layout.edge_weight(edge)]
    }

    pub fn self_weight(&self, neuron: usize) -> f64 {
        self.layout.self_weight(neuron).map_or(0.0, |i| self.values[i])
    }

    pub fn bias(&self, neuron: usize) -> f64 {
        self.layout.bias(neuron).map_or(0.0, |i| self.values[i])
    }

    pub fn eta(&self, slot: usize) -> f64 {
        self.layout.eta(slot).map_or(0.0, |i| self.values[i])
    }

    /// Retention factor, squashed into `[0, 1]`.
    pub fn lambda(&self, slot: usize) -> f64 {
        self.layout.lambda_raw(slot).map_or(1.0, |i| sigmoid(self.values[i]))
    }

    /// The topology with trained `w0`, `w_s` and `b` written back.
    pub fn apply_to(&self, topology: &NetworkTopology) -> NetworkTopology {
        let w0: Vec<f64> = (0..topology.edges().len()).map(|k| self.w0(k)).collect();
        let mut draft = topology.with_weights(&w0).to_draft();
        for spec in &mut draft.neurons {
            if let NeuronModel::Rate(p) = &mut spec.model {
                if self.layout.self_weight(spec.id).is_some() {
                    p.w_s = self.self_weight(spec.id);
                    p.b = self.bias(spec.id);
                }
            }
        }
        draft.build().expect("trained parameters keep the topology valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{build_random, RandomTopologySpec};

    #[test]
    fn registry_partitions_the_vector() {
        let t = build_random(&RandomTopologySpec { n_hidden: 6, ..Default::default() }).unwrap();
        let p = ParameterSet::from_topology(&t);
        let l = p.layout();
        let mut covered = vec![0u8; l.len()];
        for kind in SegmentKind::ALL {
            for i in l.segment(kind) {
                covered[i] += 1;
                assert_eq!(l.kind_of(i), kind);
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
        assert_eq!(l.segment(SegmentKind::EdgeWeight).len(), t.edges().len());
        assert_eq!(l.segment(SegmentKind::SelfWeight).len(), 7);
        assert_eq!(l.segment(SegmentKind::Eta).len(), t.plastic_edges().len());
    }

    #[test]
    fn lambda_is_squashed() {
        let t = build_random(&RandomTopologySpec { n_hidden: 4, density: 1.0, ..Default::default() })
            .unwrap();
        let mut p = ParameterSet::from_topology(&t);
        assert!((p.lambda(0) - 0.95).abs() < 1e-12);
        let i = p.layout().lambda_raw(0).unwrap();
        p.values_mut()[i] = 1e6;
        assert!(p.lambda(0) <= 1.0);
        p.values_mut()[i] = -1e6;
        assert!(p.lambda(0) >= 0.0);
    }

    #[test]
    fn frozen_segments_are_masked() {
        let t = build_random(&RandomTopologySpec::default()).unwrap();
        let mut p = ParameterSet::from_topology(&t);
        p.set_frozen(&[SegmentKind::Bias, SegmentKind::Eta]);
        let mut g = vec![1.0; p.len()];
        p.mask_frozen(&mut g);
        for (i, &gi) in g.iter().enumerate() {
            let k = p.layout().kind_of(i);
            assert_eq!(gi == 0.0, k == SegmentKind::Bias || k == SegmentKind::Eta);
        }
    }

    #[test]
    fn apply_round_trips_through_topology() {
        let t = build_random(&RandomTopologySpec::default()).unwrap();
        let mut p = ParameterSet::from_topology(&t);
        for v in p.values_mut() {
            *v += 0.125;
        }
        let t2 = p.apply_to(&t);
        let p2 = ParameterSet::from_topology(&t2);
        let edge_and_rate = p.layout().segment(SegmentKind::Bias).end;
        assert_eq!(&p.values()[..edge_and_rate], &p2.values()[..edge_and_rate]);
    }
}
