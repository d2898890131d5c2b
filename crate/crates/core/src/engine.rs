//! Synchronous network execution.
//!
//! Every edge carries a one-step delay. Step `t` proceeds as:
//!
//! 1. clamp inputs: `v_i(t) = x_i(t)`
//! 2. gather: `u_q(t) = sum_{p->q} e_pq(t-1) * v_p(t-1)` for every non-input `q`
//! 3. neuron update from `(u_q(t), s_q(t-1))`
//! 4. plastic edges update to `e(t)`
//!
//! The gather reads pre-update weights, so a step depends only on the
//! previous state and the current stimulus.

use std::fmt;

use thiserror::Error;

use crate::dynamics::{lif_step, rate_step, NonFinite};
use crate::params::ParameterSet;
use crate::plasticity::{
    clip, hebbian_preclip, reset_plastic_state, stdp_delta, PlasticEdgeState, PlasticityMeta,
};
use crate::topology::{LifParams, NetworkTopology, NeuronModel, PlasticityRule, Role};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    Neuron(usize),
    Edge(usize),
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Neuron(i) => write!(f, "neuron {i}"),
            Location::Edge(k) => write!(f, "edge {k}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum EngineError {
    #[error("t={t}: stimulus has {found} channels, network has {expected} inputs")]
    Dimension { t: usize, expected: usize, found: usize },
    #[error("t={t}: {location}: {source}")]
    NonFinite {
        t: usize,
        location: Location,
        #[source]
        source: NonFinite,
    },
}

/// Per-rollout mutable state: `(s(t), v(t), e(t), traces(t))` at timestamp `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutState {
    pub s: Vec<f64>,
    /// Outputs of the last step, read by the next gather.
    pub v: Vec<f64>,
    pub plastic: PlasticEdgeState,
    pub t: usize,
}

impl RolloutState {
    /// Episode-start state: neurons at rest, silent, plastic weights at `w0`.
    pub fn initial(topology: &NetworkTopology, params: &ParameterSet) -> Self {
        Self {
            s: topology.neurons().iter().map(|n| n.model.resting_state()).collect(),
            v: vec![0.0; topology.len()],
            plastic: reset_plastic_state(topology, params),
            t: 0,
        }
    }

    /// State for the next episode: neurons reset, plastic weights kept only
    /// when the topology asks for cross-episode persistence.
    pub fn next_episode(&self, topology: &NetworkTopology, params: &ParameterSet) -> Self {
        let mut fresh = Self::initial(topology, params);
        if topology.plasticity().persist_across_episodes {
            fresh.plastic.e = self.plastic.e.clone();
        }
        fresh
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    /// Output-neuron values in topology id order.
    pub y: Vec<f64>,
    /// Full `v(t)`, when requested.
    pub probe: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Cell {
    Input(usize),
    Rate { w_s: f64, b: f64 },
    Lif(LifParams),
}

#[derive(Clone, Copy, Debug)]
pub(crate) enum Plastic {
    Hebbian { eta: f64, lambda: f64 },
    Stdp,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct PlasticEdge {
    pub edge: usize,
    pub src: usize,
    pub dst: usize,
    pub kind: Plastic,
}

/// Temporaries of one step, kept so a tape can record them.
#[derive(Clone, Debug, Default)]
pub(crate) struct Scratch {
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub s_pre: Vec<f64>,
    pub v_next: Vec<f64>,
    pub preclip: Vec<f64>,
}

/// A topology bound to a parameter set, ready to step.
pub struct Engine<'a> {
    topology: &'a NetworkTopology,
    params: &'a ParameterSet,
    pub(crate) cells: Vec<Cell>,
    pub(crate) plastic: Vec<PlasticEdge>,
    pub(crate) stdp: PlasticityMeta,
    pub(crate) lif_ids: Vec<usize>,
    static_w: Vec<f64>,
}

impl<'a> Engine<'a> {
    pub fn new(topology: &'a NetworkTopology, params: &'a ParameterSet) -> Self {
        let mut input_index = 0;
        let cells = topology
            .neurons()
            .iter()
            .map(|spec| match (spec.role, &spec.model) {
                (Role::Input, _) => {
                    input_index += 1;
                    Cell::Input(input_index - 1)
                }
                (_, NeuronModel::Rate(_)) => Cell::Rate {
                    w_s: params.self_weight(spec.id),
                    b: params.bias(spec.id),
                },
                (_, NeuronModel::Lif(p)) => Cell::Lif(*p),
            })
            .collect();
        let plastic = topology
            .plastic_edges()
            .iter()
            .enumerate()
            .map(|(slot, &k)| {
                let e = &topology.edges()[k];
                let kind = match e.rule {
                    PlasticityRule::Stdp => Plastic::Stdp,
                    _ => Plastic::Hebbian { eta: params.eta(slot), lambda: params.lambda(slot) },
                };
                PlasticEdge { edge: k, src: e.src, dst: e.dst, kind }
            })
            .collect();
        let pc = topology.plasticity();
        let stdp = PlasticityMeta {
            eta: 0.0,
            lambda: 1.0,
            a_plus: pc.a_plus,
            a_minus: pc.a_minus,
            trace_decay: pc.trace_decay,
            clip: pc.clip,
        };
        let lif_ids = topology
            .neurons()
            .iter()
            .filter(|n| matches!(n.model, NeuronModel::Lif(_)))
            .map(|n| n.id)
            .collect();
        let static_w = (0..topology.edges().len()).map(|k| params.w0(k)).collect();
        Self { topology, params, cells, plastic, stdp, lif_ids, static_w }
    }

    pub fn topology(&self) -> &'a NetworkTopology {
        self.topology
    }

    pub fn params(&self) -> &'a ParameterSet {
        self.params
    }

    pub fn initial_state(&self) -> RolloutState {
        RolloutState::initial(self.topology, self.params)
    }

    pub(crate) fn scratch(&self) -> Scratch {
        let n = self.topology.len();
        Scratch {
            w: self.static_w.clone(),
            u: vec![0.0; n],
            s_pre: vec![0.0; n],
            v_next: vec![0.0; n],
            preclip: vec![0.0; self.plastic.len()],
        }
    }

    /// Advance `state` by one step. After return, `scratch` holds the
    /// step's gathered drive, pre-reset potentials, and pre-clip weights.
    pub(crate) fn advance(
        &self,
        state: &mut RolloutState,
        x: &[f64],
        scratch: &mut Scratch,
    ) -> Result<(), EngineError> {
        let t = state.t + 1;
        let inputs = self.topology.inputs();
        if x.len() != inputs.len() {
            return Err(EngineError::Dimension { t, expected: inputs.len(), found: x.len() });
        }
        let located = |location, source| EngineError::NonFinite { t, location, source };

        for (p, &k) in self.plastic.iter().zip(&state.plastic.e) {
            scratch.w[p.edge] = k;
        }

        for (q, cell) in self.cells.iter().enumerate() {
            if let Cell::Input(j) = *cell {
                let xj = x[j];
                if !xj.is_finite() {
                    let err = NonFinite { quantity: "stimulus", value: xj };
                    return Err(located(Location::Neuron(q), err));
                }
                scratch.u[q] = 0.0;
                scratch.s_pre[q] = 0.0;
                scratch.v_next[q] = xj;
                state.s[q] = 0.0;
                continue;
            }
            let mut u = 0.0;
            for &k in self.topology.incoming(q) {
                u += scratch.w[k] * state.v[self.topology.edges()[k].src];
            }
            scratch.u[q] = u;
            match cell {
                Cell::Rate { w_s, b } => {
                    let r = rate_step(u, state.s[q], *w_s, *b)
                        .map_err(|e| located(Location::Neuron(q), e))?;
                    scratch.s_pre[q] = r.s;
                    scratch.v_next[q] = r.v;
                    state.s[q] = r.s;
                }
                Cell::Lif(p) => {
                    let r = lif_step(u, state.s[q], p)
                        .map_err(|e| located(Location::Neuron(q), e))?;
                    scratch.s_pre[q] = r.s_pre;
                    scratch.v_next[q] = r.v;
                    state.s[q] = r.s;
                }
                Cell::Input(_) => unreachable!(),
            }
        }

        let c = self.stdp.clip;
        let tau = self.stdp.trace_decay;
        for (slot, p) in self.plastic.iter().enumerate() {
            let e_prev = state.plastic.e[slot];
            let pre = match p.kind {
                Plastic::Hebbian { eta, lambda } => {
                    hebbian_preclip(e_prev, state.v[p.src], scratch.v_next[p.dst], eta, lambda)
                }
                Plastic::Stdp => {
                    let traces = &state.plastic.traces;
                    e_prev
                        + stdp_delta(
                            tau * traces[p.src],
                            tau * traces[p.dst],
                            scratch.v_next[p.src],
                            scratch.v_next[p.dst],
                            &self.stdp,
                        )
                }
            };
            if !pre.is_finite() {
                let err = NonFinite { quantity: "edge weight", value: pre };
                return Err(located(Location::Edge(p.edge), err));
            }
            scratch.preclip[slot] = pre;
            state.plastic.e[slot] = clip(pre, c);
        }
        for &i in &self.lif_ids {
            state.plastic.traces[i] = tau * state.plastic.traces[i] + scratch.v_next[i];
        }

        std::mem::swap(&mut state.v, &mut scratch.v_next);
        state.t = t;
        Ok(())
    }

    pub fn outputs(&self, state: &RolloutState) -> Vec<f64> {
        self.topology.outputs().iter().map(|&o| state.v[o]).collect()
    }

    pub fn step(&self, state: &mut RolloutState, x: &[f64]) -> Result<StepResult, EngineError> {
        let mut scratch = self.scratch();
        self.advance(state, x, &mut scratch)?;
        Ok(StepResult { y: self.outputs(state), probe: None })
    }

    /// Like [`Engine::step`] but also returns the full `v(t)`.
    pub fn step_probed(
        &self,
        state: &mut RolloutState,
        x: &[f64],
    ) -> Result<StepResult, EngineError> {
        let mut r = self.step(state, x)?;
        r.probe = Some(state.v.clone());
        Ok(r)
    }

    /// Fold [`Engine::step`] over a stimulus sequence, returning `y(1..T)`.
    pub fn rollout(
        &self,
        state: &mut RolloutState,
        xs: &[Vec<f64>],
    ) -> Result<Vec<Vec<f64>>, EngineError> {
        let mut scratch = self.scratch();
        let mut ys = Vec::with_capacity(xs.len());
        for x in xs {
            self.advance(state, x, &mut scratch)?;
            ys.push(self.outputs(state));
        }
        Ok(ys)
    }
}

/// Rollout from a fresh episode state.
pub fn rollout(
    topology: &NetworkTopology,
    params: &ParameterSet,
    xs: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>, EngineError> {
    let engine = Engine::new(topology, params);
    let mut state = engine.initial_state();
    engine.rollout(&mut state, xs)
}

/// Naive interpreter with the same contract as [`Engine::rollout`]: scans
/// the whole edge list for every neuron, keeps all weights in one per-edge
/// array, and inlines every update rule. Used as a correctness oracle.
pub fn reference_rollout(
    topology: &NetworkTopology,
    params: &ParameterSet,
    state0: &RolloutState,
    xs: &[Vec<f64>],
) -> Result<(Vec<Vec<f64>>, RolloutState), EngineError> {
    let n = topology.len();
    let edges = topology.edges();
    let pc = topology.plasticity();

    let mut weight: Vec<f64> = (0..edges.len()).map(|k| params.w0(k)).collect();
    for (slot, &k) in topology.plastic_edges().iter().enumerate() {
        weight[k] = state0.plastic.e[slot];
    }
    let mut s = state0.s.clone();
    let mut v = state0.v.clone();
    let mut trace = state0.plastic.traces.clone();
    let mut t = state0.t;
    let mut ys = Vec::new();

    for x in xs {
        t += 1;
        let bad = |location, quantity, value| EngineError::NonFinite {
            t,
            location,
            source: NonFinite { quantity, value },
        };
        let n_in = topology.neurons().iter().filter(|c| c.role == Role::Input).count();
        if x.len() != n_in {
            return Err(EngineError::Dimension { t, expected: n_in, found: x.len() });
        }
        let mut v_new = vec![0.0; n];
        let mut next_input = 0;
        for q in 0..n {
            let spec = topology.neuron(q);
            if spec.role == Role::Input {
                let value = x[next_input];
                next_input += 1;
                if !value.is_finite() {
                    return Err(bad(Location::Neuron(q), "stimulus", value));
                }
                v_new[q] = value;
                s[q] = 0.0;
                continue;
            }
            let mut u = 0.0;
            for (k, e) in edges.iter().enumerate() {
                if e.dst == q {
                    u += weight[k] * v[e.src];
                }
            }
            if !u.is_finite() {
                return Err(bad(Location::Neuron(q), "drive", u));
            }
            match &spec.model {
                NeuronModel::Rate(_) => {
                    let z = u + params.self_weight(q) * s[q] + params.bias(q);
                    s[q] = z.tanh();
                    v_new[q] = s[q];
                }
                NeuronModel::Lif(p) => {
                    let pre = s[q] + p.dt * (p.s_rest - s[q] + u);
                    if pre >= p.theta {
                        v_new[q] = 1.0;
                        s[q] = p.s_reset;
                    } else {
                        v_new[q] = 0.0;
                        s[q] = pre;
                    }
                }
            }
            if !s[q].is_finite() {
                return Err(bad(Location::Neuron(q), "state", s[q]));
            }
        }

        for (slot, &k) in topology.plastic_edges().iter().enumerate() {
            let e = &edges[k];
            let target = if e.rule == PlasticityRule::Hebbian {
                params.lambda(slot) * weight[k] + params.eta(slot) * v[e.src] * v_new[e.dst]
            } else {
                let pre_trace = pc.trace_decay * trace[e.src];
                let post_trace = pc.trace_decay * trace[e.dst];
                let delta = pc.a_plus * pre_trace * v_new[e.dst]
                    - pc.a_minus * post_trace * v_new[e.src];
                weight[k] + delta
            };
            if !target.is_finite() {
                return Err(bad(Location::Edge(k), "edge weight", target));
            }
            weight[k] = target.max(-pc.clip).min(pc.clip);
        }
        for q in 0..n {
            if matches!(topology.neuron(q).model, NeuronModel::Lif(_)) {
                trace[q] = pc.trace_decay * trace[q] + v_new[q];
            }
        }

        v = v_new;
        ys.push(topology.outputs().iter().map(|&o| v[o]).collect());
    }

    let state = RolloutState {
        s,
        v,
        plastic: PlasticEdgeState {
            e: topology.plastic_edges().iter().map(|&k| weight[k]).collect(),
            traces: trace,
        },
        t,
    };
    Ok((ys, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{
        build_random, EdgeSpec, LifParams, NeuronSpec, RandomTopologySpec, RateParams, TopologyDraft,
    };

    fn rate(id: usize, role: Role, b: f64) -> NeuronSpec {
        NeuronSpec { id, role, model: NeuronModel::Rate(RateParams { b, ..Default::default() }) }
    }

    fn chain() -> NetworkTopology {
        TopologyDraft::new(
            vec![rate(0, Role::Input, 0.0), rate(1, Role::Output, 0.0)],
            vec![EdgeSpec::fixed(0, 1, 1.0)],
        )
        .build()
        .unwrap()
    }

    #[test]
    fn chain_exposes_one_step_delay() {
        let t = chain();
        let p = ParameterSet::from_topology(&t);
        let ys = rollout(&t, &p, &[vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(ys[0], vec![0.0]);
        assert_eq!(ys[1], vec![1.0f64.tanh()]);
    }

    #[test]
    fn zero_weights_emit_bias_response() {
        let t = TopologyDraft::new(
            vec![rate(0, Role::Input, 0.0), rate(1, Role::Output, 0.3), rate(2, Role::Output, -0.2)],
            vec![EdgeSpec::fixed(0, 1, 0.0), EdgeSpec::fixed(0, 2, 0.0)],
        )
        .build()
        .unwrap();
        let p = ParameterSet::from_topology(&t);
        let ys = rollout(&t, &p, &[vec![5.0], vec![-3.0]]).unwrap();
        for y in ys {
            assert_eq!(y, vec![0.3f64.tanh(), (-0.2f64).tanh()]);
        }
    }

    #[test]
    fn empty_rollout() {
        let t = chain();
        let p = ParameterSet::from_topology(&t);
        assert!(rollout(&t, &p, &[]).unwrap().is_empty());
    }

    #[test]
    fn dimension_mismatch_is_located() {
        let t = chain();
        let p = ParameterSet::from_topology(&t);
        let err = rollout(&t, &p, &[vec![1.0], vec![1.0, 2.0]]).unwrap_err();
        assert_eq!(err, EngineError::Dimension { t: 2, expected: 1, found: 2 });
    }

    #[test]
    fn non_finite_is_located() {
        let t = chain();
        let p = ParameterSet::from_topology(&t);
        let err = rollout(&t, &p, &[vec![1.0], vec![f64::NAN]]).unwrap_err();
        assert!(matches!(err, EngineError::NonFinite { t: 2, location: Location::Neuron(0), .. }));

        let mut p = ParameterSet::from_topology(&t);
        p.values_mut()[0] = f64::INFINITY;
        let err = rollout(&t, &p, &[vec![1.0], vec![1.0]]).unwrap_err();
        // inf * 0 already poisons the drive at the first step.
        assert!(matches!(err, EngineError::NonFinite { t: 1, location: Location::Neuron(1), .. }));
    }

    #[test]
    fn self_loop_matches_closed_form() {
        // s(t) = tanh(w * s(t-1) + b) with the self-loop edge and w_s = 0.
        let t = TopologyDraft::new(
            vec![rate(0, Role::Input, 0.0), rate(1, Role::Output, 0.2)],
            vec![EdgeSpec::fixed(0, 1, 0.0), EdgeSpec::fixed(1, 1, 0.9)],
        )
        .build()
        .unwrap();
        let p = ParameterSet::from_topology(&t);
        let ys = rollout(&t, &p, &vec![vec![0.0]; 30]).unwrap();
        let mut s = 0.0f64;
        for y in ys {
            s = (0.9 * s + 0.2).tanh();
            assert_eq!(y[0], s);
        }
    }

    #[test]
    fn matches_reference_on_random_nets() {
        for seed in 0..20 {
            let spec = RandomTopologySpec { n_hidden: 6, density: 0.5, seed, ..Default::default() };
            let t = build_random(&spec).unwrap();
            let p = ParameterSet::from_topology(&t);
            let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![(i as f64).sin(), (i as f64).cos()]).collect();
            let engine = Engine::new(&t, &p);
            let mut state = engine.initial_state();
            let ys = engine.rollout(&mut state, &xs).unwrap();
            let (ref_ys, ref_state) = reference_rollout(&t, &p, &engine.initial_state(), &xs).unwrap();
            assert_eq!(ys, ref_ys);
            assert_eq!(state, ref_state);
        }
    }

    #[test]
    fn lif_pair_under_tonic_drive() {
        let lif = |id, role| NeuronSpec { id, role, model: NeuronModel::Lif(LifParams::default()) };
        let t = TopologyDraft::new(
            vec![lif(0, Role::Input), lif(1, Role::Hidden), lif(2, Role::Output)],
            vec![
                EdgeSpec::fixed(0, 1, 2.5),
                EdgeSpec::fixed(1, 2, 3.0),
                EdgeSpec::fixed(2, 1, 3.0),
            ],
        )
        .build()
        .unwrap();
        let p = ParameterSet::from_topology(&t);
        let engine = Engine::new(&t, &p);
        let mut state = engine.initial_state();
        let ys = engine.rollout(&mut state, &vec![vec![1.0]; 50]).unwrap();
        assert!(ys.iter().all(|y| y[0] == 0.0 || y[0] == 1.0));
        assert!(ys.iter().any(|y| y[0] == 1.0));
        let (ref_ys, _) = reference_rollout(&t, &p, &engine.initial_state(), &vec![vec![1.0]; 50]).unwrap();
        assert_eq!(ys, ref_ys);
    }

    #[test]
    fn next_episode_respects_persistence() {
        let spec = RandomTopologySpec { n_hidden: 4, density: 1.0, ..Default::default() };
        let mut t = build_random(&spec).unwrap();
        let p = ParameterSet::from_topology(&t);
        let engine = Engine::new(&t, &p);
        let mut state = engine.initial_state();
        engine.rollout(&mut state, &vec![vec![1.0, 1.0]; 5]).unwrap();
        let fresh = state.next_episode(&t, &p);
        assert_eq!(fresh, engine.initial_state());

        let mut draft = t.to_draft();
        draft.plasticity.persist_across_episodes = true;
        t = draft.build().unwrap();
        let carried = state.next_episode(&t, &p);
        assert_eq!(carried.plastic.e, state.plastic.e);
        assert_eq!(carried.t, 0);
    }
}
