//! Within-rollout edge-weight modulation.
//!
//! Hebbian fast weights: `e' = clip(lambda * e + eta * v_pre(t-1) * v_post(t), -c, c)`.
//!
//! Trace STDP: every neuron keeps a spike trace `a`. At step `t` the traces
//! first decay (`a(t-) = tau * a(t-1)`), then each plastic edge `p -> q`
//! moves by `A+ * a_p(t-) * spike_q(t) - A- * a_q(t-) * spike_p(t)`, and
//! finally the step's spikes are added to the traces.

use crate::params::ParameterSet;
use crate::topology::{NetworkTopology, NeuronModel};

/// Hyper- and meta-parameters of one plastic edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlasticityMeta {
    pub eta: f64,
    /// Retention factor in `[0, 1]`.
    pub lambda: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    pub trace_decay: f64,
    pub clip: f64,
}

impl Default for PlasticityMeta {
    fn default() -> Self {
        Self { eta: 0.01, lambda: 0.95, a_plus: 0.05, a_minus: 0.05, trace_decay: 0.8, clip: 5.0 }
    }
}

#[inline]
pub fn clip(x: f64, c: f64) -> f64 {
    x.clamp(-c, c)
}

/// Whether a pre-clip value lies strictly inside the clip bound, i.e.
/// whether gradient passes through the clip.
#[inline]
pub fn clip_passes(x: f64, c: f64) -> bool {
    x.abs() < c
}

/// Pre-clip Hebbian target; [`hebbian_update`] clips it.
#[inline]
pub fn hebbian_preclip(e_prev: f64, v_pre_prev: f64, v_post: f64, eta: f64, lambda: f64) -> f64 {
    lambda * e_prev + eta * v_pre_prev * v_post
}

pub fn hebbian_update(e_prev: f64, v_pre_prev: f64, v_post: f64, meta: &PlasticityMeta) -> f64 {
    clip(hebbian_preclip(e_prev, v_pre_prev, v_post, meta.eta, meta.lambda), meta.clip)
}

/// STDP weight change for one edge from pre-update (decayed) traces.
#[inline]
pub fn stdp_delta(
    decayed_pre: f64,
    decayed_post: f64,
    spike_pre: f64,
    spike_post: f64,
    meta: &PlasticityMeta,
) -> f64 {
    meta.a_plus * decayed_pre * spike_post - meta.a_minus * decayed_post * spike_pre
}

/// One STDP step for a single edge with its endpoint traces.
/// Returns `(e_new, trace_pre_new, trace_post_new)`.
pub fn stdp_update(
    e_prev: f64,
    spike_pre: f64,
    spike_post: f64,
    trace_pre: f64,
    trace_post: f64,
    meta: &PlasticityMeta,
) -> (f64, f64, f64) {
    let pre = meta.trace_decay * trace_pre;
    let post = meta.trace_decay * trace_post;
    let e = clip(e_prev + stdp_delta(pre, post, spike_pre, spike_post, meta), meta.clip);
    (e, pre + spike_pre, post + spike_post)
}

/// Plastic part of a rollout state.
#[derive(Clone, Debug, PartialEq)]
pub struct PlasticEdgeState {
    /// Current weight of each plastic edge, indexed by plastic slot.
    pub e: Vec<f64>,
    /// Spike trace per neuron. Only LIF neurons ever accumulate.
    pub traces: Vec<f64>,
}

/// Episode-start plastic state: weights back at `w0`, traces zeroed.
pub fn reset_plastic_state(topology: &NetworkTopology, params: &ParameterSet) -> PlasticEdgeState {
    PlasticEdgeState {
        e: topology.plastic_edges().iter().map(|&k| params.w0(k)).collect(),
        traces: vec![0.0; topology.len()],
    }
}

/// Whether neuron `id` carries an STDP trace.
pub fn tracks_spikes(topology: &NetworkTopology, id: usize) -> bool {
    matches!(topology.neuron(id).model, NeuronModel::Lif(_))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{
        EdgeSpec, LifParams, NeuronSpec, PlasticityRule, RateParams, Role, TopologyDraft,
    };
    use proptest::prelude::*;

    #[test]
    fn zero_eta_is_pure_decay() {
        let meta = PlasticityMeta { eta: 0.0, lambda: 0.5, ..Default::default() };
        assert_eq!(hebbian_update(0.8, 1.0, 1.0, &meta), 0.4);
        assert_eq!(hebbian_update(20.0, 1.0, 1.0, &meta), 5.0);
    }

    #[test]
    fn hebbian_scalar_case() {
        let meta = PlasticityMeta { eta: 0.1, lambda: 1.0, clip: 5.0, ..Default::default() };
        assert!((hebbian_update(0.2, 1.0, 1.0, &meta) - 0.3).abs() < 1e-15);
    }

    /// Drive a single pre/post pair through a spike schedule and return the
    /// weight after each step.
    fn run_pair(pre: &[f64], post: &[f64], meta: &PlasticityMeta) -> Vec<f64> {
        let (mut e, mut tp, mut tq) = (0.5, 0.0, 0.0);
        pre.iter()
            .zip(post)
            .map(|(&sp, &sq)| {
                (e, tp, tq) = stdp_update(e, sp, sq, tp, tq, meta);
                e
            })
            .collect()
    }

    #[test]
    fn ltp_pre_then_post() {
        let meta = PlasticityMeta::default();
        let w = run_pair(&[1.0, 0.0], &[0.0, 1.0], &meta);
        assert_eq!(w[0], 0.5);
        assert!((w[1] - 0.5 - meta.a_plus * meta.trace_decay).abs() < 1e-12);
    }

    #[test]
    fn ltd_post_then_pre() {
        let meta = PlasticityMeta::default();
        let w = run_pair(&[0.0, 1.0], &[1.0, 0.0], &meta);
        assert_eq!(w[0], 0.5);
        assert!((w[1] - 0.5 + meta.a_minus * meta.trace_decay).abs() < 1e-12);
    }

    #[test]
    fn silence_leaves_weight_and_drains_traces() {
        let meta = PlasticityMeta::default();
        let (mut e, mut tp, mut tq) = (0.3, 1.0, 2.0);
        for _ in 0..200 {
            (e, tp, tq) = stdp_update(e, 0.0, 0.0, tp, tq, &meta);
        }
        assert_eq!(e, 0.3);
        assert!(tp < 1e-15 && tq < 1e-15);
    }

    #[test]
    fn reset_uses_w0_and_is_idempotent() {
        let neurons = vec![
            NeuronSpec { id: 0, role: Role::Input, model: NeuronModel::Lif(LifParams::default()) },
            NeuronSpec { id: 1, role: Role::Output, model: NeuronModel::Lif(LifParams::default()) },
            NeuronSpec { id: 2, role: Role::Hidden, model: NeuronModel::Rate(RateParams::default()) },
        ];
        let edges = vec![
            EdgeSpec::plastic(0, 1, 0.7, PlasticityRule::Stdp),
            EdgeSpec::fixed(0, 2, 0.1),
            EdgeSpec::plastic(2, 1, -0.4, PlasticityRule::Hebbian),
        ];
        let t = TopologyDraft::new(neurons, edges).build().unwrap();
        let p = ParameterSet::from_topology(&t);
        let a = reset_plastic_state(&t, &p);
        assert_eq!(a.e, vec![0.7, -0.4]);
        assert_eq!(a.traces, vec![0.0; 3]);
        assert_eq!(a, reset_plastic_state(&t, &p));
        assert!(tracks_spikes(&t, 0) && !tracks_spikes(&t, 2));
    }

    proptest! {
        #[test]
        fn hebbian_respects_clip(e in -10.0f64..10.0, a in -1.0f64..1.0, b in -1.0f64..1.0,
                                 eta in -5.0f64..5.0, lambda in 0.0f64..1.0, c in 0.1f64..5.0) {
            let meta = PlasticityMeta { eta, lambda, clip: c, ..Default::default() };
            prop_assert!(hebbian_update(e, a, b, &meta).abs() <= c);
        }

        #[test]
        fn hebbian_commutes_with_permutation(
            rows in proptest::collection::vec((-2.0f64..2.0, -1.0f64..1.0, -1.0f64..1.0), 1..20),
            rot in 0usize..20,
        ) {
            let meta = PlasticityMeta { eta: 0.3, lambda: 0.9, ..Default::default() };
            let apply = |rs: &[(f64, f64, f64)]| -> Vec<f64> {
                rs.iter().map(|&(e, a, b)| hebbian_update(e, a, b, &meta)).collect()
            };
            let mut permuted = rows.clone();
            let r = rot % rows.len();
            permuted.rotate_left(r);
            let mut expected = apply(&rows);
            expected.rotate_left(r);
            prop_assert_eq!(apply(&permuted), expected);
        }

        #[test]
        fn stdp_signs(gap in 1usize..4, a_plus in 0.01f64..1.0, a_minus in 0.01f64..1.0, tau in 0.1f64..0.95) {
            let meta = PlasticityMeta { a_plus, a_minus, trace_decay: tau, ..Default::default() };
            let n = gap + 1;
            let mut pre = vec![0.0; n];
            let mut post = vec![0.0; n];
            pre[0] = 1.0;
            post[gap] = 1.0;
            let w = run_pair(&pre, &post, &meta);
            prop_assert!(w[gap] > w[gap - 1]);
            let w = run_pair(&post, &pre, &meta);
            prop_assert!(w[gap] < w[gap - 1]);
        }

        #[test]
        fn traces_bounded(spikes in proptest::collection::vec(0u8..2, 1..200), tau in 0.05f64..0.95) {
            let meta = PlasticityMeta { trace_decay: tau, ..Default::default() };
            let (mut e, mut tp, mut tq) = (0.0, 0.0, 0.0);
            for &s in &spikes {
                (e, tp, tq) = stdp_update(e, s as f64, 0.0, tp, tq, &meta);
                prop_assert!(tp >= 0.0 && tp <= 1.0 / (1.0 - tau) + 1e-12);
                prop_assert!(tq == 0.0);
            }
            let _ = e;
        }
    }
}
