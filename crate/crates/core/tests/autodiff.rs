use proptest::prelude::*;
use snn_core::autodiff::{full_bptt, sequence_loss, tbptt_gradients, LossKind};
use snn_core::datasets::pavlov::{gen_pavlov, PavlovConfig};
use snn_core::params::{sigmoid, ParameterSet};
use snn_core::topology::{
    EdgeSpec, NetworkTopology, NeuronModel, NeuronSpec, PlasticityRule, RateParams, Role,
    TopologyDraft,
};

/// Food and bell inputs, one hidden cell, one salivation output. Both bell
/// edges are Hebbian.
fn pavlov_net() -> NetworkTopology {
    let rate = |id, role| NeuronSpec { id, role, model: NeuronModel::Rate(RateParams::default()) };
    TopologyDraft::new(
        vec![rate(0, Role::Input), rate(1, Role::Input), rate(2, Role::Hidden), rate(3, Role::Output)],
        vec![
            EdgeSpec::fixed(0, 2, 0.4),
            EdgeSpec::plastic(1, 2, 0.1, PlasticityRule::Hebbian),
            EdgeSpec::fixed(0, 3, 1.2),
            EdgeSpec::plastic(1, 3, -0.2, PlasticityRule::Hebbian),
            EdgeSpec::fixed(2, 3, 0.7),
            EdgeSpec::fixed(3, 2, -0.3),
        ],
    )
    .build()
    .unwrap()
}

/// Plain scalar re-derivation of the loss of [`pavlov_net`]: one-step
/// delayed gather, tanh cells, Hebbian updates against the previous
/// presynaptic output, binary cross-entropy with the output as logit.
fn oracle_loss(values: &[f64], xs: &[Vec<f64>], ys: &[Vec<f64>], clip: f64) -> f64 {
    let w = &values[0..6];
    let (ws, b) = (&values[6..8], &values[8..10]);
    let eta = &values[10..12];
    let lambda: Vec<f64> = values[12..14].iter().map(|&r| sigmoid(r)).collect();
    let plastic_edge = [1usize, 3];
    let src = [0usize, 1, 0, 1, 2, 3];
    let dst = [2usize, 2, 3, 3, 3, 2];

    let mut e = [w[1], w[3]];
    let mut v = [0.0f64; 4];
    let mut s = [0.0f64; 4];
    let mut total = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let mut weight = w.to_vec();
        weight[1] = e[0];
        weight[3] = e[1];
        let mut u = [0.0f64; 4];
        for k in 0..6 {
            u[dst[k]] += weight[k] * v[src[k]];
        }
        let mut next = [x[0], x[1], 0.0, 0.0];
        for (slot, q) in [2usize, 3].into_iter().enumerate() {
            s[q] = (u[q] + ws[slot] * s[q] + b[slot]).tanh();
            next[q] = s[q];
        }
        for slot in 0..2 {
            let k = plastic_edge[slot];
            let pre = lambda[slot] * e[slot] + eta[slot] * v[src[k]] * next[dst[k]];
            e[slot] = pre.clamp(-clip, clip);
        }
        v = next;
        let z = v[3];
        total += z.max(0.0) + (-z.abs()).exp().ln_1p() - y[0] * z;
    }
    total
}

fn exact_episode() -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let d = gen_pavlov(&PavlovConfig::paper_exact(1, 1)).unwrap();
    let ep = &d.episodes[0];
    (ep.x.clone(), ep.y.clone())
}

fn tuned_params(t: &NetworkTopology) -> ParameterSet {
    let mut p = ParameterSet::from_topology(t);
    assert_eq!(p.len(), 14);
    p.values_mut()[6..14].copy_from_slice(&[0.3, -0.5, 0.05, -0.1, 0.4, 0.25, 1.5, 0.5]);
    p
}

#[test]
fn exact_sequence_has_five_steps_and_final_salivation() {
    let (xs, ys) = exact_episode();
    assert_eq!(xs, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0], vec![0.0, 1.0]]);
    assert_eq!(ys.last().unwrap(), &vec![1.0]);
}

#[test]
fn untrained_loss_matches_scalar_oracle() {
    let t = pavlov_net();
    let p = tuned_params(&t);
    let (xs, ys) = exact_episode();
    let engine = sequence_loss(&t, &p, &xs, &ys, None, LossKind::Bce).unwrap();
    let oracle = oracle_loss(p.values(), &xs, &ys, t.plasticity().clip);
    assert!((engine - oracle).abs() < 1e-12, "{engine} vs {oracle}");
}

#[test]
fn full_gradient_matches_oracle_differences() {
    let t = pavlov_net();
    let p = tuned_params(&t);
    let (xs, ys) = exact_episode();
    let clip = t.plasticity().clip;
    let (_, g) = full_bptt(&t, &p, &xs, &ys, None, LossKind::Bce).unwrap();
    let h = 1e-4;
    for i in 0..p.len() {
        let at = |d: f64| {
            let mut v = p.values().to_vec();
            v[i] += d;
            oracle_loss(&v, &xs, &ys, clip)
        };
        let fd = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
        let scale = fd.abs().max(g.0[i].abs()).max(1e-6);
        assert!((g.0[i] - fd).abs() / scale < 1e-6, "param {i}: analytic {} fd {fd}", g.0[i]);
    }
}

#[test]
fn short_truncation_is_finite_and_full_window_is_exact() {
    let t = pavlov_net();
    let p = tuned_params(&t);
    let (xs, ys) = exact_episode();
    let (loss_full, full) = full_bptt(&t, &p, &xs, &ys, None, LossKind::Bce).unwrap();
    let (loss_short, short) = tbptt_gradients(&t, &p, &xs, &ys, None, LossKind::Bce, 1, 2).unwrap();
    assert!(short.0.iter().all(|g| g.is_finite()));
    assert!((loss_short - loss_full).abs() < 1e-12);
    let (_, wide) = tbptt_gradients(&t, &p, &xs, &ys, None, LossKind::Bce, 5, 5).unwrap();
    for (a, b) in wide.0.iter().zip(&full.0) {
        assert!((a - b).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_agrees_for_random_parameters(
        values in proptest::collection::vec(-1.5f64..1.5, 14),
        bits in proptest::collection::vec(0u8..2, 2..12),
    ) {
        let t = pavlov_net();
        let p = ParameterSet::from_values(&t, values).unwrap();
        let xs: Vec<Vec<f64>> = bits.iter().map(|&b| vec![f64::from(b), f64::from(1 - b)]).collect();
        let ys: Vec<Vec<f64>> = bits.iter().map(|&b| vec![f64::from(b)]).collect();
        let engine = sequence_loss(&t, &p, &xs, &ys, None, LossKind::Bce).unwrap();
        let oracle = oracle_loss(p.values(), &xs, &ys, t.plasticity().clip);
        prop_assert!((engine - oracle).abs() < 1e-12);
    }
}
