//! Reverse-mode gradients of rollout losses.
//!
//! The tape is structured by step rather than as a general expression graph:
//! each [`StepRecord`] keeps exactly the values the backward sweep of one
//! engine step needs. Conventions:
//!
//! - spike nodes use the fast-sigmoid surrogate from [`crate::dynamics`];
//!   the reset path is detached (`ds/ds_pre = 1 - spike`)
//! - clip nodes pass gradient strictly inside `(-c, c)` and block it at or
//!   beyond the bound
//! - STDP increments are treated as constants; only the carried weight
//!   receives gradient

use thiserror::Error;

use crate::dynamics::lif_surrogate_grad;
use crate::engine::{Cell, Engine, EngineError, Plastic, RolloutState};
use crate::params::ParameterSet;
use crate::plasticity::clip_passes;
use crate::topology::NetworkTopology;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    /// `1/2 * sum (y_hat - y)^2`
    #[default]
    Mse,
    /// Binary cross-entropy with the output value as logit.
    Bce,
    /// Softmax cross-entropy across all output neurons.
    Cce,
}

impl LossKind {
    /// Decision threshold on a raw output value for binary targets.
    pub fn threshold(self) -> f64 {
        match self {
            LossKind::Mse => 0.5,
            LossKind::Bce | LossKind::Cce => 0.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss at step {t}")]
    NonFiniteLoss { t: usize },
    #[error("tape does not match the engine: {0}")]
    TapeMismatch(String),
    #[error("invalid truncation window: k1={k1}, k2={k2}")]
    Window { k1: usize, k2: usize },
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    crate::params::sigmoid(z)
}

/// Loss of one step; writes `d loss / d y_hat` into `grad`.
pub fn step_loss(
    kind: LossKind,
    y_hat: &[f64],
    y: &[f64],
    mask: Option<&[f64]>,
    grad: &mut [f64],
) -> f64 {
    let weight = |o: usize| mask.map_or(1.0, |m| m[o]);
    match kind {
        LossKind::Mse => {
            let mut loss = 0.0;
            for o in 0..y.len() {
                let d = y_hat[o] - y[o];
                loss += weight(o) * 0.5 * d * d;
                grad[o] = weight(o) * d;
            }
            loss
        }
        LossKind::Bce => {
            let mut loss = 0.0;
            for o in 0..y.len() {
                let z = y_hat[o];
                loss += weight(o) * (softplus(z) - y[o] * z);
                grad[o] = weight(o) * (sigmoid(z) - y[o]);
            }
            loss
        }
        LossKind::Cce => {
            let included = mask.is_none_or(|m| m.iter().any(|&w| w != 0.0));
            if !included || y.is_empty() {
                grad.fill(0.0);
                return 0.0;
            }
            let max = y_hat.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + y_hat.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            let total: f64 = y.iter().sum();
            let mut loss = 0.0;
            for o in 0..y.len() {
                loss += y[o] * (lse - y_hat[o]);
                grad[o] = (y_hat[o] - lse).exp() * total - y[o];
            }
            loss
        }
    }
}

/// Flat gradient aligned with a [`ParameterSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient(pub Vec<f64>);

impl Gradient {
    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn add_assign(&mut self, other: &Gradient) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.0 {
            *g *= factor;
        }
    }

    /// Rescale so the Euclidean norm is at most `bound`. Returns the
    /// pre-clip norm.
    pub fn clip_norm(&mut self, bound: f64) -> f64 {
        let norm = self.norm();
        if norm > bound {
            self.scale(bound / norm);
        }
        norm
    }
}

/// Adjoint of a rollout state.
#[derive(Clone, Debug, PartialEq)]
pub struct StateGrad {
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    /// Per plastic slot.
    pub e: Vec<f64>,
}

impl StateGrad {
    pub fn zeros(n_neurons: usize, n_plastic: usize) -> Self {
        Self { s: vec![0.0; n_neurons], v: vec![0.0; n_neurons], e: vec![0.0; n_plastic] }
    }
}

/// Values recorded for one step.
#[derive(Clone, Debug)]
pub struct StepRecord {
    pub v_prev: Vec<f64>,
    pub s_prev: Vec<f64>,
    pub e_prev: Vec<f64>,
    /// Rate neurons: new state. LIF neurons: pre-reset potential.
    pub s_pre: Vec<f64>,
    pub v: Vec<f64>,
    pub preclip: Vec<f64>,
    pub dloss_dy: Vec<f64>,
}

/// Recorded forward computation over one window.
#[derive(Clone, Debug)]
pub struct Tape {
    entry: RolloutState,
    xs: Vec<Vec<f64>>,
    steps: Vec<StepRecord>,
    outputs: Vec<Vec<f64>>,
    n_params: usize,
}

impl Tape {
    pub fn entry(&self) -> &RolloutState {
        &self.entry
    }

    pub fn steps(&self) -> &[StepRecord] {
        &self.steps
    }

    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    fn check(&self, engine: &Engine<'_>) -> Result<(), AutodiffError> {
        let n = engine.topology().len();
        let np = engine.plastic.len();
        if self.n_params != engine.params().len() {
            return Err(AutodiffError::TapeMismatch(format!(
                "tape recorded {} parameters, engine has {}",
                self.n_params,
                engine.params().len()
            )));
        }
        if self.entry.s.len() != n || self.entry.plastic.e.len() != np {
            return Err(AutodiffError::TapeMismatch("entry state dimensions".into()));
        }
        for (t, r) in self.steps.iter().enumerate() {
            if r.v.len() != n || r.preclip.len() != np || r.v_prev.len() != n {
                return Err(AutodiffError::TapeMismatch(format!("step {} dimensions", t + 1)));
            }
        }
        Ok(())
    }

    /// Re-run the forward pass from the entry state and confirm it
    /// reproduces every recorded output bitwise.
    pub fn replay(&self, engine: &Engine<'_>) -> Result<(), AutodiffError> {
        self.check(engine)?;
        let mut state = self.entry.clone();
        let ys = engine.rollout(&mut state, &self.xs)?;
        if ys != self.outputs {
            return Err(AutodiffError::TapeMismatch("replayed outputs differ".into()));
        }
        Ok(())
    }
}

fn check_window(
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    mask: Option<&[Vec<f64>]>,
    n_out: usize,
) -> Result<(), AutodiffError> {
    if xs.len() != ys.len() {
        return Err(AutodiffError::Shape(format!("{} inputs vs {} targets", xs.len(), ys.len())));
    }
    if let Some(m) = mask {
        if m.len() != ys.len() {
            return Err(AutodiffError::Shape(format!("{} mask rows vs {} targets", m.len(), ys.len())));
        }
        if let Some((t, _)) = m.iter().enumerate().find(|(_, r)| r.len() != n_out) {
            return Err(AutodiffError::Shape(format!("mask row {} has wrong width", t + 1)));
        }
    }
    if let Some((t, _)) = ys.iter().enumerate().find(|(_, r)| r.len() != n_out) {
        return Err(AutodiffError::Shape(format!(
            "target row {} has width {}, network has {n_out} outputs",
            t + 1,
            ys[t].len()
        )));
    }
    Ok(())
}

/// Forward pass with recording. Returns the window loss
/// `sum_t sum_o mask * loss`, the tape, and the exit state.
pub fn forward_taped(
    engine: &Engine<'_>,
    state0: &RolloutState,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    mask: Option<&[Vec<f64>]>,
    loss: LossKind,
) -> Result<(f64, Tape, RolloutState), AutodiffError> {
    let n_out = engine.topology().outputs().len();
    check_window(xs, ys, mask, n_out)?;
    let mut state = state0.clone();
    let mut scratch = engine.scratch();
    let mut steps = Vec::with_capacity(xs.len());
    let mut outputs = Vec::with_capacity(xs.len());
    let mut total = 0.0;
    for (t, x) in xs.iter().enumerate() {
        let v_prev = state.v.clone();
        let s_prev = state.s.clone();
        let e_prev = state.plastic.e.clone();
        engine.advance(&mut state, x, &mut scratch)?;
        let y_hat = engine.outputs(&state);
        let mut dloss_dy = vec![0.0; n_out];
        let l = step_loss(loss, &y_hat, &ys[t], mask.map(|m| m[t].as_slice()), &mut dloss_dy);
        if !l.is_finite() {
            return Err(AutodiffError::NonFiniteLoss { t: state.t });
        }
        total += l;
        steps.push(StepRecord {
            v_prev,
            s_prev,
            e_prev,
            s_pre: scratch.s_pre.clone(),
            v: state.v.clone(),
            preclip: scratch.preclip.clone(),
            dloss_dy,
        });
        outputs.push(y_hat);
    }
    let tape = Tape {
        entry: state0.clone(),
        xs: xs.to_vec(),
        steps,
        outputs,
        n_params: engine.params().len(),
    };
    Ok((total, tape, state))
}

/// Reverse sweep over a tape. `upstream` is the adjoint of the window's
/// exit state (zero when `None`). Returns the parameter gradient, with
/// frozen segments zeroed, and the adjoint of the entry state.
pub fn backward(
    engine: &Engine<'_>,
    tape: &Tape,
    upstream: Option<&StateGrad>,
) -> Result<(Gradient, StateGrad), AutodiffError> {
    tape.check(engine)?;
    let topology = engine.topology();
    let params = engine.params();
    let layout = params.layout();
    let n = topology.len();
    let np = engine.plastic.len();
    let clip_bound = topology.plasticity().clip;
    let edges = topology.edges();

    let mut grad = vec![0.0; params.len()];
    let mut adj = match upstream {
        Some(u) => {
            if u.s.len() != n || u.v.len() != n || u.e.len() != np {
                return Err(AutodiffError::Shape("upstream state gradient".into()));
            }
            u.clone()
        }
        None => StateGrad::zeros(n, np),
    };
    let mut prev = StateGrad::zeros(n, np);
    let mut gu = vec![0.0; n];

    for rec in tape.steps.iter().rev() {
        for (j, &o) in topology.outputs().iter().enumerate() {
            adj.v[o] += rec.dloss_dy[j];
        }
        prev.s.fill(0.0);
        prev.v.fill(0.0);
        prev.e.fill(0.0);

        for (slot, p) in engine.plastic.iter().enumerate() {
            let g = adj.e[slot];
            if g == 0.0 || !clip_passes(rec.preclip[slot], clip_bound) {
                continue;
            }
            match p.kind {
                Plastic::Hebbian { eta, lambda } => {
                    prev.e[slot] += g * lambda;
                    let raw = layout.lambda_raw(slot).expect("hebbian slot");
                    grad[raw] += g * rec.e_prev[slot] * lambda * (1.0 - lambda);
                    let eta_i = layout.eta(slot).expect("hebbian slot");
                    grad[eta_i] += g * rec.v_prev[p.src] * rec.v[p.dst];
                    prev.v[p.src] += g * eta * rec.v[p.dst];
                    adj.v[p.dst] += g * eta * rec.v_prev[p.src];
                }
                Plastic::Stdp => prev.e[slot] += g,
            }
        }

        for (q, cell) in engine.cells.iter().enumerate() {
            gu[q] = 0.0;
            match cell {
                Cell::Input(_) => {}
                Cell::Rate { w_s, .. } => {
                    let total = adj.s[q] + adj.v[q];
                    if total == 0.0 {
                        continue;
                    }
                    let s = rec.v[q];
                    let gz = total * (1.0 - s * s);
                    gu[q] = gz;
                    grad[layout.self_weight(q).expect("rate slot")] += gz * rec.s_prev[q];
                    grad[layout.bias(q).expect("rate slot")] += gz;
                    prev.s[q] += gz * w_s;
                }
                Cell::Lif(p) => {
                    let spike = rec.v[q];
                    let g_pre =
                        adj.v[q] * lif_surrogate_grad(rec.s_pre[q], p) + adj.s[q] * (1.0 - spike);
                    gu[q] = g_pre * p.dt;
                    prev.s[q] += g_pre * (1.0 - p.dt);
                }
            }
        }

        for q in 0..n {
            let g = gu[q];
            if g == 0.0 {
                continue;
            }
            for &k in topology.incoming(q) {
                let src = edges[k].src;
                let w = match topology.plastic_slot(k) {
                    Some(slot) => {
                        prev.e[slot] += g * rec.v_prev[src];
                        rec.e_prev[slot]
                    }
                    None => {
                        grad[layout.edge_weight(k)] += g * rec.v_prev[src];
                        params.w0(k)
                    }
                };
                prev.v[src] += g * w;
            }
        }

        std::mem::swap(&mut adj, &mut prev);
    }

    params.mask_frozen(&mut grad);
    Ok((Gradient(grad), adj))
}

/// Route the entry-state weight adjoint of a window that starts at episode
/// start into `w0`, since `e(0) = w0`.
fn fold_entry_weights(engine: &Engine<'_>, grad: &mut Gradient, entry: &StateGrad) {
    let params = engine.params();
    if params.is_frozen(crate::params::SegmentKind::EdgeWeight) {
        return;
    }
    for (slot, p) in engine.plastic.iter().enumerate() {
        grad.0[params.layout().edge_weight(p.edge)] += entry.e[slot];
    }
}

/// Full backpropagation through time over one episode from a fresh state.
pub fn full_bptt(
    topology: &NetworkTopology,
    params: &ParameterSet,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    mask: Option<&[Vec<f64>]>,
    loss: LossKind,
) -> Result<(f64, Gradient), AutodiffError> {
    let engine = Engine::new(topology, params);
    let state0 = engine.initial_state();
    let (value, tape, _) = forward_taped(&engine, &state0, xs, ys, mask, loss)?;
    let (mut grad, entry) = backward(&engine, &tape, None)?;
    fold_entry_weights(&engine, &mut grad, &entry);
    Ok((value, grad))
}

/// Episode loss from a fresh state, without recording.
pub fn sequence_loss(
    topology: &NetworkTopology,
    params: &ParameterSet,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    mask: Option<&[Vec<f64>]>,
    loss: LossKind,
) -> Result<f64, AutodiffError> {
    let n_out = topology.outputs().len();
    check_window(xs, ys, mask, n_out)?;
    let engine = Engine::new(topology, params);
    let mut state = engine.initial_state();
    let y_hat = engine.rollout(&mut state, xs)?;
    let mut scratch = vec![0.0; n_out];
    let mut total = 0.0;
    for t in 0..xs.len() {
        total += step_loss(loss, &y_hat[t], &ys[t], mask.map(|m| m[t].as_slice()), &mut scratch);
    }
    if !total.is_finite() {
        return Err(AutodiffError::NonFiniteLoss { t: xs.len() });
    }
    Ok(total)
}

/// Central finite differences of [`sequence_loss`], one coordinate at a
/// time, with the fourth-order five-point stencil
/// `(f(-2h) - 8 f(-h) + 8 f(h) - f(2h)) / 12h`. Its truncation error is
/// small enough that `h` can stay large (around `1e-4`), which keeps
/// cancellation error far below what a two-point difference allows.
pub fn fd_gradient(
    topology: &NetworkTopology,
    params: &ParameterSet,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    mask: Option<&[Vec<f64>]>,
    loss: LossKind,
    eps: f64,
) -> Result<Gradient, AutodiffError> {
    let mut probe = params.clone();
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let base = params.values()[i];
        let mut at = |offset: f64| {
            probe.values_mut()[i] = base + offset;
            sequence_loss(topology, &probe, xs, ys, mask, loss)
        };
        let (m2, m1, p1, p2) = (at(-2.0 * eps)?, at(-eps)?, at(eps)?, at(2.0 * eps)?);
        probe.values_mut()[i] = base;
        grad[i] = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * eps);
    }
    params.mask_frozen(&mut grad);
    Ok(Gradient(grad))
}

/// Finite-difference gradient refined by Ridders' polynomial extrapolation:
/// central differences at steps `h0, h0/1.4, h0/1.4^2, ...` are extrapolated
/// toward zero step, keeping the estimate with the smallest internal error.
/// Starting from a large step keeps cancellation error tiny, so
/// coordinates with gradients near `1e-8` stay accurate.
pub fn fd_gradient_extrapolated(
    topology: &NetworkTopology,
    params: &ParameterSet,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    mask: Option<&[Vec<f64>]>,
    loss: LossKind,
    h0: f64,
) -> Result<Gradient, AutodiffError> {
    const SHRINK: f64 = 1.4;
    const LEVELS: usize = 10;
    let mut probe = params.clone();
    let mut grad = vec![0.0; params.len()];
    for (i, gi) in grad.iter_mut().enumerate() {
        let base = params.values()[i];
        let mut central = |h: f64| -> Result<f64, AutodiffError> {
            probe.values_mut()[i] = base + h;
            let up = sequence_loss(topology, &probe, xs, ys, mask, loss)?;
            probe.values_mut()[i] = base - h;
            let down = sequence_loss(topology, &probe, xs, ys, mask, loss)?;
            probe.values_mut()[i] = base;
            Ok((up - down) / (2.0 * h))
        };
        // table[j] holds the order-j extrapolation at the current level.
        let mut h = h0;
        let mut prev = vec![central(h)?];
        let mut best = prev[0];
        let mut err = f64::INFINITY;
        for _ in 1..LEVELS {
            h /= SHRINK;
            let mut cur = vec![central(h)?];
            let mut fac = SHRINK * SHRINK;
            for j in 1..=prev.len() {
                let next = (cur[j - 1] * fac - prev[j - 1]) / (fac - 1.0);
                fac *= SHRINK * SHRINK;
                let e = (next - cur[j - 1]).abs().max((next - prev[j - 1]).abs());
                if e <= err {
                    err = e;
                    best = next;
                }
                cur.push(next);
            }
            let k = prev.len();
            if (cur[k] - prev[k - 1]).abs() >= 2.0 * err {
                break;
            }
            prev = cur;
        }
        *gi = best;
    }
    params.mask_frozen(&mut grad);
    Ok(Gradient(grad))
}

/// Truncation windows `(start, end)` over `[0, len)`: a window closes every
/// `k1` steps (and at `len`) and unrolls at most `k2` steps back.
pub fn tbptt_windows(len: usize, k1: usize, k2: usize) -> Result<Vec<(usize, usize)>, AutodiffError> {
    if k1 == 0 || k1 > k2 {
        return Err(AutodiffError::Window { k1, k2 });
    }
    let mut windows = Vec::new();
    let mut end = 0;
    while end < len {
        end = (end + k1).min(len);
        windows.push((end.saturating_sub(k2), end));
    }
    Ok(windows)
}

/// Truncated BPTT over one episode from a fresh state.
///
/// Each window's loss covers the `k1` steps it closes; its backward pass
/// unrolls back to the window start, where the state is carried forward
/// but its adjoint is dropped. With `k2 >= len` every window starts at
/// episode start and the result equals [`full_bptt`].
pub fn tbptt_gradients(
    topology: &NetworkTopology,
    params: &ParameterSet,
    xs: &[Vec<f64>],
    ys: &[Vec<f64>],
    mask: Option<&[Vec<f64>]>,
    loss: LossKind,
    k1: usize,
    k2: usize,
) -> Result<(f64, Gradient), AutodiffError> {
    let n_out = topology.outputs().len();
    check_window(xs, ys, mask, n_out)?;
    let windows = tbptt_windows(xs.len(), k1, k2)?;
    let engine = Engine::new(topology, params);

    // Snapshots at every window start, from one untaped forward pass.
    let mut starts: Vec<usize> = windows.iter().map(|w| w.0).collect();
    starts.dedup();
    let mut snapshots = Vec::with_capacity(starts.len());
    let mut state = engine.initial_state();
    let mut scratch = engine.scratch();
    for &s in &starts {
        while state.t < s {
            let t = state.t;
            engine.advance(&mut state, &xs[t], &mut scratch)?;
        }
        snapshots.push(state.clone());
    }

    let mut total = 0.0;
    let mut grad = Gradient::zeros(params.len());
    let mut closed = 0;
    for &(start, end) in &windows {
        let snap = &snapshots[starts.binary_search(&start).expect("window start recorded")];
        let window_mask: Vec<Vec<f64>> = (start..end)
            .map(|t| {
                if t < closed {
                    vec![0.0; n_out]
                } else {
                    mask.map_or_else(|| vec![1.0; n_out], |m| m[t].clone())
                }
            })
            .collect();
        let (value, tape, _) =
            forward_taped(&engine, snap, &xs[start..end], &ys[start..end], Some(&window_mask), loss)?;
        let (g, entry) = backward(&engine, &tape, None)?;
        total += value;
        grad.add_assign(&g);
        if start == 0 {
            fold_entry_weights(&engine, &mut grad, &entry);
        }
        closed = end;
    }
    Ok((total, grad))
}
