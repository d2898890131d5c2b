//! Invariant suites: gradient checks, engine/reference agreement, plasticity
//! signs, determinism and LIF dynamics. Each check yields a pass/fail line.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::autodiff::{fd_gradient_extrapolated, full_bptt, tbptt_gradients, LossKind};
use crate::datasets::pavlov::{gen_pavlov, PavlovConfig};
use crate::engine::{reference_rollout, Engine};
use crate::params::{ParameterSet, SegmentKind};
use crate::plasticity::{stdp_update, PlasticityMeta};
use crate::rng::{derive_seed, SeededRng};
use crate::topology::{
    EdgeSpec, LifParams, NetworkTopology, NeuronModel, NeuronSpec, PlasticityRule, RateParams,
    Role, TopologyDraft, RandomTopologySpec, build_random,
};
use crate::training::{metrics::render_metrics, train, EvalPlan, EvalTask, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Gradcheck,
    Tbptt,
    Oracle,
    PlasticitySigns,
    Determinism,
    Lif,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Gradcheck,
        Suite::Tbptt,
        Suite::Oracle,
        Suite::PlasticitySigns,
        Suite::Determinism,
        Suite::Lif,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Gradcheck => "gradcheck",
            Suite::Tbptt => "tbptt",
            Suite::Oracle => "oracle",
            Suite::PlasticitySigns => "plasticity-signs",
            Suite::Determinism => "determinism",
            Suite::Lif => "lif",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown suite {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(|c| c.passed)
    }

    pub fn summary(&self) -> String {
        let ok = self.checks.iter().filter(|c| c.passed).count();
        format!("{}: {ok}/{} checks passed in {:.2}s", self.suite, self.checks.len(), self.seconds)
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> SuiteReport {
    let started = Instant::now();
    let checks = match suite {
        Suite::Gradcheck => gradcheck(50, seed).into_iter().map(|c| c.check()).collect(),
        Suite::Tbptt => tbptt_equivalence(20, seed),
        Suite::Oracle => oracle(1000, seed),
        Suite::PlasticitySigns => plasticity_signs(),
        Suite::Determinism => {
            let mut c = causality(100, seed);
            c.push(training_reproducible(seed));
            c
        }
        Suite::Lif => vec![lif_decay(50), lif_oscillation()],
    };
    SuiteReport { suite, checks, seconds: started.elapsed().as_secs_f64() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelMix {
    Rate,
    Lif,
    Mixed,
}

/// Shape limits for random test networks.
#[derive(Clone, Copy, Debug)]
pub struct NetShape {
    pub max_neurons: usize,
    pub max_edges: usize,
    pub models: ModelMix,
    pub plastic: bool,
}

/// Arbitrary directed graph: any non-input neuron may receive from any
/// neuron, self-loops included.
pub fn random_network(rng: &mut SeededRng, shape: NetShape) -> NetworkTopology {
    let n_in = rng.range_inclusive(1, 3);
    let n_out = rng.range_inclusive(1, 2);
    let n = rng.range_inclusive(n_in + n_out, shape.max_neurons.max(n_in + n_out));
    let lif_for = |rng: &mut SeededRng| match shape.models {
        ModelMix::Rate => false,
        ModelMix::Lif => true,
        ModelMix::Mixed => rng.bernoulli(0.5),
    };
    let neurons: Vec<NeuronSpec> = (0..n)
        .map(|id| {
            let role = if id < n_in {
                Role::Input
            } else if id >= n - n_out {
                Role::Output
            } else {
                Role::Hidden
            };
            let model = if lif_for(rng) {
                NeuronModel::Lif(LifParams { dt: rng.uniform(0.2, 0.8), ..LifParams::default() })
            } else {
                NeuronModel::Rate(RateParams::default())
            };
            NeuronSpec { id, role, model }
        })
        .collect();
    let is_lif: Vec<bool> = neurons.iter().map(|s| matches!(s.model, NeuronModel::Lif(_))).collect();

    let mut pairs: Vec<(usize, usize)> =
        (0..n).flat_map(|p| (n_in..n).map(move |q| (p, q))).collect();
    rng.shuffle(&mut pairs);
    let n_edges = rng.range_inclusive(1, shape.max_edges.min(pairs.len()));
    let edges = pairs[..n_edges]
        .iter()
        .map(|&(p, q)| {
            let w = rng.uniform(-1.0, 1.0);
            if shape.plastic && rng.bernoulli(0.5) {
                let rule = if is_lif[p] && is_lif[q] && rng.bernoulli(0.5) {
                    PlasticityRule::Stdp
                } else {
                    PlasticityRule::Hebbian
                };
                EdgeSpec::plastic(p, q, w, rule)
            } else {
                EdgeSpec::fixed(p, q, w)
            }
        })
        .collect();
    TopologyDraft::new(neurons, edges).build().expect("random network is valid")
}

/// Spread parameters away from their initializers so every segment matters.
pub fn randomize_params(rng: &mut SeededRng, params: &mut ParameterSet) {
    let layout = params.layout().clone();
    for kind in SegmentKind::ALL {
        let (lo, hi) = match kind {
            SegmentKind::EdgeWeight => (-1.5, 1.5),
            SegmentKind::SelfWeight => (-1.0, 1.0),
            SegmentKind::Bias => (-0.5, 0.5),
            SegmentKind::Eta => (-0.5, 0.5),
            SegmentKind::LambdaRaw => (0.0, 3.0),
        };
        for i in layout.segment(kind) {
            params.values_mut()[i] = rng.uniform(lo, hi);
        }
    }
}

fn random_rows(rng: &mut SeededRng, t: usize, width: usize, binary: bool) -> Vec<Vec<f64>> {
    (0..t)
        .map(|_| {
            (0..width)
                .map(|_| if binary { rng.bernoulli(0.5) as u8 as f64 } else { rng.uniform(-1.0, 1.0) })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct GradCase {
    pub index: usize,
    pub plastic: bool,
    pub steps: usize,
    pub n_params: usize,
    pub loss: LossKind,
    /// Largest relative error over coordinates with `|fd| >= 1e-8`.
    pub max_rel: f64,
    /// Largest absolute error over the remaining coordinates.
    pub max_abs_small: f64,
    /// `(analytic, numeric)` at the coordinate with the largest relative error.
    pub worst: (f64, f64),
    pub error: Option<String>,
}

impl GradCase {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.max_rel < 1e-4 && self.max_abs_small < 1e-8
    }

    pub fn check(&self) -> Check {
        let detail = match &self.error {
            Some(e) => e.clone(),
            None => format!(
                "{} params, T={}, {:?}, plasticity {}: max rel err {:.2e} (analytic {:e}, fd {:e}), max abs err (small) {:.2e}",
                self.n_params,
                self.steps,
                self.loss,
                if self.plastic { "on" } else { "off" },
                self.max_rel,
                self.worst.0,
                self.worst.1,
                self.max_abs_small
            ),
        };
        Check::new(format!("gradcheck net {}", self.index), self.passed(), detail)
    }
}

/// Compare the reverse sweep with central differences on `n` random rate
/// networks (at most 12 neurons, 40 edges, 8 steps), alternating plasticity.
pub fn gradcheck(n: usize, seed: u64) -> Vec<GradCase> {
    (0..n)
        .map(|index| {
            let mut rng = SeededRng::new(derive_seed(seed, index as u64));
            let plastic = index % 2 == 0;
            let shape = NetShape { max_neurons: 12, max_edges: 40, models: ModelMix::Rate, plastic };
            let t = random_network(&mut rng, shape);
            let mut p = ParameterSet::from_topology(&t);
            randomize_params(&mut rng, &mut p);
            let steps = rng.range_inclusive(1, 8);
            let loss = [LossKind::Mse, LossKind::Bce, LossKind::Cce][index % 3];
            let xs = random_rows(&mut rng, steps, t.inputs().len(), false);
            let ys = random_rows(&mut rng, steps, t.outputs().len(), true);
            let mut case = GradCase {
                index,
                plastic,
                steps,
                n_params: p.len(),
                loss,
                max_rel: 0.0,
                max_abs_small: 0.0,
                worst: (0.0, 0.0),
                error: None,
            };
            let analytic = full_bptt(&t, &p, &xs, &ys, None, loss);
            let numeric = fd_gradient_extrapolated(&t, &p, &xs, &ys, None, loss, 0.01);
            match (analytic, numeric) {
                (Ok((_, a)), Ok(f)) => {
                    for (&ai, &fi) in a.0.iter().zip(&f.0) {
                        let diff = (ai - fi).abs();
                        if fi.abs() < 1e-8 {
                            case.max_abs_small = case.max_abs_small.max(diff);
                        } else {
                            let rel = diff / ai.abs().max(fi.abs());
                            if rel > case.max_rel {
                                case.max_rel = rel;
                                case.worst = (ai, fi);
                            }
                        }
                    }
                }
                (Err(e), _) | (_, Err(e)) => case.error = Some(e.to_string()),
            }
            case
        })
        .collect()
}

/// TBPTT with `k2 >= T` against full BPTT.
pub fn tbptt_equivalence(n: usize, seed: u64) -> Vec<Check> {
    (0..n)
        .map(|i| {
            let mut rng = SeededRng::new(derive_seed(seed ^ 0x7b77, i as u64));
            let shape = NetShape { max_neurons: 10, max_edges: 40, models: ModelMix::Rate, plastic: true };
            let t = random_network(&mut rng, shape);
            let mut p = ParameterSet::from_topology(&t);
            randomize_params(&mut rng, &mut p);
            let steps = rng.range_inclusive(1, 12);
            let k2 = rng.range_inclusive(steps, steps + 3);
            let k1 = rng.range_inclusive(1, k2);
            let xs = random_rows(&mut rng, steps, t.inputs().len(), false);
            let ys = random_rows(&mut rng, steps, t.outputs().len(), true);
            let name = format!("tbptt instance {i} (T={steps}, k1={k1}, k2={k2})");
            let full = full_bptt(&t, &p, &xs, &ys, None, LossKind::Mse);
            let trunc = tbptt_gradients(&t, &p, &xs, &ys, None, LossKind::Mse, k1, k2);
            match (full, trunc) {
                (Ok((lf, gf)), Ok((lt, gt))) => {
                    let diff = gf.0.iter().zip(&gt.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    let ok = diff < 1e-12 && (lf - lt).abs() < 1e-12;
                    Check::new(name, ok, format!("max grad diff {diff:.2e}, loss diff {:.2e}", (lf - lt).abs()))
                }
                (Err(e), _) | (_, Err(e)) => Check::new(name, false, e.to_string()),
            }
        })
        .collect()
}

/// Optimized engine against the naive interpreter on `n` random cases,
/// cycling through rate, LIF and mixed networks.
pub fn oracle(n: usize, seed: u64) -> Vec<Check> {
    let mut worst_rate = 0.0f64;
    let mut spike_mismatches = 0usize;
    let mut failures = Vec::new();
    let (mut n_rate, mut n_lif) = (0, 0);
    for i in 0..n {
        let mut rng = SeededRng::new(derive_seed(seed ^ 0x0ac1e, i as u64));
        let models = [ModelMix::Rate, ModelMix::Lif, ModelMix::Mixed][i % 3];
        let shape = NetShape { max_neurons: 16, max_edges: 60, models, plastic: rng.bernoulli(0.7) };
        let t = random_network(&mut rng, shape);
        let mut p = ParameterSet::from_topology(&t);
        randomize_params(&mut rng, &mut p);
        let steps = rng.range_inclusive(1, 40);
        let binary = models == ModelMix::Lif;
        let mut xs = random_rows(&mut rng, steps, t.inputs().len(), binary);
        if !binary {
            for v in xs.iter_mut().flatten() {
                *v *= 2.0;
            }
        }
        let engine = Engine::new(&t, &p);
        let mut state = engine.initial_state();
        let fast = engine.rollout(&mut state, &xs);
        let slow = reference_rollout(&t, &p, &engine.initial_state(), &xs);
        let (fast, (slow, _)) = match (fast, slow) {
            (Ok(f), Ok(s)) => (f, s),
            (f, s) => {
                failures.push(format!("case {i}: {:?} / {:?}", f.err(), s.err()));
                continue;
            }
        };
        for (k, &o) in t.outputs().iter().enumerate() {
            let lif = matches!(t.neuron(o).model, NeuronModel::Lif(_));
            for (a, b) in fast.iter().zip(&slow) {
                if lif {
                    n_lif += 1;
                    if a[k] != b[k] {
                        spike_mismatches += 1;
                    }
                } else {
                    n_rate += 1;
                    worst_rate = worst_rate.max((a[k] - b[k]).abs());
                }
            }
        }
    }
    let mut checks = vec![
        Check::new(
            "oracle rate outputs",
            failures.is_empty() && worst_rate <= 1e-12,
            format!("{n} cases, {n_rate} rate output samples, max abs diff {worst_rate:.2e}"),
        ),
        Check::new(
            "oracle lif spike trains",
            failures.is_empty() && spike_mismatches == 0,
            format!("{n_lif} spike samples, {spike_mismatches} mismatches"),
        ),
    ];
    checks.extend(failures.into_iter().map(|f| Check::new("oracle case", false, f)));
    checks
}

/// Isolated spike pairs through one STDP edge.
pub fn plasticity_signs() -> Vec<Check> {
    let meta = PlasticityMeta::default();
    let run = |pre: [f64; 2], post: [f64; 2]| {
        let (mut e, mut tp, mut tq) = (0.0, 0.0, 0.0);
        let mut before = 0.0;
        for t in 0..2 {
            before = e;
            (e, tp, tq) = stdp_update(e, pre[t], post[t], tp, tq, &meta);
        }
        e - before
    };
    let ltp = run([1.0, 0.0], [0.0, 1.0]);
    let ltd = run([0.0, 1.0], [1.0, 0.0]);
    let expect_ltp = meta.a_plus * meta.trace_decay;
    let expect_ltd = -meta.a_minus * meta.trace_decay;
    let mut checks = vec![
        Check::new(
            "stdp pre before post",
            ltp > 0.0 && (ltp - expect_ltp).abs() < 1e-12,
            format!("delta {ltp:e}, expected {expect_ltp:e}"),
        ),
        Check::new(
            "stdp post before pre",
            ltd < 0.0 && (ltd - expect_ltd).abs() < 1e-12,
            format!("delta {ltd:e}, expected {expect_ltd:e}"),
        ),
    ];
    // The same pairs through the engine: two input neurons drive a LIF
    // pre/post pair hard enough to spike on cue.
    for (name, pre_first, expect) in
        [("engine ltp", true, expect_ltp), ("engine ltd", false, expect_ltd)]
    {
        let delta = engine_pair_delta(pre_first);
        checks.push(Check::new(
            name,
            (delta - expect).abs() < 1e-12,
            format!("delta {delta:e}, expected {expect:e}"),
        ));
    }
    checks
}

fn engine_pair_delta(pre_first: bool) -> f64 {
    let lif = |id, role| NeuronSpec { id, role, model: NeuronModel::Lif(LifParams::default()) };
    let t = TopologyDraft::new(
        vec![lif(0, Role::Input), lif(1, Role::Input), lif(2, Role::Hidden), lif(3, Role::Output)],
        vec![
            EdgeSpec::fixed(0, 2, 10.0),
            EdgeSpec::fixed(1, 3, 10.0),
            EdgeSpec::plastic(2, 3, 0.0, PlasticityRule::Stdp),
        ],
    )
    .build()
    .expect("pair topology");
    let p = ParameterSet::from_topology(&t);
    let engine = Engine::new(&t, &p);
    let mut state = engine.initial_state();
    // Input spikes at step 1 make their target spike at step 2.
    let (first, second) = if pre_first { ([1.0, 0.0], [0.0, 1.0]) } else { ([0.0, 1.0], [1.0, 0.0]) };
    let xs = [first.to_vec(), second.to_vec(), vec![0.0, 0.0]];
    let mut weights = Vec::new();
    for x in &xs {
        engine.step(&mut state, x).expect("finite");
        weights.push(state.plastic.e[0]);
    }
    weights[2] - weights[1]
}

/// Perturbing the input at step `t + 1` leaves outputs up to `t` untouched.
pub fn causality(n: usize, seed: u64) -> Vec<Check> {
    let mut violations = Vec::new();
    for i in 0..n {
        let mut rng = SeededRng::new(derive_seed(seed ^ 0xca05, i as u64));
        let models = [ModelMix::Rate, ModelMix::Lif, ModelMix::Mixed][i % 3];
        let shape = NetShape { max_neurons: 12, max_edges: 40, models, plastic: true };
        let t = random_network(&mut rng, shape);
        let mut p = ParameterSet::from_topology(&t);
        randomize_params(&mut rng, &mut p);
        let steps = rng.range_inclusive(2, 20);
        let xs = random_rows(&mut rng, steps, t.inputs().len(), models == ModelMix::Lif);
        let cut = rng.range_inclusive(1, steps - 1);
        let mut perturbed = xs.clone();
        for v in &mut perturbed[cut] {
            *v = if models == ModelMix::Lif { 1.0 - *v } else { *v + rng.uniform(0.5, 1.0) };
        }
        let a = crate::engine::rollout(&t, &p, &xs);
        let b = crate::engine::rollout(&t, &p, &perturbed);
        match (a, b) {
            (Ok(a), Ok(b)) if a[..cut] == b[..cut] => {}
            _ => violations.push(i),
        }
    }
    vec![Check::new(
        "causality",
        violations.is_empty(),
        format!("{n} paired rollouts, violations at {violations:?}"),
    )]
}

/// Two identical short training runs must yield identical metrics bytes.
pub fn training_reproducible(seed: u64) -> Check {
    let run = || -> Result<String, String> {
        let t = build_random(&RandomTopologySpec { n_hidden: 8, seed, ..Default::default() })
            .map_err(|e| e.to_string())?;
        let d = gen_pavlov(&PavlovConfig { episodes: 64, seed, ..Default::default() })
            .map_err(|e| e.to_string())?;
        let held = gen_pavlov(&PavlovConfig { episodes: 32, seed: seed + 1, ..Default::default() })
            .map_err(|e| e.to_string())?;
        let cfg = TrainConfig { epochs: 3, batch_size: 16, seed, ..Default::default() };
        let plan = EvalPlan { dataset: Some(held), task: EvalTask::Pavlov };
        let out = train(&t, &d, cfg, plan).map_err(|e| e.to_string())?;
        Ok(render_metrics(&out.history))
    };
    match (run(), run()) {
        (Ok(a), Ok(b)) => Check::new(
            "fixed-seed training",
            a == b,
            format!("metrics files {} ({} bytes)", if a == b { "identical" } else { "differ" }, a.len()),
        ),
        (Err(e), _) | (_, Err(e)) => Check::new("fixed-seed training", false, e),
    }
}

/// A lone LIF neuron with no drive relaxes geometrically toward rest.
pub fn lif_decay(steps: usize) -> Check {
    let params = LifParams { s_rest: 0.0, dt: 0.5, ..LifParams::default() };
    let s0 = 0.8;
    let t = TopologyDraft::new(
        vec![
            NeuronSpec { id: 0, role: Role::Input, model: NeuronModel::Rate(RateParams::default()) },
            NeuronSpec { id: 1, role: Role::Output, model: NeuronModel::Lif(params) },
        ],
        vec![EdgeSpec::fixed(0, 1, 0.0)],
    )
    .build()
    .expect("decay topology");
    let p = ParameterSet::from_topology(&t);
    let engine = Engine::new(&t, &p);
    let mut state = engine.initial_state();
    state.s[1] = s0;
    let mut worst = 0.0f64;
    let mut spiked = false;
    for step in 1..=steps {
        let out = engine.step(&mut state, &[0.0]).expect("finite");
        spiked |= out.y[0] != 0.0;
        let expected = (1.0 - params.dt).powi(step as i32) * (s0 - params.s_rest).abs();
        worst = worst.max(((state.s[1] - params.s_rest).abs() - expected).abs());
    }
    Check::new(
        "lif zero-input decay",
        worst == 0.0 && !spiked,
        format!("{steps} steps, max deviation from (1-dt)^t*|s0-s_rest|: {worst:e}"),
    )
}

/// Spike times of the output of a reciprocally coupled LIF pair under
/// constant drive.
pub fn lif_pair_spikes(steps: usize) -> Vec<usize> {
    let lif = |id, role| NeuronSpec { id, role, model: NeuronModel::Lif(LifParams::default()) };
    let t = TopologyDraft::new(
        vec![lif(0, Role::Input), lif(1, Role::Hidden), lif(2, Role::Output)],
        vec![
            EdgeSpec::fixed(0, 1, 1.5),
            EdgeSpec::fixed(1, 2, 2.5),
            EdgeSpec::fixed(2, 1, -2.0),
        ],
    )
    .build()
    .expect("pair topology");
    let p = ParameterSet::from_topology(&t);
    let ys = crate::engine::rollout(&t, &p, &vec![vec![1.0]; steps]).expect("finite");
    ys.iter().enumerate().filter(|(_, y)| y[0] == 1.0).map(|(t, _)| t).collect()
}

/// After a transient, the pair fires with one constant inter-spike interval.
pub fn lif_oscillation() -> Check {
    let spikes = lif_pair_spikes(200);
    let late: Vec<usize> = spikes.iter().copied().filter(|&t| t >= 50).collect();
    let intervals: Vec<usize> = late.windows(2).map(|w| w[1] - w[0]).collect();
    let periodic = intervals.len() >= 5 && intervals.windows(2).all(|w| w[0] == w[1]);
    Check::new(
        "lif reciprocal pair oscillation",
        periodic,
        format!("{} spikes after warm-up, intervals {:?}", late.len(), intervals.first()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn random_networks_respect_shape() {
        let mut rng = SeededRng::new(1);
        for _ in 0..100 {
            let shape = NetShape { max_neurons: 12, max_edges: 40, models: ModelMix::Mixed, plastic: true };
            let t = random_network(&mut rng, shape);
            assert!(t.len() <= 12 && t.edges().len() <= 40);
        }
    }

    #[test]
    fn small_suites_pass() {
        for check in gradcheck(6, 3).iter().map(GradCase::check) {
            assert!(check.passed, "{check}");
        }
        for check in plasticity_signs()
            .into_iter()
            .chain(tbptt_equivalence(5, 3))
            .chain(oracle(30, 3))
            .chain(causality(10, 3))
            .chain([lif_decay(50), lif_oscillation()])
        {
            assert!(check.passed, "{check}");
        }
    }
}
