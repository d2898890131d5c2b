//! Task metrics: conditioning acquisition and closed-loop Pong.

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autodiff::LossKind;
use crate::datasets::pavlov::{self, stage_steps};
use crate::datasets::pong::{Action, Grid, PongEnv, N_ACTIONS, N_OBS};
use crate::datasets::{Dataset, Episode};
use crate::engine::{Engine, RolloutState};
use crate::params::ParameterSet;
use crate::rng::{derive_seed, SeededRng};
use crate::topology::NetworkTopology;

/// Anything that maps an episode's inputs to per-step output predictions.
pub trait ResponseModel {
    fn respond(&self, ep: &Episode) -> Result<Vec<Vec<f64>>, TrainError>;
    /// Decision threshold applied to outputs.
    fn threshold(&self) -> f64;
}

/// A network read out on the last tick of each held step.
pub struct NetModel<'a> {
    pub topology: &'a NetworkTopology,
    pub params: &'a ParameterSet,
    pub ticks_per_step: usize,
    pub loss: LossKind,
}

impl ResponseModel for NetModel<'_> {
    fn respond(&self, ep: &Episode) -> Result<Vec<Vec<f64>>, TrainError> {
        let held = ep.expand_ticks(self.ticks_per_step);
        let engine = Engine::new(self.topology, self.params);
        let mut state = engine.initial_state();
        let ys = engine.rollout(&mut state, &held.x)?;
        Ok(ys.into_iter().skip(self.ticks_per_step - 1).step_by(self.ticks_per_step).collect())
    }

    fn threshold(&self) -> f64 {
        self.loss.threshold()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeVerdict {
    pub index: usize,
    pub m: usize,
    pub correct: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AcquisitionReport {
    pub accuracy: f64,
    pub episodes: Vec<EpisodeVerdict>,
}

impl AcquisitionReport {
    /// Accuracy restricted to episodes with `m` pairings matching `pred`.
    pub fn accuracy_where(&self, pred: impl Fn(usize) -> bool) -> Option<f64> {
        let sel: Vec<&EpisodeVerdict> = self.episodes.iter().filter(|v| pred(v.m)).collect();
        (!sel.is_empty()).then(|| sel.iter().filter(|v| v.correct).count() as f64 / sel.len() as f64)
    }
}

/// Fraction of episodes whose every test-stage prediction matches the
/// ground truth after thresholding.
pub fn eval_pavlov_acquisition(
    model: &dyn ResponseModel,
    dataset: &Dataset,
) -> Result<AcquisitionReport, TrainError> {
    if !pavlov::is_pavlov(dataset) {
        return Err(TrainError::Format(format!(
            "expected a pavlov dataset, got generator {:?} with {:?}",
            dataset.manifest.generator,
            dataset.dims()
        )));
    }
    let mut verdicts = Vec::with_capacity(dataset.len());
    for (index, ep) in dataset.episodes.iter().enumerate() {
        let tests = stage_steps(ep, "test");
        let m = ep.meta_usize("m").ok_or_else(|| TrainError::Format(format!("episode {index} lacks m")))?;
        if tests.is_empty() {
            return Err(TrainError::Format(format!("episode {index} has no test stage")));
        }
        let out = model.respond(ep)?;
        let th = model.threshold();
        let correct = tests.iter().all(|&t| (out[t][0] > th) == (ep.y[t][0] > 0.5));
        verdicts.push(EpisodeVerdict { index, m, correct });
    }
    let hits = verdicts.iter().filter(|v| v.correct).count();
    let accuracy = if verdicts.is_empty() { 0.0 } else { hits as f64 / verdicts.len() as f64 };
    Ok(AcquisitionReport { accuracy, episodes: verdicts })
}

/// Closed-loop controller for the Pong environment.
pub trait PongPolicy {
    fn reset(&mut self);
    fn act(&mut self, env: &PongEnv) -> Result<Action, TrainError>;
}

pub struct ExpertPolicy;

impl PongPolicy for ExpertPolicy {
    fn reset(&mut self) {}

    fn act(&mut self, env: &PongEnv) -> Result<Action, TrainError> {
        Ok(env.expert_action())
    }
}

pub struct RandomPolicy(pub SeededRng);

impl PongPolicy for RandomPolicy {
    fn reset(&mut self) {}

    fn act(&mut self, _env: &PongEnv) -> Result<Action, TrainError> {
        Ok(Action::from_index(self.0.below(N_ACTIONS as u64) as usize))
    }
}

/// Network controller: holds each observation for `ticks_per_step` network
/// steps and takes the argmax of the output neurons on the last one.
pub struct NetPolicy<'a> {
    engine: Engine<'a>,
    state: RolloutState,
    ticks_per_step: usize,
}

impl<'a> NetPolicy<'a> {
    pub fn new(
        topology: &'a NetworkTopology,
        params: &'a ParameterSet,
        ticks_per_step: usize,
    ) -> Result<Self, TrainError> {
        if topology.inputs().len() != N_OBS || topology.outputs().len() != N_ACTIONS {
            return Err(TrainError::Dimension(format!(
                "pong needs {N_OBS} inputs and {N_ACTIONS} outputs, topology has {} and {}",
                topology.inputs().len(),
                topology.outputs().len()
            )));
        }
        let engine = Engine::new(topology, params);
        let state = engine.initial_state();
        Ok(Self { engine, state, ticks_per_step })
    }
}

impl PongPolicy for NetPolicy<'_> {
    fn reset(&mut self) {
        self.state = self.engine.initial_state();
    }

    fn act(&mut self, env: &PongEnv) -> Result<Action, TrainError> {
        let obs = env.observe();
        let mut y = Vec::new();
        for _ in 0..self.ticks_per_step {
            y = self.engine.step(&mut self.state, &obs)?.y;
        }
        Ok(Action::argmax(&y))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PongEvalConfig {
    pub grid: Grid,
    pub max_steps: usize,
    pub rollouts: usize,
    /// Seeds the start positions; every policy sees the same starts.
    pub seed: u64,
}

impl Default for PongEvalConfig {
    fn default() -> Self {
        Self { grid: Grid::default(), max_steps: 120, rollouts: 200, seed: 0x9e11 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PongReport {
    /// Hits per ball approach, pooled across rollouts.
    pub hit_rate: f64,
    pub mean_length: f64,
    pub hits: usize,
    pub approaches: usize,
}

pub fn eval_pong_closed_loop(
    policy: &mut dyn PongPolicy,
    cfg: &PongEvalConfig,
) -> Result<PongReport, TrainError> {
    cfg.grid.check().map_err(|e| TrainError::Config(e.to_string()))?;
    let (mut hits, mut approaches, mut steps) = (0, 0, 0);
    for i in 0..cfg.rollouts {
        let mut rng = SeededRng::new(derive_seed(cfg.seed, i as u64));
        let mut env = PongEnv::reset(cfg.grid, &mut rng);
        policy.reset();
        while !env.done && env.steps < cfg.max_steps {
            let a = policy.act(&env)?;
            env.step(a);
        }
        hits += env.hits;
        approaches += env.approaches;
        steps += env.steps;
    }
    let hit_rate = if approaches == 0 { 0.0 } else { hits as f64 / approaches as f64 };
    let mean_length = if cfg.rollouts == 0 { 0.0 } else { steps as f64 / cfg.rollouts as f64 };
    Ok(PongReport { hit_rate, mean_length, hits, approaches })
}

/// Uniform-random baseline on the same starts.
pub fn random_baseline(cfg: &PongEvalConfig) -> PongReport {
    let mut policy = RandomPolicy(SeededRng::new(derive_seed(cfg.seed, u64::MAX)));
    eval_pong_closed_loop(&mut policy, cfg).expect("random policy cannot fail")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::pavlov::{gen_pavlov, PavlovConfig};
    use crate::topology::{build_random, RandomTopologySpec};

    struct Oracle;
    impl ResponseModel for Oracle {
        fn respond(&self, ep: &Episode) -> Result<Vec<Vec<f64>>, TrainError> {
            Ok(ep.y.clone())
        }
        fn threshold(&self) -> f64 {
            0.5
        }
    }

    struct Constant(f64);
    impl ResponseModel for Constant {
        fn respond(&self, ep: &Episode) -> Result<Vec<Vec<f64>>, TrainError> {
            Ok(vec![vec![self.0]; ep.len()])
        }
        fn threshold(&self) -> f64 {
            0.5
        }
    }

    #[test]
    fn oracle_scores_one() {
        let d = gen_pavlov(&PavlovConfig { episodes: 100, ..Default::default() }).unwrap();
        assert_eq!(eval_pavlov_acquisition(&Oracle, &d).unwrap().accuracy, 1.0);
    }

    #[test]
    fn constant_response_scores_the_positive_share() {
        // m in {1, 2} with K = 2: half the combinations are negatives.
        let cfg = PavlovConfig { episodes: 400, train_len: (1, 2), ..Default::default() };
        let d = gen_pavlov(&cfg).unwrap();
        let positives = d.episodes.iter().filter(|e| e.meta_usize("m").unwrap() >= 2).count();
        let r = eval_pavlov_acquisition(&Constant(1.0), &d).unwrap();
        assert_eq!(r.accuracy, positives as f64 / 400.0);
        assert!((r.accuracy - 0.5).abs() < 0.1);
        assert_eq!(r.accuracy_where(|m| m < 2), Some(0.0));
        assert_eq!(r.accuracy_where(|m| m >= 2), Some(1.0));
    }

    #[test]
    fn untrained_net_reports_something() {
        let t = build_random(&RandomTopologySpec::default()).unwrap();
        let p = ParameterSet::from_topology(&t);
        let d = gen_pavlov(&PavlovConfig { episodes: 20, ..Default::default() }).unwrap();
        let model = NetModel { topology: &t, params: &p, ticks_per_step: 3, loss: LossKind::Bce };
        let r = eval_pavlov_acquisition(&model, &d).unwrap();
        assert!((0.0..=1.0).contains(&r.accuracy));
    }

    #[test]
    fn expert_hits_everything() {
        let r = eval_pong_closed_loop(&mut ExpertPolicy, &PongEvalConfig::default()).unwrap();
        assert_eq!(r.hit_rate, 1.0);
        assert!(r.approaches >= 200);
    }

    #[test]
    fn random_baseline_is_low() {
        let cfg = PongEvalConfig { rollouts: 1000, ..Default::default() };
        let r = random_baseline(&cfg);
        assert!(r.approaches >= 1000);
        assert!(r.hit_rate > 0.1 && r.hit_rate < 0.6, "{r:?}");
    }

    #[test]
    fn zero_net_is_deterministic() {
        let spec = RandomTopologySpec { n_inputs: 5, n_outputs: 3, n_hidden: 4, ..Default::default() };
        let t = build_random(&spec).unwrap();
        let mut p = ParameterSet::from_topology(&t);
        p.values_mut().fill(0.0);
        let cfg = PongEvalConfig { rollouts: 10, ..Default::default() };
        let a = eval_pong_closed_loop(&mut NetPolicy::new(&t, &p, 3).unwrap(), &cfg).unwrap();
        let b = eval_pong_closed_loop(&mut NetPolicy::new(&t, &p, 3).unwrap(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_dims_rejected() {
        let t = build_random(&RandomTopologySpec::default()).unwrap();
        let p = ParameterSet::from_topology(&t);
        assert!(matches!(NetPolicy::new(&t, &p, 3), Err(TrainError::Dimension(_))));
    }
}
