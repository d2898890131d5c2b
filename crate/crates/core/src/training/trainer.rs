use std::time::Instant;

use rayon::prelude::*;

use super::checkpoint::Checkpoint;
use super::config::TrainConfig;
use super::eval::{eval_pavlov_acquisition, eval_pong_closed_loop, NetModel, NetPolicy, PongEvalConfig};
use super::metrics::MetricsRow;
use super::optim::Optimizer;
use super::TrainError;
use crate::autodiff::{full_bptt, sequence_loss, tbptt_gradients, AutodiffError, Gradient};
use crate::datasets::{Dataset, Episode};
use crate::params::ParameterSet;
use crate::rng::SeededRng;
use crate::topology::NetworkTopology;

/// Mean batch loss above which training aborts.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Clone, Debug, Default)]
pub enum EvalTask {
    #[default]
    None,
    /// Acquisition accuracy on the evaluation dataset.
    Pavlov,
    /// Closed-loop hit rate.
    Pong(PongEvalConfig),
}

#[derive(Clone, Debug, Default)]
pub struct EvalPlan {
    /// Held-out episodes scored with the training loss.
    pub dataset: Option<Dataset>,
    pub task: EvalTask,
}

pub struct Trainer<'a> {
    topology: &'a NetworkTopology,
    train: Vec<Episode>,
    eval_raw: Option<Dataset>,
    eval_held: Vec<Episode>,
    task: EvalTask,
    config: TrainConfig,
    params: ParameterSet,
    optimizer: Optimizer,
    rng: SeededRng,
    epoch: usize,
    pool: Option<rayon::ThreadPool>,
}

fn check_dims(topology: &NetworkTopology, d: &Dataset, what: &str) -> Result<(), TrainError> {
    let dims = d.dims();
    if dims.inputs != topology.inputs().len() || dims.outputs != topology.outputs().len() {
        return Err(TrainError::Dimension(format!(
            "{what} has {} inputs / {} outputs, topology has {} / {}",
            dims.inputs,
            dims.outputs,
            topology.inputs().len(),
            topology.outputs().len()
        )));
    }
    Ok(())
}

impl<'a> Trainer<'a> {
    pub fn new(
        topology: &'a NetworkTopology,
        dataset: &Dataset,
        config: TrainConfig,
        eval: EvalPlan,
    ) -> Result<Self, TrainError> {
        config.check()?;
        check_dims(topology, dataset, "training dataset")?;
        if let Some(d) = &eval.dataset {
            check_dims(topology, d, "evaluation dataset")?;
        }
        if matches!(eval.task, EvalTask::Pavlov) && eval.dataset.is_none() {
            return Err(TrainError::Config("acquisition metric needs an evaluation dataset".into()));
        }
        let ticks = config.ticks_per_step;
        let mut params = ParameterSet::from_topology(topology);
        params.set_frozen(&config.frozen);
        let pool = match config.workers {
            0 => None,
            n => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| TrainError::Config(e.to_string()))?,
            ),
        };
        Ok(Self {
            topology,
            train: dataset.episodes.iter().map(|e| e.expand_ticks(ticks)).collect(),
            eval_held: eval
                .dataset
                .as_ref()
                .map(|d| d.episodes.iter().map(|e| e.expand_ticks(ticks)).collect())
                .unwrap_or_default(),
            eval_raw: eval.dataset,
            task: eval.task,
            optimizer: Optimizer::new(config.optimizer, config.lr, params.len()),
            rng: SeededRng::new(config.seed),
            params,
            config,
            epoch: 0,
            pool,
        })
    }

    /// Continue from `ck`. The checkpoint must come from the same topology
    /// and configuration (up to `epochs` and `workers`) unless `force`.
    pub fn resume(
        topology: &'a NetworkTopology,
        dataset: &Dataset,
        config: TrainConfig,
        eval: EvalPlan,
        ck: &Checkpoint,
        force: bool,
    ) -> Result<Self, TrainError> {
        ck.ensure_compatible(topology, &config, force)?;
        let mut t = Self::new(topology, dataset, config, eval)?;
        t.params = ck.param_set(topology)?;
        if t.optimizer.m.len() != ck.optimizer.m.len() && !force {
            return Err(TrainError::Checkpoint("optimizer state does not fit".into()));
        }
        t.optimizer = ck.optimizer.clone();
        t.optimizer.lr = t.config.lr;
        t.rng = ck.rng.clone();
        t.epoch = ck.epoch;
        Ok(t)
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.epoch, &self.params, &self.optimizer, &self.rng, &self.config, self.topology)
    }

    fn episode_grad(&self, ep: &Episode) -> Result<(f64, Gradient), AutodiffError> {
        let mask = ep.mask.as_deref();
        let (t, p, loss) = (self.topology, &self.params, self.config.loss);
        match (self.config.k1, self.config.k2) {
            (Some(k1), Some(k2)) => tbptt_gradients(t, p, &ep.x, &ep.y, mask, loss, k1, k2),
            _ => full_bptt(t, p, &ep.x, &ep.y, mask, loss),
        }
    }

    /// Per-episode results in batch order, whatever the thread count.
    fn batch_grads(&self, batch: &[usize]) -> Vec<Result<(f64, Gradient), AutodiffError>> {
        let work = || batch.par_iter().map(|&i| self.episode_grad(&self.train[i])).collect();
        match &self.pool {
            Some(pool) => pool.install(work),
            None => work(),
        }
    }

    fn diverged(&self, reason: String) -> TrainError {
        let mut checkpoint = self.checkpoint();
        checkpoint.diverged = true;
        TrainError::Diverged { epoch: self.epoch + 1, reason, checkpoint: Box::new(checkpoint) }
    }

    /// One pass over the shuffled training set, then evaluation if due.
    pub fn run_epoch(&mut self) -> Result<MetricsRow, TrainError> {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        self.rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            let mut grad = Gradient::zeros(self.params.len());
            let mut batch_loss = 0.0;
            for result in self.batch_grads(batch) {
                let (loss, g) = match result {
                    Ok(v) => v,
                    Err(AutodiffError::Engine(e)) => return Err(self.diverged(e.to_string())),
                    Err(e @ AutodiffError::NonFiniteLoss { .. }) => return Err(self.diverged(e.to_string())),
                    Err(e) => return Err(e.into()),
                };
                batch_loss += loss;
                grad.add_assign(&g);
            }
            let n = batch.len() as f64;
            if !(batch_loss / n).is_finite() || batch_loss / n > DIVERGENCE_LIMIT {
                return Err(self.diverged(format!("mean batch loss {}", batch_loss / n)));
            }
            loss_sum += batch_loss;
            grad.scale(1.0 / n);
            self.params.mask_frozen(&mut grad.0);
            if let Some(c) = self.config.grad_clip {
                grad.clip_norm(c);
            }
            if grad.0.iter().any(|g| !g.is_finite()) {
                return Err(self.diverged("non-finite gradient".into()));
            }
            self.optimizer.step(self.params.values_mut(), &grad.0);
        }
        self.epoch += 1;

        let train_loss = if self.train.is_empty() { 0.0 } else { loss_sum / self.train.len() as f64 };
        let due = self.config.eval_stride > 0 && self.epoch.is_multiple_of(self.config.eval_stride);
        let (eval_loss, task_metric) = if due { self.evaluate()? } else { (None, None) };
        Ok(MetricsRow {
            epoch: self.epoch,
            train_loss,
            eval_loss,
            task_metric,
            wall_seconds: started.elapsed().as_secs_f64(),
        })
    }

    /// `(eval loss, task metric)` under the current parameters.
    pub fn evaluate(&self) -> Result<(Option<f64>, Option<f64>), TrainError> {
        let eval_loss = if self.eval_held.is_empty() {
            None
        } else {
            let losses: Vec<f64> = self
                .eval_held
                .par_iter()
                .map(|ep| {
                    sequence_loss(self.topology, &self.params, &ep.x, &ep.y, ep.mask.as_deref(), self.config.loss)
                })
                .collect::<Result<_, _>>()?;
            Some(losses.iter().sum::<f64>() / losses.len() as f64)
        };
        let ticks = self.config.ticks_per_step;
        let task_metric = match &self.task {
            EvalTask::None => None,
            EvalTask::Pavlov => {
                let model = NetModel {
                    topology: self.topology,
                    params: &self.params,
                    ticks_per_step: ticks,
                    loss: self.config.loss,
                };
                let d = self.eval_raw.as_ref().expect("checked at construction");
                Some(eval_pavlov_acquisition(&model, d)?.accuracy)
            }
            EvalTask::Pong(cfg) => {
                let mut policy = NetPolicy::new(self.topology, &self.params, ticks)?;
                Some(eval_pong_closed_loop(&mut policy, cfg)?.hit_rate)
            }
        };
        Ok((eval_loss, task_metric))
    }
}

pub struct TrainOutcome {
    pub params: ParameterSet,
    pub history: Vec<MetricsRow>,
}

/// Run `config.epochs` epochs from fresh parameters.
pub fn train(
    topology: &NetworkTopology,
    dataset: &Dataset,
    config: TrainConfig,
    eval: EvalPlan,
) -> Result<TrainOutcome, TrainError> {
    let epochs = config.epochs;
    let mut trainer = Trainer::new(topology, dataset, config, eval)?;
    let mut history = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        history.push(trainer.run_epoch()?);
    }
    Ok(TrainOutcome { params: trainer.params, history })
}
