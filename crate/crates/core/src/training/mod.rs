//! Optimization loop, checkpoints, metrics and task evaluation.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod metrics;
pub mod optim;
mod trainer;

use thiserror::Error;

pub use checkpoint::Checkpoint;
pub use config::TrainConfig;
pub use eval::{
    eval_pavlov_acquisition, eval_pong_closed_loop, random_baseline, AcquisitionReport, NetModel,
    NetPolicy, PongEvalConfig, PongReport,
};
pub use metrics::MetricsRow;
pub use optim::{Optimizer, OptimizerKind};
pub use trainer::{train, EvalPlan, EvalTask, TrainOutcome, Trainer, DIVERGENCE_LIMIT};

use crate::autodiff::AutodiffError;
use crate::engine::EngineError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("format mismatch: {0}")]
    Format(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String, checkpoint: Box<Checkpoint> },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{what} hash mismatch: checkpoint has {expected}, found {found}")]
    HashMismatch { what: &'static str, expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
