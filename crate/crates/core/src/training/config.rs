use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::optim::OptimizerKind;
use super::TrainError;
use crate::autodiff::LossKind;
use crate::params::SegmentKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// TBPTT stride in network steps. Unset with `k2` for full BPTT.
    pub k1: Option<usize>,
    pub k2: Option<usize>,
    /// Global gradient norm bound.
    pub grad_clip: Option<f64>,
    pub seed: u64,
    /// Evaluate every this many epochs; 0 disables evaluation.
    pub eval_stride: usize,
    /// Checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_stride: usize,
    /// Network steps each recorded step is held for. Targets are scored on
    /// the last of them.
    pub ticks_per_step: usize,
    pub frozen: Vec<SegmentKind>,
    /// Worker threads for per-episode gradients; 0 uses all cores. Results
    /// do not depend on this value.
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Bce,
            optimizer: OptimizerKind::Adam,
            lr: 3e-3,
            batch_size: 32,
            epochs: 30,
            k1: None,
            k2: None,
            grad_clip: Some(1.0),
            seed: 1,
            eval_stride: 1,
            checkpoint_stride: 0,
            ticks_per_step: 3,
            frozen: Vec::new(),
            workers: 0,
        }
    }
}

impl TrainConfig {
    /// Behavioral-cloning recipe for Pong.
    pub fn pong() -> Self {
        Self { loss: LossKind::Cce, k1: Some(8), k2: Some(16), epochs: 20, ..Self::default() }
    }

    pub fn check(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad(format!("lr {} must be finite and non-negative", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.ticks_per_step == 0 {
            return bad("ticks_per_step must be positive".into());
        }
        match (self.k1, self.k2) {
            (None, None) => {}
            (Some(k1), Some(k2)) if k1 >= 1 && k1 <= k2 => {}
            (k1, k2) => return bad(format!("need 1 <= k1 <= k2, got k1={k1:?} k2={k2:?}")),
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("grad_clip {c} must be positive"));
            }
        }
        Ok(())
    }

    /// SHA-256 of the configuration with `epochs` and `workers` blanked:
    /// neither changes what a given epoch computes, so a run may be resumed
    /// with a longer horizon or a different thread count.
    pub fn identity_hash(&self) -> String {
        let canonical = Self { epochs: 0, workers: 0, ..self.clone() };
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_windows() {
        for (k1, k2) in [(Some(0), Some(4)), (Some(5), Some(4)), (Some(2), None)] {
            assert!(TrainConfig { k1, k2, ..Default::default() }.check().is_err());
        }
        assert!(TrainConfig::pong().check().is_ok());
    }

    #[test]
    fn hash_ignores_horizon_only() {
        let a = TrainConfig::default();
        let b = TrainConfig { epochs: 99, workers: 3, ..a.clone() };
        let c = TrainConfig { lr: 1e-2, ..a.clone() };
        assert_eq!(a.identity_hash(), b.identity_hash());
        assert_ne!(a.identity_hash(), c.identity_hash());
    }
}
