//! Parameter update rules.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptimizerKind {
    #[serde(rename = "sgd")]
    Sgd,
    /// Adam: bias-corrected first and second moment estimates.
    #[default]
    #[serde(rename = "adaptive-moments")]
    Adam,
}

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Optimizer with its accumulated moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Self {
        let moments = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => n_params,
        };
        Self { kind, lr, m: vec![0.0; moments], v: vec![0.0; moments], steps: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), grad.len());
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::Adam => {
                let t = self.steps as i32;
                let c1 = 1.0 - BETA1.powi(t);
                let c2 = 1.0 - BETA2.powi(t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = BETA1 * self.m[i] + (1.0 - BETA1) * g;
                    self.v[i] = BETA2 * self.v[i] + (1.0 - BETA2) * g * g;
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    params[i] -= self.lr * m_hat / (v_hat.sqrt() + EPS);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step_is_exact() {
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, 2);
        let mut p = [1.0, -2.0];
        opt.step(&mut p, &[0.5, -3.0]);
        assert_eq!(p, [1.0 - 0.1 * 0.5, -2.0 + 0.1 * 3.0]);
    }

    #[test]
    fn adam_hand_computed() {
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.01, 2);
        let mut p = [0.5, -1.0];
        // First step: m_hat = g, v_hat = g^2, so each move is lr * g / (|g| + eps).
        opt.step(&mut p, &[0.2, -4.0]);
        let expect0 = 0.5 - 0.01 * 0.2 / (0.2 + 1e-8);
        let expect1 = -1.0 + 0.01 * 4.0 / (4.0 + 1e-8);
        assert!((p[0] - expect0).abs() < 1e-12);
        assert!((p[1] - expect1).abs() < 1e-12);

        // Second step with g = (0.1, 1.0), recomputed by hand.
        opt.step(&mut p, &[0.1, 1.0]);
        let m0 = 0.9 * 0.02 + 0.1 * 0.1;
        let v0 = 0.999 * 0.001 * 0.04 + 0.001 * 0.01;
        let m1 = 0.9 * -0.4 + 0.1 * 1.0;
        let v1 = 0.999 * 0.001 * 16.0 + 0.001 * 1.0;
        let (c1, c2) = (1.0 - 0.81, 1.0 - 0.999f64 * 0.999);
        let step = |m: f64, v: f64| 0.01 * (m / c1) / ((v / c2).sqrt() + 1e-8);
        assert!((p[0] - (expect0 - step(m0, v0))).abs() < 1e-12);
        assert!((p[1] - (expect1 - step(m1, v1))).abs() < 1e-12);
    }

    #[test]
    fn zero_lr_keeps_params() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut opt = Optimizer::new(kind, 0.0, 3);
            let mut p = [1.0, 2.0, 3.0];
            opt.step(&mut p, &[1.0, -1.0, 0.5]);
            assert_eq!(p, [1.0, 2.0, 3.0]);
        }
    }
}
