//! Per-neuron output and state-update functions.
//!
//! Both neuron models keep a single scalar state. Rate neurons squash their
//! drive with `tanh` and emit the new state as output. LIF neurons integrate
//! drive with an explicit Euler step of `ds/dt = -(s - s_rest) + u`, spike
//! when the pre-reset potential reaches `theta`, and hard-reset.

use thiserror::Error;

use crate::topology::LifParams;

#[derive(Clone, Copy, Debug, PartialEq, Error)]
#[error("non-finite {quantity} ({value})")]
pub struct NonFinite {
    pub quantity: &'static str,
    pub value: f64,
}

fn finite(quantity: &'static str, value: f64) -> Result<f64, NonFinite> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(NonFinite { quantity, value })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateUpdate {
    pub v: f64,
    pub s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LifUpdate {
    /// Spike indicator, exactly 0.0 or 1.0.
    pub v: f64,
    pub s: f64,
    /// Membrane potential before the threshold test and reset.
    pub s_pre: f64,
}

impl LifUpdate {
    pub fn spiked(&self) -> bool {
        self.v == 1.0
    }
}

/// `s' = tanh(u + w_s * s_prev + b)`, `v = s'`.
pub fn rate_step(u: f64, s_prev: f64, w_s: f64, b: f64) -> Result<RateUpdate, NonFinite> {
    let u = finite("drive", u)?;
    let s_prev = finite("state", s_prev)?;
    let s = (u + w_s * s_prev + b).tanh();
    let s = finite("state", s)?;
    Ok(RateUpdate { v: s, s })
}

pub fn lif_step(u: f64, s_prev: f64, p: &LifParams) -> Result<LifUpdate, NonFinite> {
    let u = finite("drive", u)?;
    let s_prev = finite("state", s_prev)?;
    let s_pre = s_prev + p.dt * (-(s_prev - p.s_rest) + u);
    let s_pre = finite("membrane potential", s_pre)?;
    if s_pre >= p.theta {
        Ok(LifUpdate { v: 1.0, s: p.s_reset, s_pre })
    } else {
        Ok(LifUpdate { v: 0.0, s: s_pre, s_pre })
    }
}

/// Fast-sigmoid surrogate for `d spike / d s_pre`:
/// `beta / (1 + beta * |s_pre - theta|)^2`.
pub fn lif_surrogate_grad(s_pre: f64, p: &LifParams) -> f64 {
    let x = 1.0 + p.beta * (s_pre - p.theta).abs();
    p.beta / (x * x)
}
