use super::Tensor;
use crate::error::{Error, Result};

/// Learning-rate multiplier applied once per completed decay interval.
pub const LR_DECAY_FACTOR: f64 = 0.1;
/// Epochs per decay interval.
pub const LR_DECAY_INTERVAL: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates for one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(shape: &[usize], config: AdamConfig) -> Self {
        Self {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            t: 0,
            config,
        }
    }

    /// In-place bias-corrected Adam update. Nothing is modified when the
    /// gradient contains a non-finite value.
    pub fn step(&mut self, param: &mut Tensor, grad: &Tensor, lr: f64) -> Result<()> {
        param.ensure_same_shape(grad, "adam_step")?;
        param.ensure_same_shape(&self.m, "adam_step")?;
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
        }
        if let Some(i) = grad.data().iter().position(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient value {} at index {i}",
                grad.data()[i]
            )));
        }
        let AdamConfig { beta1, beta2, eps } = self.config;
        self.t += 1;
        let t = i32::try_from(self.t).unwrap_or(i32::MAX);
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let m = self.m.data_mut();
        let v = self.v.data_mut();
        for (((p, &g), m), v) in param.data_mut().iter_mut().zip(grad.data()).zip(m).zip(v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Pure Adam step: returns the updated parameter and state, leaving the
/// inputs untouched.
pub fn adam_step(param: &Tensor, grad: &Tensor, state: &AdamState, lr: f64) -> Result<(Tensor, AdamState)> {
    let mut p = param.clone();
    let mut s = state.clone();
    s.step(&mut p, grad, lr)?;
    Ok((p, s))
}

/// Step schedule: `initial_lr * 0.1^floor(epoch / 100)`.
pub fn lr_at_epoch(epoch: u64, initial_lr: f64) -> f64 {
    let intervals = i32::try_from(epoch / LR_DECAY_INTERVAL).unwrap_or(i32::MAX);
    initial_lr * LR_DECAY_FACTOR.powi(intervals)
}
