//! Stage-1 training objective: a fixed blend of L1, SSIM, L2 and MS-SSIM
//! losses, each with its analytic gradient with respect to the prediction.
//!
//! The SSIM-family losses are `1 - metric`, so every component is
//! nonnegative and vanishes when prediction and target agree.

use crate::error::Result;
use crate::metrics::{ms_ssim_with_grad, ssim_and_ms_ssim_with_grad, ssim_with_grad, MsSsimParams, SsimParams};
use crate::tensor::Tensor;

/// Blend weights of the four loss components.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub l1: f64,
    pub ssim: f64,
    pub l2: f64,
    pub msssim: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            l1: 0.3,
            ssim: 0.2,
            l2: 0.1,
            msssim: 0.4,
        }
    }
}

impl LossWeights {
    pub fn sum(&self) -> f64 {
        self.l1 + self.ssim + self.l2 + self.msssim
    }
}

/// Unweighted component losses.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossComponents {
    pub l1: f64,
    pub ssim: f64,
    pub l2: f64,
    pub msssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub components: LossComponents,
    pub grad: Tensor,
}

/// Grid spacing `2^-FIXED_BITS` for order-independent accumulation.
const FIXED_BITS: i32 = 80;
/// Terms are split at `2^-SPLIT_BITS` so both halves convert through `i64`.
const SPLIT_BITS: i32 = 30;
/// Terms at or above this magnitude fall back to a sorted sum.
const FIXED_LIMIT: f64 = (1u64 << 20) as f64;
/// More terms than this could overflow the accumulator.
const FIXED_MAX_TERMS: usize = 1 << 26;

/// Sum that does not depend on how the terms are arranged, so rotating or
/// flipping both inputs gives the same bits.
///
/// Each term is rounded onto a fixed binary grid and accumulated in an
/// `i128`, where addition is associative. Huge or non-finite terms take a
/// sort-then-add path instead.
fn order_free_sum(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let hi_scale = 2f64.powi(SPLIT_BITS);
    let lo_scale = 2f64.powi(FIXED_BITS);
    let (mut hi, mut lo): (i128, i128) = (0, 0);
    for (i, t) in terms.clone().enumerate() {
        if !(t.abs() < FIXED_LIMIT) || i >= FIXED_MAX_TERMS {
            let mut v: Vec<f64> = terms.collect();
            v.sort_unstable_by(f64::total_cmp);
            return v.iter().sum();
        }
        // `a` is the integer part of `t * 2^30`, so `t - a * 2^-30` is exact.
        let a = (t * hi_scale).trunc();
        hi += a as i64 as i128;
        lo += ((t - a / hi_scale) * lo_scale).round() as i64 as i128;
    }
    ((hi << (FIXED_BITS - SPLIT_BITS)) + lo) as f64 / lo_scale
}

/// Mean absolute error; subgradient uses `sign(0) = 0`.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    pred.ensure_same_shape(target, "l1_loss")?;
    let inv_n = 1.0 / pred.len() as f64;
    let value = order_free_sum(pred.data().iter().zip(target.data()).map(|(p, t)| (p - t).abs())) * inv_n;
    let grad = pred.zip_map(target, "l1_loss", |p, t| {
        let d = p - t;
        if d > 0.0 {
            inv_n
        } else if d < 0.0 {
            -inv_n
        } else {
            0.0
        }
    })?;
    Ok((value, grad))
}

/// Mean squared error.
pub fn l2_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    pred.ensure_same_shape(target, "l2_loss")?;
    let inv_n = 1.0 / pred.len() as f64;
    let value = order_free_sum(pred.data().iter().zip(target.data()).map(|(p, t)| (p - t) * (p - t))) * inv_n;
    let grad = pred.zip_map(target, "l2_loss", |p, t| 2.0 * (p - t) * inv_n)?;
    Ok((value, grad))
}

/// `1 - SSIM(pred, target)`.
pub fn ssim_loss(pred: &Tensor, target: &Tensor, params: &SsimParams) -> Result<(f64, Tensor)> {
    let (s, g) = ssim_with_grad(pred, target, params, true)?;
    Ok((1.0 - s, g.expect("gradient requested").scale(-1.0)))
}

/// `1 - MS-SSIM(pred, target)`.
pub fn msssim_loss(pred: &Tensor, target: &Tensor, params: &MsSsimParams) -> Result<(f64, Tensor)> {
    let (s, g) = ms_ssim_with_grad(pred, target, params, true)?;
    Ok((1.0 - s, g.expect("gradient requested").scale(-1.0)))
}

/// Weighted sum of the four component losses and their gradients.
pub fn combined_loss(pred: &Tensor, target: &Tensor, weights: &LossWeights) -> Result<LossValue> {
    pred.ensure_same_shape(target, "combined_loss")?;
    let (l1, g1) = l1_loss(pred, target)?;
    let (l2, g2) = l2_loss(pred, target)?;
    // Both structural terms share their full-resolution moment maps, and
    // their gradients are fused into a single adjoint pass per scale.
    let (s, m, gsm) = ssim_and_ms_ssim_with_grad(
        pred,
        target,
        &MsSsimParams::default(),
        Some((-weights.ssim, -weights.msssim)),
    )?;
    let (ls, lm) = (1.0 - s, 1.0 - m);
    let total = weights.l1 * l1 + weights.ssim * ls + weights.l2 * l2 + weights.msssim * lm;
    let mut grad = gsm.expect("gradient requested");
    grad.add_scaled(weights.l1, &g1)?;
    grad.add_scaled(weights.l2, &g2)?;
    Ok(LossValue {
        total,
        components: LossComponents {
            l1,
            ssim: ls,
            l2,
            msssim: lm,
        },
        grad,
    })
}

/// Objective the trainer minimizes. A future adversarial stage can supply
/// its own implementation.
pub trait PatchLoss: Sync {
    fn evaluate(&self, pred: &Tensor, target: &Tensor) -> Result<LossValue>;
}

/// The four-term perceptual blend.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CombinedLoss {
    pub weights: LossWeights,
}

impl PatchLoss for CombinedLoss {
    fn evaluate(&self, pred: &Tensor, target: &Tensor) -> Result<LossValue> {
        combined_loss(pred, target, &self.weights)
    }
}
