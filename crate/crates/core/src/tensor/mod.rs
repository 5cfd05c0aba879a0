//! Dense real-valued tensors and the small set of differentiable kernels the
//! restorer needs: 2-D convolution, leaky ReLU, Adam, and a finite-difference
//! gradient checker.
//!
//! Everything computes in `f64`. Training stores parameters at single
//! precision (see [`crate::model`]) but the arithmetic stays double.

mod activation;
mod adam;
mod conv;
mod gradcheck;
#[cfg(target_arch = "x86_64")]
pub(crate) mod simd;

pub use activation::{leaky_relu, leaky_relu_backward};
pub use adam::{adam_step, lr_at_epoch, AdamConfig, AdamState, LR_DECAY_FACTOR, LR_DECAY_INTERVAL};
pub use conv::{conv2d_backward, conv2d_forward, Conv2dGrads};
pub(crate) use conv::{conv2d_backward_impl, sum};
pub use gradcheck::{finite_diff_check, finite_diff_check_at, GradCheckReport};

use crate::error::{Error, Result};

/// Row-major dense tensor of `f64` samples.
///
/// The shape is fixed at construction; only the samples may be mutated.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::invalid(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "Tensor::new",
                format!(
                    "shape {shape:?} holds {expected} samples but {} were supplied",
                    data.len()
                ),
            ));
        }
        Ok(Self { shape, data })
    }

    /// Zero tensor. Panics if any extent is zero.
    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    /// Constant tensor. Panics if any extent is zero.
    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(
            !shape.is_empty() && shape.iter().all(|&d| d > 0),
            "tensor extents must be positive, got {shape:?}"
        );
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let mut t = Self::zeros(shape);
        for (i, v) in t.data.iter_mut().enumerate() {
            *v = f(i);
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Interprets the tensor as `[channels, height, width]`.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::shape(
                "dims3",
                format!("expected a 3-D [C, H, W] tensor, got {:?}", self.shape),
            )),
        }
    }

    /// One `[H, W]` plane of a `[C, H, W]` tensor.
    pub fn plane(&self, channel: usize) -> &[f64] {
        let hw = self.shape[1..].iter().product::<usize>();
        &self.data[channel * hw..(channel + 1) * hw]
    }

    pub fn plane_mut(&mut self, channel: usize) -> &mut [f64] {
        let hw = self.shape[1..].iter().product::<usize>();
        &mut self.data[channel * hw..(channel + 1) * hw]
    }

    pub fn ensure_same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.ensure_same_shape(other, op)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.ensure_same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    /// `self += alpha * other`, elementwise.
    pub fn add_scaled(&mut self, alpha: f64, other: &Tensor) -> Result<()> {
        self.ensure_same_shape(other, "add_scaled")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&self, alpha: f64) -> Tensor {
        self.map(|v| alpha * v)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        self.ensure_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Copies channels `start..start + len` of a `[C, H, W]` tensor.
    pub fn channels(&self, start: usize, len: usize) -> Result<Tensor> {
        let (c, h, w) = self.dims3()?;
        if len == 0 || start + len > c {
            return Err(Error::shape(
                "channels",
                format!("channel range {start}..{} outside 0..{c}", start + len),
            ));
        }
        let hw = h * w;
        Ok(Tensor {
            shape: vec![len, h, w],
            data: self.data[start * hw..(start + len) * hw].to_vec(),
        })
    }

    /// Rounds every sample to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }
}
