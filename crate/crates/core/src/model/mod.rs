//! Residual CNN restorer mapping 9-channel tri-frame patches to 9-channel
//! restored patches.
//!
//! Layout: a head convolution with leaky ReLU, `residual_blocks` blocks of
//! `conv -> leaky ReLU -> conv` with identity shortcuts, and a tail
//! convolution back to 9 channels. The tail starts at zero and, with the
//! global skip on, its output is added to the input, so a fresh model is
//! exactly the identity.

mod checkpoint;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_pinned, save_checkpoint, CHECKPOINT_VERSION,
};

use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{
    conv2d_backward_impl, conv2d_forward, leaky_relu, leaky_relu_backward, AdamConfig, AdamState, Tensor,
};
use crate::tiling::TRIPATCH_CHANNELS;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub hidden_width: usize,
    pub residual_blocks: usize,
    pub kernel: usize,
    pub slope: f64,
    pub global_skip: bool,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            hidden_width: 32,
            residual_blocks: 4,
            kernel: 3,
            slope: 0.2,
            global_skip: true,
        }
    }
}

impl GeneratorConfig {
    /// Input and output channel count of every generator.
    pub const CHANNELS: usize = TRIPATCH_CHANNELS;

    pub fn validate(&self) -> Result<()> {
        if self.hidden_width == 0 {
            return Err(Error::invalid("hidden width must be positive"));
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return Err(Error::invalid(format!("kernel size must be odd, got {}", self.kernel)));
        }
        if !(0.0..1.0).contains(&self.slope) {
            return Err(Error::invalid(format!(
                "activation slope must lie in [0, 1), got {}",
                self.slope
            )));
        }
        Ok(())
    }

    /// Names and shapes of every parameter tensor, in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let (c, w, k) = (Self::CHANNELS, self.hidden_width, self.kernel);
        let mut v = vec![
            ("head.weight".to_owned(), vec![w, c, k, k]),
            ("head.bias".to_owned(), vec![w]),
        ];
        for b in 0..self.residual_blocks {
            for conv in ["conv1", "conv2"] {
                v.push((format!("block{b}.{conv}.weight"), vec![w, w, k, k]));
                v.push((format!("block{b}.{conv}.bias"), vec![w]));
            }
        }
        v.push(("tail.weight".to_owned(), vec![c, w, k, k]));
        v.push(("tail.bias".to_owned(), vec![c]));
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }
}

/// Which of the two operating points a model was trained for.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BitrateTarget {
    #[default]
    High,
    Low,
}

impl std::fmt::Display for BitrateTarget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BitrateTarget::High => "high",
            BitrateTarget::Low => "low",
        })
    }
}

/// Training provenance stored alongside the weights.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ModelMeta {
    pub seed: u64,
    pub epochs_completed: u64,
    pub steps: u64,
    pub target_bitrate: BitrateTarget,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

static NEXT_INSTANCE: AtomicU64 = AtomicU64::new(1);

fn next_instance() -> u64 {
    NEXT_INSTANCE.fetch_add(1, Ordering::Relaxed)
}

/// Generator weights, optimizer state and provenance.
///
/// Parameters and Adam moments always hold `f32`-representable values so a
/// checkpoint round trip is lossless.
#[derive(Debug)]
pub struct GeneratorModel {
    config: GeneratorConfig,
    params: Vec<Param>,
    adam: Vec<AdamState>,
    pub meta: ModelMeta,
    instance: u64,
    revision: u64,
}

impl Clone for GeneratorModel {
    fn clone(&self) -> Self {
        Self {
            config: self.config,
            params: self.params.clone(),
            adam: self.adam.clone(),
            meta: self.meta,
            instance: next_instance(),
            revision: 0,
        }
    }
}

impl PartialEq for GeneratorModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params && self.adam == other.adam && self.meta == other.meta
    }
}

/// Activations saved by [`GeneratorModel::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    instance: u64,
    revision: u64,
    input: Tensor,
    head_pre: Tensor,
    blocks: Vec<BlockTape>,
    tail_input: Tensor,
}

#[derive(Clone, Debug)]
struct BlockTape {
    input: Tensor,
    pre: Tensor,
    act: Tensor,
}

/// Gradients from [`GeneratorModel::backward`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    /// One tensor per parameter, in [`GeneratorModel::params`] order.
    pub params: Vec<Tensor>,
    pub input: Tensor,
}

impl GeneratorModel {
    /// Kaiming-normal kernels (fan-in, leaky-ReLU gain), zero biases, and a
    /// zero tail.
    pub fn init(config: GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = 2.0 / (1.0 + config.slope * config.slope);
        let params = config
            .param_shapes()
            .into_iter()
            .map(|(name, shape)| {
                let value = if name.ends_with(".bias") || name.starts_with("tail.") {
                    Tensor::zeros(&shape)
                } else {
                    let fan_in: usize = shape[1..].iter().product();
                    let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("positive std");
                    Tensor::from_fn(&shape, |_| normal.sample(&mut rng) as f32 as f64)
                };
                Param { name, value }
            })
            .collect();
        Ok(Self::from_parts(
            config,
            params,
            None,
            ModelMeta {
                seed,
                ..ModelMeta::default()
            },
        ))
    }

    pub(crate) fn from_parts(
        config: GeneratorConfig,
        params: Vec<Param>,
        adam: Option<Vec<AdamState>>,
        meta: ModelMeta,
    ) -> Self {
        let adam = adam.unwrap_or_else(|| {
            params
                .iter()
                .map(|p| AdamState::new(p.value.shape(), AdamConfig::default()))
                .collect()
        });
        Self {
            config,
            params,
            adam,
            meta,
            instance: next_instance(),
            revision: 0,
        }
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn adam(&self) -> &[AdamState] {
        &self.adam
    }

    /// Replaces the optimizer hyperparameters, keeping accumulated moments.
    pub fn set_adam_config(&mut self, config: AdamConfig) {
        for s in &mut self.adam {
            s.config = config;
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Mutable access to one parameter. Invalidates outstanding tapes.
    pub fn param_mut(&mut self, index: usize) -> &mut Tensor {
        self.revision += 1;
        &mut self.params[index].value
    }

    fn weight(&self, i: usize) -> (&Tensor, &Tensor) {
        (&self.params[2 * i].value, &self.params[2 * i + 1].value)
    }

    fn tail_index(&self) -> usize {
        1 + 2 * self.config.residual_blocks
    }

    /// Runs the generator on a `[9, H, W]` patch.
    pub fn forward(&self, input: &Tensor, record_tape: bool) -> Result<(Tensor, Option<Tape>)> {
        let (c, _, _) = input.dims3()?;
        if c != GeneratorConfig::CHANNELS {
            return Err(Error::shape(
                "generator forward",
                format!("expected {} input channels, got {c}", GeneratorConfig::CHANNELS),
            ));
        }
        let slope = self.config.slope;
        let (w, b) = self.weight(0);
        let head_pre = conv2d_forward(input, w, b)?;
        let mut act = leaky_relu(&head_pre, slope)?;
        let mut blocks = Vec::with_capacity(if record_tape { self.config.residual_blocks } else { 0 });
        for blk in 0..self.config.residual_blocks {
            let (w1, b1) = self.weight(1 + 2 * blk);
            let (w2, b2) = self.weight(2 + 2 * blk);
            let pre = conv2d_forward(&act, w1, b1)?;
            let mid = leaky_relu(&pre, slope)?;
            let mut out = conv2d_forward(&mid, w2, b2)?;
            out.add_assign(&act)?;
            if record_tape {
                blocks.push(BlockTape {
                    input: act,
                    pre,
                    act: mid,
                });
            }
            act = out;
        }
        let (wt, bt) = self.weight(self.tail_index());
        let mut out = conv2d_forward(&act, wt, bt)?;
        if self.config.global_skip {
            out.add_assign(input)?;
        }
        let tape = record_tape.then(|| Tape {
            instance: self.instance,
            revision: self.revision,
            input: input.clone(),
            head_pre,
            blocks,
            tail_input: act,
        });
        Ok((out, tape))
    }

    /// Exact gradients of the forward pass that produced `tape`.
    pub fn backward(&self, tape: &Tape, grad_output: &Tensor) -> Result<Gradients> {
        if tape.instance != self.instance || tape.revision != self.revision {
            return Err(Error::invalid(
                "tape was recorded on a different model or before a parameter update",
            ));
        }
        if grad_output.shape() != tape.input.shape() {
            return Err(Error::shape(
                "generator backward",
                format!(
                    "upstream gradient {:?} vs output {:?}",
                    grad_output.shape(),
                    tape.input.shape()
                ),
            ));
        }
        let slope = self.config.slope;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.params.len()];
        let tail = self.tail_index();

        let (g_act, gw, gb) = conv2d_backward_impl(grad_output, &tape.tail_input, self.weight(tail).0, true)?;
        grads[2 * tail] = Some(gw);
        grads[2 * tail + 1] = Some(gb);
        let mut g_act = g_act.expect("requested");

        for (blk, bt) in tape.blocks.iter().enumerate().rev() {
            let (g_mid, gw2, gb2) = conv2d_backward_impl(&g_act, &bt.act, self.weight(2 + 2 * blk).0, true)?;
            let g_pre = leaky_relu_backward(&g_mid.expect("requested"), &bt.pre, slope)?;
            let (g_in, gw1, gb1) = conv2d_backward_impl(&g_pre, &bt.input, self.weight(1 + 2 * blk).0, true)?;
            grads[2 * (2 + 2 * blk)] = Some(gw2);
            grads[2 * (2 + 2 * blk) + 1] = Some(gb2);
            grads[2 * (1 + 2 * blk)] = Some(gw1);
            grads[2 * (1 + 2 * blk) + 1] = Some(gb1);
            g_act.add_assign(&g_in.expect("requested"))?;
        }

        let g_head = leaky_relu_backward(&g_act, &tape.head_pre, slope)?;
        let (g_in, gw, gb) = conv2d_backward_impl(&g_head, &tape.input, self.weight(0).0, true)?;
        grads[0] = Some(gw);
        grads[1] = Some(gb);
        let mut g_input = g_in.expect("requested");
        if self.config.global_skip {
            g_input.add_assign(grad_output)?;
        }
        Ok(Gradients {
            params: grads.into_iter().map(|g| g.expect("every parameter visited")).collect(),
            input: g_input,
        })
    }

    /// One Adam step on every parameter. `l2_decay` adds `l2_decay * param`
    /// to each gradient first. Nothing changes if any gradient is non-finite.
    pub fn apply_gradients(&mut self, grads: &[Tensor], lr: f64, l2_decay: f64) -> Result<()> {
        if grads.len() != self.params.len() {
            return Err(Error::shape(
                "apply_gradients",
                format!("{} gradients for {} parameters", grads.len(), self.params.len()),
            ));
        }
        for (p, g) in self.params.iter().zip(grads) {
            p.value.ensure_same_shape(g, "apply_gradients")?;
            if !g.all_finite() {
                return Err(Error::Numerical(format!("non-finite gradient for {}", p.name)));
            }
        }
        for ((p, g), s) in self.params.iter_mut().zip(grads).zip(&mut self.adam) {
            if l2_decay != 0.0 {
                let mut g = g.clone();
                g.add_scaled(l2_decay, &p.value)?;
                s.step(&mut p.value, &g, lr)?;
            } else {
                s.step(&mut p.value, g, lr)?;
            }
            p.value.round_to_f32();
            s.m.round_to_f32();
            s.v.round_to_f32();
        }
        self.meta.steps += 1;
        self.revision += 1;
        Ok(())
    }
}

/// Convenience wrapper for [`GeneratorModel::init`].
pub fn init_generator(config: GeneratorConfig, seed: u64) -> Result<GeneratorModel> {
    GeneratorModel::init(config, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::finite_diff_check_at;
    use rand::{Rng, SeedableRng};

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.gen::<f64>())
    }

    fn tiny() -> GeneratorConfig {
        GeneratorConfig {
            hidden_width: 8,
            residual_blocks: 2,
            ..GeneratorConfig::default()
        }
    }

    /// Randomizes the tail so the residual path is live.
    fn perturbed(config: GeneratorConfig, seed: u64) -> GeneratorModel {
        let mut m = GeneratorModel::init(config, seed).unwrap();
        let tail = m.tail_index();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for idx in [2 * tail, 2 * tail + 1] {
            for v in m.param_mut(idx).data_mut() {
                *v = rng.gen_range(-0.1..0.1);
            }
        }
        m
    }

    #[test]
    fn default_parameter_count() {
        // head 9*32*9 + 32, four blocks of 2 * (32*32*9 + 32), tail 32*9*9 + 9
        assert_eq!(GeneratorConfig::default().parameter_count(), 2624 + 4 * 2 * 9248 + 2601);
        assert_eq!(GeneratorConfig::default().parameter_count(), 79209);
        let m = GeneratorModel::init(GeneratorConfig::default(), 0).unwrap();
        assert_eq!(m.parameter_count(), 79209);
    }

    #[test]
    fn init_is_deterministic() {
        let a = GeneratorModel::init(tiny(), 5).unwrap();
        let b = GeneratorModel::init(tiny(), 5).unwrap();
        assert_eq!(a, b);
        let c = GeneratorModel::init(tiny(), 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fresh_model_is_identity() {
        let m = GeneratorModel::init(GeneratorConfig::default(), 1).unwrap();
        for &s in &[16, 23] {
            let x = random(&[9, s, s], s as u64);
            let (y, _) = m.forward(&x, false).unwrap();
            assert!(y.max_abs_diff(&x).unwrap() < 1e-12);
        }
    }

    #[test]
    fn output_shape_follows_input() {
        let m = perturbed(tiny(), 2);
        for &s in &[16, 96, 128] {
            let (y, _) = m.forward(&random(&[9, s, s], 1), false).unwrap();
            assert_eq!(y.shape(), &[9, s, s]);
        }
        let (y, _) = m.forward(&random(&[9, 5, 7], 1), false).unwrap();
        assert_eq!(y.shape(), &[9, 5, 7]);
    }

    #[test]
    fn wrong_channel_count_rejected() {
        let m = GeneratorModel::init(tiny(), 0).unwrap();
        assert!(m.forward(&Tensor::zeros(&[3, 16, 16]), false).is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        for cfg in [
            GeneratorConfig { kernel: 4, ..tiny() },
            GeneratorConfig {
                hidden_width: 0,
                ..tiny()
            },
            GeneratorConfig { slope: 1.0, ..tiny() },
        ] {
            assert!(GeneratorModel::init(cfg, 0).is_err());
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let m = perturbed(tiny(), 3);
        let x = random(&[9, 12, 12], 3);
        let (_, tape) = m.forward(&x, true).unwrap();
        let g = m.backward(&tape.unwrap(), &Tensor::zeros(&[9, 12, 12])).unwrap();
        assert!(g.params.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn skip_passes_gradient_through_when_residual_is_zero() {
        let m = GeneratorModel::init(tiny(), 4).unwrap();
        let x = random(&[9, 10, 10], 4);
        let go = random(&[9, 10, 10], 5);
        let (_, tape) = m.forward(&x, true).unwrap();
        let g = m.backward(&tape.unwrap(), &go).unwrap();
        // Zero tail weights block the residual path to the input.
        assert_eq!(g.input, go);
    }

    #[test]
    fn stale_tape_rejected() {
        let mut m = perturbed(tiny(), 6);
        let x = random(&[9, 8, 8], 6);
        let (_, tape) = m.forward(&x, true).unwrap();
        let tape = tape.unwrap();
        let other = m.clone();
        assert!(other.backward(&tape, &x).is_err());
        m.param_mut(0).data_mut()[0] += 0.1;
        assert!(m.backward(&tape, &x).is_err());
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let m = perturbed(tiny(), 7);
        let x = random(&[9, 16, 16], 7);
        let proj = random(&[9, 16, 16], 8).map(|v| v - 0.5);
        let (_, tape) = m.forward(&x, true).unwrap();
        let g = m.backward(&tape.unwrap(), &proj).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (pi, p) in m.params().iter().enumerate() {
            let coords: Vec<usize> = (0..p.value.len().min(12))
                .map(|_| rng.gen_range(0..p.value.len()))
                .collect();
            let r = finite_diff_check_at(
                |t| {
                    let mut mm = m.clone();
                    *mm.param_mut(pi) = t.clone();
                    let (y, _) = mm.forward(&x, false)?;
                    Ok(y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum())
                },
                &g.params[pi],
                &p.value,
                1e-5,
                &coords,
            )
            .unwrap();
            assert!(r.max_rel_error < 1e-3, "{}: {r:?}", p.name);
        }
    }

    #[test]
    fn adam_update_keeps_f32_values() {
        let mut m = perturbed(tiny(), 10);
        let grads: Vec<Tensor> = m.params().iter().map(|p| p.value.map(|v| v + 0.3)).collect();
        m.apply_gradients(&grads, 1e-3, 0.0).unwrap();
        assert_eq!(m.meta.steps, 1);
        for p in m.params() {
            assert!(p.value.data().iter().all(|&v| v == v as f32 as f64));
        }
        let mut bad = grads.clone();
        bad[3].data_mut()[0] = f64::NAN;
        let before = m.clone();
        assert!(m.apply_gradients(&bad, 1e-3, 0.0).is_err());
        assert_eq!(m, before);
    }
}
