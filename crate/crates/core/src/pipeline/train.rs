//! Perceptual-loss training of the generator.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::dataset::PatchPair;
use crate::error::{Error, Result};
use crate::loss::{CombinedLoss, LossWeights, PatchLoss};
use crate::metrics::psnr;
use crate::model::{BitrateTarget, GeneratorConfig, GeneratorModel};
use crate::tensor::{lr_at_epoch, AdamConfig, Tensor};

/// Training hyperparameters. Every field has a default, so a config file
/// only needs the values it changes.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub epochs: u64,
    pub initial_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub loss: LossWeights,
    pub generator: GeneratorConfig,
    /// Use only the first `n` pairs of the dataset.
    pub dataset_size: Option<usize>,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<u64>,
    /// Coefficient of an L2 penalty on all parameters, added to each gradient.
    pub l2_weight_decay: f64,
    pub target_bitrate: BitrateTarget,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 100,
            initial_lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            loss: LossWeights::default(),
            generator: GeneratorConfig::default(),
            dataset_size: None,
            max_steps: None,
            l2_weight_decay: 0.0,
            target_bitrate: BitrateTarget::High,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !positive(self.initial_lr) || !positive(self.eps) {
            return Err(Error::invalid("initial_lr and eps must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid("beta1 and beta2 must lie in [0, 1)"));
        }
        if !(self.l2_weight_decay >= 0.0 && self.l2_weight_decay.is_finite()) {
            return Err(Error::invalid("l2_weight_decay must be >= 0"));
        }
        if self.dataset_size == Some(0) || self.max_steps == Some(0) {
            return Err(Error::invalid("dataset_size and max_steps must be positive when set"));
        }
        let w = &self.loss;
        if [w.l1, w.ssim, w.l2, w.msssim]
            .iter()
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return Err(Error::invalid("loss weights must be finite and >= 0"));
        }
        self.generator.validate()
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: u64,
    pub lr: f64,
    pub steps: u64,
    /// Mean pre-update loss over every sample seen this epoch.
    pub mean_loss: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: GeneratorModel,
    pub log: Vec<EpochLog>,
}

/// Loss and parameter gradients for one pair.
fn sample_grads(model: &GeneratorModel, loss: &dyn PatchLoss, pair: &PatchPair) -> Result<(f64, Vec<Tensor>)> {
    let (out, tape) = model.forward(&pair.degraded.data, true)?;
    let lv = loss.evaluate(&out, &pair.pristine)?;
    let g = model.backward(&tape.expect("tape requested"), &lv.grad)?;
    Ok((lv.total, g.params))
}

/// Batch-mean loss and gradients. Samples run in parallel; their gradients
/// are summed in dataset order so the result does not depend on scheduling.
pub fn batch_gradients(
    model: &GeneratorModel,
    loss: &dyn PatchLoss,
    batch: &[&PatchPair],
) -> Result<(f64, Vec<f64>, Vec<Tensor>)> {
    let per: Vec<(f64, Vec<Tensor>)> = batch
        .par_iter()
        .map(|p| sample_grads(model, loss, p))
        .collect::<Result<_>>()?;
    let mut iter = per.into_iter();
    let (l0, mut acc) = iter.next().ok_or_else(|| Error::invalid("empty batch"))?;
    let mut losses = vec![l0];
    for (l, g) in iter {
        losses.push(l);
        for (a, b) in acc.iter_mut().zip(&g) {
            a.add_assign(b)?;
        }
    }
    let inv = 1.0 / batch.len() as f64;
    let acc = acc.into_iter().map(|t| t.scale(inv)).collect();
    Ok((losses.iter().sum::<f64>() * inv, losses, acc))
}

/// Trains a freshly initialized generator (seeded by `config.seed`).
pub fn train(config: &TrainingConfig, dataset: &[PatchPair]) -> Result<TrainOutcome> {
    config.validate()?;
    let model = GeneratorModel::init(config.generator, config.seed)?;
    train_from(model, config, dataset)
}

/// Continues training `model`. Shuffling is seeded by `config.seed`.
pub fn train_from(mut model: GeneratorModel, config: &TrainingConfig, dataset: &[PatchPair]) -> Result<TrainOutcome> {
    config.validate()?;
    let n = config.dataset_size.map_or(dataset.len(), |k| k.min(dataset.len()));
    if n == 0 {
        return Err(Error::invalid("training dataset is empty"));
    }
    let data = &dataset[..n];
    model.set_adam_config(config.adam());
    model.meta.target_bitrate = config.target_bitrate;
    let loss = CombinedLoss { weights: config.loss };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::new();
    let mut steps = 0u64;

    'epochs: for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let lr = lr_at_epoch(epoch, config.initial_lr);
        let (mut loss_sum, mut seen, mut epoch_steps) = (0.0, 0usize, 0u64);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&PatchPair> = chunk.iter().map(|&i| &data[i]).collect();
            let (_, losses, grads) = batch_gradients(&model, &loss, &batch)?;
            if let Some(k) = losses.iter().position(|l| !l.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite loss in epoch {epoch}, batch {b} (dataset index {})",
                    chunk[k]
                )));
            }
            model
                .apply_gradients(&grads, lr, config.l2_weight_decay)
                .map_err(|e| Error::Numerical(format!("epoch {epoch}, batch {b}: {e}")))?;
            loss_sum += losses.iter().sum::<f64>();
            seen += losses.len();
            steps += 1;
            epoch_steps += 1;
            if config.max_steps.is_some_and(|m| steps >= m) {
                log.push(EpochLog {
                    epoch,
                    lr,
                    steps: epoch_steps,
                    mean_loss: loss_sum / seen as f64,
                });
                model.meta.epochs_completed += 1;
                break 'epochs;
            }
        }
        let entry = EpochLog {
            epoch,
            lr,
            steps: epoch_steps,
            mean_loss: loss_sum / seen as f64,
        };
        log::info!(
            "epoch {epoch}: loss {:.6} lr {lr:e} steps {epoch_steps}",
            entry.mean_loss
        );
        log.push(entry);
        model.meta.epochs_completed += 1;
    }
    Ok(TrainOutcome { model, log })
}

/// Mean combined loss of `model` over `pairs`.
pub fn mean_loss(model: &GeneratorModel, weights: &LossWeights, pairs: &[PatchPair]) -> Result<f64> {
    let loss = CombinedLoss { weights: *weights };
    let v: Vec<f64> = pairs
        .par_iter()
        .map(|p| {
            let (out, _) = model.forward(&p.degraded.data, false)?;
            Ok(loss.evaluate(&out, &p.pristine)?.total)
        })
        .collect::<Result<_>>()?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Mean patch PSNR of the reconstructed centre frame (output channels 3..6)
/// against the pristine centre, for the model output and the unprocessed
/// input. Returns `(enhanced_db, baseline_db)`.
pub fn heldout_psnr(model: &GeneratorModel, pairs: &[PatchPair]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::invalid("no held-out pairs"));
    }
    let v: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|p| {
            let (out, _) = model.forward(&p.degraded.data, false)?;
            let target = p.pristine.channels(3, 3)?;
            Ok((
                psnr(&out.channels(3, 3)?, &target, 1.0)?,
                psnr(&p.degraded.data.channels(3, 3)?, &target, 1.0)?,
            ))
        })
        .collect::<Result<_>>()?;
    let k = v.len() as f64;
    Ok((
        v.iter().map(|x| x.0).sum::<f64>() / k,
        v.iter().map(|x| x.1).sum::<f64>() / k,
    ))
}
