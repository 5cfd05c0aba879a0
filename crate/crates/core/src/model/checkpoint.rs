//! Versioned binary checkpoint format.
//!
//! ```text
//! magic "MFPPCKPT" | version u32 | payload length u64
//! config: hidden_width u32, residual_blocks u32, kernel u32, channels u32,
//!         slope f64, global_skip u8
//! meta:   seed u64, epochs u64, steps u64, bitrate u8 (0 high, 1 low)
//! tensors: count u32, then per tensor
//!         name_len u16, name, ndim u8, dims u32 * ndim, f32 LE data
//! optimizer: flag u8; if 1: beta1 f64, beta2 f64, eps f64, t u64,
//!         then m and v for each tensor in order (f32 LE)
//! ```
//!
//! All integers little-endian. The payload length counts every byte after
//! its own field.

use std::path::Path;

use super::{BitrateTarget, GeneratorConfig, GeneratorModel, ModelMeta, Param};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::tensor::{AdamConfig, AdamState, Tensor};

const MAGIC: &[u8; 8] = b"MFPPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;

pub fn encode_checkpoint(model: &GeneratorModel) -> Vec<u8> {
    let mut w = Writer::new();
    let cfg = model.config();
    w.u32(cfg.hidden_width as u32);
    w.u32(cfg.residual_blocks as u32);
    w.u32(cfg.kernel as u32);
    w.u32(GeneratorConfig::CHANNELS as u32);
    w.f64(cfg.slope);
    w.u8(cfg.global_skip as u8);

    w.u64(model.meta.seed);
    w.u64(model.meta.epochs_completed);
    w.u64(model.meta.steps);
    w.u8(match model.meta.target_bitrate {
        BitrateTarget::High => 0,
        BitrateTarget::Low => 1,
    });

    w.u32(model.params().len() as u32);
    for p in model.params() {
        w.u16(p.name.len() as u16);
        w.bytes(p.name.as_bytes());
        w.u8(p.value.shape().len() as u8);
        for &d in p.value.shape() {
            w.u32(d as u32);
        }
        w.f32s(p.value.data());
    }

    let adam = model.adam();
    let has_state = adam.iter().any(|s| s.t > 0);
    w.u8(has_state as u8);
    if has_state {
        let c = adam[0].config;
        w.f64(c.beta1);
        w.f64(c.beta2);
        w.f64(c.eps);
        w.u64(adam[0].t);
        for s in adam {
            w.f32s(s.m.data());
            w.f32s(s.v.data());
        }
    }

    let mut out = Vec::with_capacity(HEADER_LEN + w.buf.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(w.buf.len() as u64).to_le_bytes());
    out.extend_from_slice(&w.buf);
    out
}

/// Parses a checkpoint. With `pinned`, the stored config must equal it.
pub fn decode_checkpoint(bytes: &[u8], pinned: Option<&GeneratorConfig>) -> Result<GeneratorModel> {
    let mut r = Reader::new(bytes, "checkpoint");
    if r.take(8, "magic")? != MAGIC {
        return Err(r.fail_at(0, "bad magic, not a checkpoint file"));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(r.fail_at(
            8,
            format!("unsupported version {version}, expected {CHECKPOINT_VERSION}"),
        ));
    }
    let payload = r.u64("payload length")?;
    if payload != r.remaining() as u64 {
        return Err(r.fail_at(
            12,
            format!("payload length field says {payload} bytes but {} follow", r.remaining()),
        ));
    }

    let cfg_at = r.offset();
    let hidden_width = r.u32("hidden width")? as usize;
    let residual_blocks = r.u32("residual blocks")? as usize;
    let kernel = r.u32("kernel")? as usize;
    let channels = r.u32("channels")? as usize;
    let slope = r.f64("slope")?;
    let global_skip = match r.u8("global skip")? {
        0 => false,
        1 => true,
        v => return Err(r.fail(format!("global skip flag must be 0 or 1, got {v}"))),
    };
    if channels != GeneratorConfig::CHANNELS {
        return Err(r.fail_at(
            cfg_at,
            format!("channel count {channels}, expected {}", GeneratorConfig::CHANNELS),
        ));
    }
    let config = GeneratorConfig {
        hidden_width,
        residual_blocks,
        kernel,
        slope,
        global_skip,
    };
    config.validate().map_err(|e| r.fail_at(cfg_at, e.to_string()))?;
    if let Some(p) = pinned {
        if *p != config {
            return Err(r.fail_at(cfg_at, format!("stored config {config:?} differs from expected {p:?}")));
        }
    }

    let seed = r.u64("seed")?;
    let epochs_completed = r.u64("epochs")?;
    let steps = r.u64("steps")?;
    let target_bitrate = match r.u8("bitrate tag")? {
        0 => BitrateTarget::High,
        1 => BitrateTarget::Low,
        v => return Err(r.fail(format!("unknown bitrate tag {v}"))),
    };

    let expected = config.param_shapes();
    let count_at = r.offset();
    let count = r.u32("tensor count")? as usize;
    if count != expected.len() {
        return Err(r.fail_at(count_at, format!("{count} tensors, config implies {}", expected.len())));
    }
    let mut params = Vec::with_capacity(count);
    for (name, shape) in &expected {
        let at = r.offset();
        let len = r.u16("tensor name length")? as usize;
        let got =
            std::str::from_utf8(r.take(len, "tensor name")?).map_err(|_| r.fail_at(at, "tensor name is not UTF-8"))?;
        if got != name {
            return Err(r.fail_at(at, format!("tensor '{got}' where '{name}' was expected")));
        }
        let ndim = r.u8("tensor rank")? as usize;
        let mut dims = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            dims.push(r.u32("tensor dim")? as usize);
        }
        if &dims != shape {
            return Err(r.fail_at(
                at,
                format!("tensor '{name}' has shape {dims:?}, config implies {shape:?}"),
            ));
        }
        let data = r.f32s(shape.iter().product(), name)?;
        params.push(Param {
            name: name.clone(),
            value: Tensor::new(dims, data)?,
        });
    }

    let adam = match r.u8("optimizer flag")? {
        0 => None,
        1 => {
            let config = AdamConfig {
                beta1: r.f64("beta1")?,
                beta2: r.f64("beta2")?,
                eps: r.f64("eps")?,
            };
            let t = r.u64("step count")?;
            let mut states = Vec::with_capacity(params.len());
            for p in &params {
                let m = r.f32s(p.value.len(), "first moment")?;
                let v = r.f32s(p.value.len(), "second moment")?;
                states.push(AdamState {
                    m: Tensor::new(p.value.shape().to_vec(), m)?,
                    v: Tensor::new(p.value.shape().to_vec(), v)?,
                    t,
                    config,
                });
            }
            Some(states)
        }
        v => return Err(r.fail(format!("optimizer flag must be 0 or 1, got {v}"))),
    };
    if r.remaining() != 0 {
        return Err(r.fail(format!("{} trailing bytes", r.remaining())));
    }

    Ok(GeneratorModel::from_parts(
        config,
        params,
        adam,
        ModelMeta {
            seed,
            epochs_completed,
            steps,
            target_bitrate,
        },
    ))
}

pub fn save_checkpoint(model: &GeneratorModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<GeneratorModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, None)
}

/// Like [`load_checkpoint`] but refuses a file whose config differs from `config`.
pub fn load_checkpoint_pinned(path: impl AsRef<Path>, config: &GeneratorConfig) -> Result<GeneratorModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, Some(config))
}
