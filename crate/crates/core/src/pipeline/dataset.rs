//! Training pairs cut from degraded/pristine clip pairs, and their file format.
//!
//! ```text
//! magic "MFPPDSET" | version u32 | count u64 | patch size u32 | channels u32
//! per record: clip u32, center frame u32, anchor x u32, anchor y u32,
//!             augmentation u8, degraded f32 * C*S*S, pristine f32 * C*S*S
//! ```

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::degrade::{degrade_clip, DegradeSpec};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::frame_io::Clip;
use crate::tensor::Tensor;
use crate::tiling::{compute_layout, stack_frames, triframe_indices, TriPatch, PATCH_SIZE, TRIPATCH_CHANNELS};

const MAGIC: &[u8; 8] = b"MFPPDSET";
pub const DATASET_VERSION: u32 = 1;

/// Square-preserving rotation or flip applied to all channels of a patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Augmentation {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    FlipH,
    FlipV,
}

impl Augmentation {
    pub const ALL: [Augmentation; 6] = [
        Augmentation::Identity,
        Augmentation::Rot90,
        Augmentation::Rot180,
        Augmentation::Rot270,
        Augmentation::FlipH,
        Augmentation::FlipV,
    ];

    pub fn inverse(self) -> Self {
        match self {
            Augmentation::Rot90 => Augmentation::Rot270,
            Augmentation::Rot270 => Augmentation::Rot90,
            a => a,
        }
    }

    fn code(self) -> u8 {
        Self::ALL.iter().position(|&a| a == self).expect("listed") as u8
    }

    fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }

    /// Source coordinate for output pixel `(x, y)` in an `s`-wide square.
    fn source(self, x: usize, y: usize, s: usize) -> (usize, usize) {
        let m = s - 1;
        match self {
            Augmentation::Identity => (x, y),
            // counter-clockwise quarter turn
            Augmentation::Rot90 => (m - y, x),
            Augmentation::Rot180 => (m - x, m - y),
            Augmentation::Rot270 => (y, m - x),
            Augmentation::FlipH => (m - x, y),
            Augmentation::FlipV => (x, m - y),
        }
    }

    /// Applies the transform to every channel of a `[C, S, S]` tensor.
    pub fn apply(self, t: &Tensor) -> Result<Tensor> {
        let (c, h, w) = t.dims3()?;
        if h != w {
            return Err(Error::shape("augment", format!("patch must be square, got {h}x{w}")));
        }
        if self == Augmentation::Identity {
            return Ok(t.clone());
        }
        let mut out = Tensor::zeros(t.shape());
        for ch in 0..c {
            let src = t.plane(ch);
            let dst = out.plane_mut(ch);
            for y in 0..h {
                for x in 0..w {
                    let (sx, sy) = self.source(x, y, w);
                    dst[y * w + x] = src[sy * w + sx];
                }
            }
        }
        Ok(out)
    }
}

/// Degraded network input and its uncompressed target, cut at the same
/// anchor from the same three frames and augmented identically.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchPair {
    pub degraded: TriPatch,
    pub pristine: Tensor,
    pub clip: usize,
    pub augmentation: Augmentation,
}

/// Samples `count` augmented pairs. Half of the anchors come from the
/// inference tiling grid, the rest are uniform over valid positions.
/// Patch values are rounded to `f32` so a saved dataset reloads unchanged.
pub fn build_dataset(pristine_clips: &[Clip], spec: &DegradeSpec, count: usize, seed: u64) -> Result<Vec<PatchPair>> {
    if pristine_clips.is_empty() {
        return Err(Error::invalid("dataset needs at least one clip"));
    }
    if count == 0 {
        return Err(Error::invalid("dataset count must be at least 1"));
    }
    let mut layouts = Vec::with_capacity(pristine_clips.len());
    let mut degraded = Vec::with_capacity(pristine_clips.len());
    for (k, c) in pristine_clips.iter().enumerate() {
        if c.len() < 3 {
            return Err(Error::invalid(format!(
                "clip {k} has {} frames, need at least 3",
                c.len()
            )));
        }
        layouts.push(compute_layout(c.width(), c.height()).map_err(|e| Error::invalid(format!("clip {k}: {e}")))?);
        degraded.push(degrade_clip(c, spec)?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let k = rng.gen_range(0..pristine_clips.len());
        let (clean, dirty, layout) = (&pristine_clips[k], &degraded[k], &layouts[k]);
        let n = clean.len();
        let i = rng.gen_range(0..n);
        let anchor = if rng.gen_bool(0.5) {
            layout.anchors()[rng.gen_range(0..layout.anchors().len())]
        } else {
            (
                rng.gen_range(0..=clean.width() - PATCH_SIZE),
                rng.gen_range(0..=clean.height() - PATCH_SIZE),
            )
        };
        let aug = Augmentation::ALL[rng.gen_range(0..Augmentation::ALL.len())];
        let (a, b, c) = triframe_indices(i, n)?;
        let cut = |clip: &Clip| -> Result<Tensor> {
            let mut t = aug.apply(&stack_frames(
                [clip.frame(a), clip.frame(b), clip.frame(c)],
                anchor,
                PATCH_SIZE,
            ))?;
            t.round_to_f32();
            Ok(t)
        };
        out.push(PatchPair {
            degraded: TriPatch {
                data: cut(dirty)?,
                anchor,
                center_frame_index: i,
            },
            pristine: cut(clean)?,
            clip: k,
            augmentation: aug,
        });
    }
    Ok(out)
}

pub fn encode_dataset(pairs: &[PatchPair]) -> Result<Vec<u8>> {
    let first = pairs
        .first()
        .ok_or_else(|| Error::invalid("cannot encode an empty dataset"))?;
    let (c, s, _) = first.pristine.dims3()?;
    let shape = [c, s, s];
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u32(DATASET_VERSION);
    w.u64(pairs.len() as u64);
    w.u32(s as u32);
    w.u32(c as u32);
    for (i, p) in pairs.iter().enumerate() {
        if p.pristine.shape() != shape || p.degraded.data.shape() != shape {
            return Err(Error::shape(
                "encode_dataset",
                format!("pair {i} does not match shape {shape:?}"),
            ));
        }
        w.u32(p.clip as u32);
        w.u32(p.degraded.center_frame_index as u32);
        w.u32(p.degraded.anchor.0 as u32);
        w.u32(p.degraded.anchor.1 as u32);
        w.u8(p.augmentation.code());
        w.f32s(p.degraded.data.data());
        w.f32s(p.pristine.data());
    }
    Ok(w.buf)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<PatchPair>> {
    let mut r = Reader::new(bytes, "dataset");
    if r.take(8, "magic")? != MAGIC {
        return Err(r.fail_at(0, "bad magic, not a dataset file"));
    }
    let version = r.u32("version")?;
    if version != DATASET_VERSION {
        return Err(r.fail_at(8, format!("unsupported version {version}, expected {DATASET_VERSION}")));
    }
    let count = r.u64("count")? as usize;
    let s = r.u32("patch size")? as usize;
    let c = r.u32("channels")? as usize;
    if s == 0 || c != TRIPATCH_CHANNELS {
        return Err(r.fail_at(20, format!("unsupported patch geometry {c}x{s}x{s}")));
    }
    let record = 17 + 8 * c * s * s;
    if (r.remaining() as u128) != count as u128 * record as u128 {
        return Err(r.fail(format!(
            "{count} records of {record} bytes need {} bytes, found {}",
            count as u128 * record as u128,
            r.remaining()
        )));
    }
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let clip = r.u32("clip")? as usize;
        let center = r.u32("frame")? as usize;
        let anchor = (r.u32("anchor x")? as usize, r.u32("anchor y")? as usize);
        let at = r.offset();
        let augmentation =
            Augmentation::from_code(r.u8("augmentation")?).ok_or_else(|| r.fail_at(at, "unknown augmentation code"))?;
        let degraded = Tensor::new(vec![c, s, s], r.f32s(c * s * s, "degraded patch")?)?;
        let pristine = Tensor::new(vec![c, s, s], r.f32s(c * s * s, "pristine patch")?)?;
        pairs.push(PatchPair {
            degraded: TriPatch {
                data: degraded,
                anchor,
                center_frame_index: center,
            },
            pristine,
            clip,
            augmentation,
        });
    }
    Ok(pairs)
}

pub fn save_dataset(pairs: &[PatchPair], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_dataset(pairs)?).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<PatchPair>> {
    let path = path.as_ref();
    decode_dataset(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
