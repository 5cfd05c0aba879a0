//! Blockwise-DCT quantization used as a stand-in for a real codec.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frame_io::{Clip, ColorSpace, Frame};

const BLOCK: usize = 8;

/// Baseline JPEG luminance table, row-major by vertical then horizontal
/// frequency.
const FREQ_WEIGHTS: [f64; 64] = [
    16., 11., 10., 16., 24., 40., 51., 61., //
    12., 12., 14., 19., 26., 58., 60., 55., //
    14., 13., 16., 24., 40., 57., 69., 56., //
    14., 17., 22., 29., 51., 87., 80., 62., //
    18., 22., 37., 56., 68., 109., 103., 77., //
    24., 35., 55., 64., 81., 104., 113., 92., //
    49., 64., 78., 87., 103., 121., 120., 101., //
    72., 92., 95., 98., 112., 100., 103., 99.,
];

/// Codec-proxy settings.
///
/// Each AC coefficient of an orthonormal 8x8 DCT is quantized with step
/// `strength * table / 255`. DC passes through untouched, so flat content
/// survives any strength. `dither_seed` enables subtractive dither.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct DegradeSpec {
    pub block: usize,
    pub strength: f64,
    pub dither_seed: Option<u64>,
}

impl Default for DegradeSpec {
    fn default() -> Self {
        Self {
            block: BLOCK,
            strength: 1.0,
            dither_seed: None,
        }
    }
}

impl DegradeSpec {
    pub fn with_strength(strength: f64) -> Self {
        Self {
            strength,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.block != BLOCK {
            return Err(Error::invalid(format!(
                "only {BLOCK}x{BLOCK} blocks are supported, got {}",
                self.block
            )));
        }
        if !(self.strength >= 0.0 && self.strength.is_finite()) {
            return Err(Error::invalid(format!(
                "strength must be finite and >= 0, got {}",
                self.strength
            )));
        }
        Ok(())
    }
}

fn dct_basis() -> [[f64; BLOCK]; BLOCK] {
    let mut c = [[0.0; BLOCK]; BLOCK];
    let n = BLOCK as f64;
    for (k, row) in c.iter_mut().enumerate() {
        let a = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
        for (i, v) in row.iter_mut().enumerate() {
            *v = a * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * n)).cos();
        }
    }
    c
}

/// `out = C * x * C^T` when `forward`, else `C^T * x * C`.
fn transform(c: &[[f64; BLOCK]; BLOCK], x: &[f64; 64], forward: bool) -> [f64; 64] {
    let m = |a: usize, b: usize| if forward { c[a][b] } else { c[b][a] };
    let mut tmp = [0.0; 64];
    for r in 0..BLOCK {
        for col in 0..BLOCK {
            tmp[r * BLOCK + col] = (0..BLOCK).map(|k| m(r, k) * x[k * BLOCK + col]).sum();
        }
    }
    let mut out = [0.0; 64];
    for r in 0..BLOCK {
        for col in 0..BLOCK {
            out[r * BLOCK + col] = (0..BLOCK).map(|k| tmp[r * BLOCK + k] * m(col, k)).sum();
        }
    }
    out
}

/// Half-sample symmetric index into `0..n`.
fn mirror(i: usize, n: usize) -> usize {
    let period = 2 * n;
    let j = i % period;
    if j < n {
        j
    } else {
        period - 1 - j
    }
}

fn degrade_plane(
    src: &[f64],
    w: usize,
    h: usize,
    spec: &DegradeSpec,
    c: &[[f64; BLOCK]; BLOCK],
    rng: Option<&mut ChaCha8Rng>,
) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    let steps: Vec<f64> = FREQ_WEIGHTS.iter().map(|q| spec.strength * q / 255.0).collect();
    let mut rng = rng;
    for by in (0..h).step_by(BLOCK) {
        for bx in (0..w).step_by(BLOCK) {
            let mut blk = [0.0; 64];
            for y in 0..BLOCK {
                let sy = mirror(by + y, h);
                for x in 0..BLOCK {
                    blk[y * BLOCK + x] = src[sy * w + mirror(bx + x, w)];
                }
            }
            let mut coef = transform(c, &blk, true);
            for (k, v) in coef.iter_mut().enumerate().skip(1) {
                let step = steps[k];
                if step == 0.0 {
                    continue;
                }
                let d = match rng.as_deref_mut() {
                    Some(r) => step * (r.gen::<f64>() - 0.5),
                    None => 0.0,
                };
                *v = ((*v + d) / step).round() * step - d;
            }
            let rec = transform(c, &coef, false);
            for y in 0..BLOCK.min(h - by) {
                for x in 0..BLOCK.min(w - bx) {
                    out[(by + y) * w + bx + x] = rec[y * BLOCK + x].clamp(0.0, 1.0);
                }
            }
        }
    }
    out
}

/// Degrades one YCbCr 4:4:4 frame. `frame_index` decorrelates dither
/// between frames.
pub fn degrade_frame(frame: &Frame, spec: &DegradeSpec, frame_index: u64) -> Result<Frame> {
    spec.validate()?;
    if frame.space() != ColorSpace::YCbCr444 {
        return Err(Error::invalid(format!(
            "degrade expects YCbCr 4:4:4 input, got {}",
            frame.space()
        )));
    }
    if spec.strength == 0.0 {
        return Ok(frame.clone());
    }
    let c = dct_basis();
    let (w, h) = (frame.width(), frame.height());
    let mut rng = spec
        .dither_seed
        .map(|s| ChaCha8Rng::seed_from_u64(s ^ frame_index.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
    let planes = [0, 1, 2].map(|p| degrade_plane(frame.plane(p), w, h, spec, &c, rng.as_mut()));
    Frame::new(w, h, planes, ColorSpace::YCbCr444)
}

pub fn degrade_clip(clip: &Clip, spec: &DegradeSpec) -> Result<Clip> {
    let frames = clip
        .frames()
        .iter()
        .enumerate()
        .map(|(i, f)| degrade_frame(f, spec, i as u64))
        .collect::<Result<Vec<_>>>()?;
    Ok(Clip::new(frames)?.with_frame_rate(clip.frame_rate()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{psnr_frames, PsnrPlanes};
    use crate::pipeline::synthetic_clip;

    #[test]
    fn basis_is_orthonormal() {
        let c = dct_basis();
        for a in 0..BLOCK {
            for b in 0..BLOCK {
                let dot: f64 = (0..BLOCK).map(|i| c[a][i] * c[b][i]).sum();
                assert!((dot - if a == b { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn mirror_indices() {
        assert_eq!(
            (0..8).map(|i| mirror(i, 5)).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 4, 4, 3, 2]
        );
    }

    #[test]
    fn zero_strength_is_identity() {
        let clip = synthetic_clip(37, 21, 3, 1).unwrap();
        let out = degrade_clip(&clip, &DegradeSpec::with_strength(0.0)).unwrap();
        for (a, b) in out.frames().iter().zip(clip.frames()) {
            assert!(a.to_tensor().max_abs_diff(&b.to_tensor()).unwrap() < 1e-12);
        }
    }

    #[test]
    fn psnr_falls_with_strength() {
        let clip = synthetic_clip(64, 48, 3, 2).unwrap();
        let db: Vec<f64> = [0.5, 1.0, 2.0]
            .iter()
            .map(|&s| {
                let d = degrade_clip(&clip, &DegradeSpec::with_strength(s)).unwrap();
                psnr_frames(d.frame(1), clip.frame(1), PsnrPlanes::All, 1.0).unwrap()
            })
            .collect();
        assert!(db[0] > db[1] && db[1] > db[2], "{db:?}");
    }

    #[test]
    fn constant_frame_survives() {
        for &(v, s) in &[(0.3, 1.0), (0.9, 0.5), (0.0, 1.0), (0.5, 4.0)] {
            let f = Frame::filled(19, 13, [v, 0.5, 0.25], ColorSpace::YCbCr444).unwrap();
            let d = degrade_frame(&f, &DegradeSpec::with_strength(s), 0).unwrap();
            assert!(d.to_tensor().max_abs_diff(&f.to_tensor()).unwrap() < 1e-12);
        }
    }

    #[test]
    fn deterministic_with_and_without_dither() {
        let clip = synthetic_clip(40, 40, 3, 3).unwrap();
        for seed in [None, Some(9)] {
            let spec = DegradeSpec {
                dither_seed: seed,
                ..DegradeSpec::with_strength(1.5)
            };
            assert_eq!(degrade_clip(&clip, &spec).unwrap(), degrade_clip(&clip, &spec).unwrap());
        }
        let plain = degrade_clip(&clip, &DegradeSpec::with_strength(1.5)).unwrap();
        let dithered = degrade_clip(
            &clip,
            &DegradeSpec {
                dither_seed: Some(9),
                ..DegradeSpec::with_strength(1.5)
            },
        )
        .unwrap();
        assert_ne!(plain, dithered);
    }

    #[test]
    fn rejects_rgb_and_bad_spec() {
        let f = Frame::filled(8, 8, [0.1; 3], ColorSpace::Rgb).unwrap();
        assert!(degrade_frame(&f, &DegradeSpec::default(), 0).is_err());
        let g = Frame::filled(8, 8, [0.1; 3], ColorSpace::YCbCr444).unwrap();
        assert!(degrade_frame(&g, &DegradeSpec::with_strength(-1.0), 0).is_err());
        assert!(degrade_frame(
            &g,
            &DegradeSpec {
                block: 4,
                ..DegradeSpec::default()
            },
            0
        )
        .is_err());
    }
}
