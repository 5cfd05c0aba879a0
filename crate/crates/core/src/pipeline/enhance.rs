//! Full-clip enhancement and PSNR evaluation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frame_io::{clip_to_rgb, Clip, ColorConfig, ColorSpace};
use crate::metrics::{psnr_gain_report, GainReport, PsnrPlanes};
use crate::model::GeneratorModel;
use crate::tensor::Tensor;
use crate::tiling::{
    channel_window, compute_layout, extract_tripatches, extract_tripatches_padded, ChannelWindow, StitchAccumulator,
};

/// Tiles run in parallel in groups of this many, then are stitched in
/// layout order so the output is independent of thread count.
const TILE_CHUNK: usize = 16;

/// Enhances every frame of a YCbCr 4:4:4 clip with at least three frames.
pub fn enhance_clip(model: &GeneratorModel, decoded: &Clip) -> Result<Clip> {
    let n = decoded.len();
    if n < 3 {
        return Err(Error::invalid(format!("enhance needs at least 3 frames, got {n}")));
    }
    run(model, decoded, false)
}

/// Like [`enhance_clip`] but also accepts one- and two-frame clips, feeding
/// replicated neighbours and reading the middle output window. Clips of
/// three or more frames are processed exactly as by [`enhance_clip`].
pub fn enhance_clip_padded(model: &GeneratorModel, decoded: &Clip) -> Result<Clip> {
    run(model, decoded, decoded.len() < 3)
}

fn run(model: &GeneratorModel, decoded: &Clip, pad: bool) -> Result<Clip> {
    if decoded.space() != ColorSpace::YCbCr444 {
        return Err(Error::invalid(format!(
            "enhance expects YCbCr 4:4:4 input, got {}",
            decoded.space()
        )));
    }
    let n = decoded.len();
    let layout = compute_layout(decoded.width(), decoded.height())?;
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let (window, patches) = if pad {
            (
                ChannelWindow { start: 3, len: 3 },
                extract_tripatches_padded(decoded, i, &layout)?,
            )
        } else {
            (channel_window(i, n)?, extract_tripatches(decoded, i, &layout)?)
        };
        let mut acc = StitchAccumulator::new(layout.frame_width(), layout.frame_height());
        for chunk in patches.chunks(TILE_CHUNK) {
            let outs: Vec<Tensor> = chunk
                .par_iter()
                .map(|p| model.forward(&p.data, false)?.0.channels(window.start, window.len))
                .collect::<Result<_>>()?;
            for (p, t) in chunk.iter().zip(&outs) {
                acc.add(p.anchor, t)?;
            }
        }
        frames.push(acc.finish()?);
    }
    Ok(Clip::new(frames)?.with_frame_rate(decoded.frame_rate()))
}

/// Colour space in which PSNR is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum EvalColor {
    #[default]
    YCbCr,
    Rgb,
}

impl std::str::FromStr for EvalColor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ycbcr" => Ok(EvalColor::YCbCr),
            "rgb" => Ok(EvalColor::Rgb),
            other => Err(Error::invalid(format!(
                "unknown colour mode '{other}', expected ycbcr or rgb"
            ))),
        }
    }
}

/// Enhances `decoded` and reports per-frame PSNR gain over it, both measured
/// against `pristine`.
pub fn evaluate(
    model: &GeneratorModel,
    decoded: &Clip,
    pristine: &Clip,
    color: EvalColor,
    planes: PsnrPlanes,
    color_config: ColorConfig,
) -> Result<GainReport> {
    if !decoded.aligned_with(pristine) {
        return Err(Error::shape(
            "evaluate",
            format!(
                "decoded {}x{}x{} {} vs pristine {}x{}x{} {}",
                decoded.width(),
                decoded.height(),
                decoded.len(),
                decoded.space(),
                pristine.width(),
                pristine.height(),
                pristine.len(),
                pristine.space()
            ),
        ));
    }
    let enhanced = enhance_clip(model, decoded)?;
    match color {
        EvalColor::YCbCr => psnr_gain_report(&enhanced, decoded, pristine, planes),
        EvalColor::Rgb => {
            if planes == PsnrPlanes::LumaOnly {
                return Err(Error::invalid("luma-only PSNR is not defined for RGB evaluation"));
            }
            let cv = |c: &Clip| clip_to_rgb(c, color_config);
            psnr_gain_report(&cv(&enhanced)?, &cv(decoded)?, &cv(pristine)?, planes)
        }
    }
}
