use super::{Clip, ColorSpace, Frame};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ColorMatrix {
    #[default]
    Bt709,
    Bt601,
}

impl ColorMatrix {
    /// `(Kr, Kb)` luma coefficients.
    fn coefficients(self) -> (f64, f64) {
        match self {
            ColorMatrix::Bt709 => (0.2126, 0.0722),
            ColorMatrix::Bt601 => (0.299, 0.114),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ColorRange {
    /// Studio swing: luma 16..235, chroma 16..240 (8-bit codes).
    #[default]
    Limited,
    Full,
}

/// Matrix and range used for YCbCr <-> RGB. Defaults to BT.709 limited.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ColorConfig {
    pub matrix: ColorMatrix,
    pub range: ColorRange,
}

const NEUTRAL: f64 = 128.0 / 255.0;

impl ColorConfig {
    fn encode(&self, r: f64, g: f64, b: f64) -> (f64, f64, f64) {
        let (kr, kb) = self.matrix.coefficients();
        let kg = 1.0 - kr - kb;
        let y = kr * r + kg * g + kb * b;
        let pb = (b - y) / (2.0 * (1.0 - kb));
        let pr = (r - y) / (2.0 * (1.0 - kr));
        match self.range {
            ColorRange::Limited => (
                (16.0 + 219.0 * y) / 255.0,
                (128.0 + 224.0 * pb) / 255.0,
                (128.0 + 224.0 * pr) / 255.0,
            ),
            ColorRange::Full => (y, pb + NEUTRAL, pr + NEUTRAL),
        }
    }

    fn decode(&self, y: f64, cb: f64, cr: f64) -> (f64, f64, f64) {
        let (kr, kb) = self.matrix.coefficients();
        let kg = 1.0 - kr - kb;
        let (y, pb, pr) = match self.range {
            ColorRange::Limited => (
                (y * 255.0 - 16.0) / 219.0,
                (cb * 255.0 - 128.0) / 224.0,
                (cr * 255.0 - 128.0) / 224.0,
            ),
            ColorRange::Full => (y, cb - NEUTRAL, cr - NEUTRAL),
        };
        let r = y + 2.0 * (1.0 - kr) * pr;
        let b = y + 2.0 * (1.0 - kb) * pb;
        let g = (y - kr * r - kb * b) / kg;
        (r, g, b)
    }
}

fn convert(
    frame: &Frame,
    from: ColorSpace,
    to: ColorSpace,
    f: impl Fn(f64, f64, f64) -> (f64, f64, f64),
) -> Result<Frame> {
    if frame.space() != from {
        return Err(Error::invalid(format!(
            "expected a {from} frame, got {}",
            frame.space()
        )));
    }
    let n = frame.width() * frame.height();
    let [a, b, c] = frame.planes();
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        let (x, y, z) = f(a[i], b[i], c[i]);
        out[0][i] = x.clamp(0.0, 1.0);
        out[1][i] = y.clamp(0.0, 1.0);
        out[2][i] = z.clamp(0.0, 1.0);
    }
    Frame::new(frame.width(), frame.height(), out, to)
}

pub fn ycbcr_to_rgb(frame: &Frame, config: ColorConfig) -> Result<Frame> {
    convert(frame, ColorSpace::YCbCr444, ColorSpace::Rgb, |y, cb, cr| {
        config.decode(y, cb, cr)
    })
}

pub fn rgb_to_ycbcr(frame: &Frame, config: ColorConfig) -> Result<Frame> {
    convert(frame, ColorSpace::Rgb, ColorSpace::YCbCr444, |r, g, b| {
        config.encode(r, g, b)
    })
}

/// Converts every frame of a YCbCr clip to RGB, keeping the frame rate.
pub fn clip_to_rgb(clip: &Clip, config: ColorConfig) -> Result<Clip> {
    let frames = clip
        .frames()
        .iter()
        .map(|f| ycbcr_to_rgb(f, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(Clip::new(frames)?.with_frame_rate(clip.frame_rate()))
}
