//! Frames, clips and the file formats they travel in.
//!
//! Samples are held as `f64` normalized to `[0, 1]` whatever the source bit
//! depth, and every frame inside the pipeline is 4:4:4. Quantization to
//! integers happens only when writing.

mod chroma;
mod color;
mod png;
mod yuv;

pub use chroma::{chroma_upsample_420_to_444, ChromaFilter};
pub use color::{clip_to_rgb, rgb_to_ycbcr, ycbcr_to_rgb, ColorConfig, ColorMatrix, ColorRange};
pub use png::{read_png_sequence, write_png_sequence};
pub use yuv::{
    decode_planar_yuv, decode_y4m, encode_y4m, read_planar_yuv, read_y4m, write_planar_yuv, write_y4m, PlanarFormat,
    Subsampling,
};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ColorSpace {
    YCbCr444,
    Rgb,
}

impl std::fmt::Display for ColorSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ColorSpace::YCbCr444 => "ycbcr444",
            ColorSpace::Rgb => "rgb",
        })
    }
}

/// One picture: three full-resolution planes of normalized samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    planes: [Vec<f64>; 3],
    space: ColorSpace,
}

impl Frame {
    pub fn new(width: usize, height: usize, planes: [Vec<f64>; 3], space: ColorSpace) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        for (i, p) in planes.iter().enumerate() {
            if p.len() != width * height {
                return Err(Error::shape(
                    "Frame::new",
                    format!("plane {i} has {} samples, expected {width}x{height}", p.len()),
                ));
            }
            if let Some(j) = p.iter().position(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("plane {i} sample {j} is not finite")));
            }
        }
        Ok(Self {
            width,
            height,
            planes,
            space,
        })
    }

    /// Frame with each plane held at a constant value.
    pub fn filled(width: usize, height: usize, values: [f64; 3], space: ColorSpace) -> Result<Self> {
        let n = width * height;
        Self::new(width, height, values.map(|v| vec![v; n]), space)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn plane(&self, i: usize) -> &[f64] {
        &self.planes[i]
    }

    pub fn planes(&self) -> &[Vec<f64>; 3] {
        &self.planes
    }

    pub fn into_planes(self) -> [Vec<f64>; 3] {
        self.planes
    }

    pub fn sample(&self, plane: usize, x: usize, y: usize) -> f64 {
        self.planes[plane][y * self.width + x]
    }

    /// `[3, H, W]` tensor copy of the planes.
    pub fn to_tensor(&self) -> Tensor {
        let mut data = Vec::with_capacity(3 * self.width * self.height);
        for p in &self.planes {
            data.extend_from_slice(p);
        }
        Tensor::new(vec![3, self.height, self.width], data).expect("frame geometry is valid")
    }

    pub fn from_tensor(t: &Tensor, space: ColorSpace) -> Result<Self> {
        let (c, h, w) = t.dims3()?;
        if c != 3 {
            return Err(Error::shape(
                "Frame::from_tensor",
                format!("expected 3 channels, got {c}"),
            ));
        }
        Self::new(
            w,
            h,
            [t.plane(0).to_vec(), t.plane(1).to_vec(), t.plane(2).to_vec()],
            space,
        )
    }

    pub(crate) fn same_geometry(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.space == other.space
    }
}

/// Frame rate as a rational number of frames per second.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameRate {
    pub num: u32,
    pub den: u32,
}

impl Default for FrameRate {
    fn default() -> Self {
        Self { num: 25, den: 1 }
    }
}

/// Non-empty ordered frame sequence with shared geometry and color space.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    frames: Vec<Frame>,
    frame_rate: FrameRate,
}

impl Clip {
    pub fn new(frames: Vec<Frame>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::invalid("a clip needs at least one frame"))?;
        if let Some(i) = frames.iter().position(|f| !f.same_geometry(first)) {
            return Err(Error::shape(
                "Clip::new",
                format!(
                    "frame {i} is {}x{} {} but frame 0 is {}x{} {}",
                    frames[i].width, frames[i].height, frames[i].space, first.width, first.height, first.space
                ),
            ));
        }
        Ok(Self {
            frames,
            frame_rate: FrameRate::default(),
        })
    }

    pub fn with_frame_rate(mut self, rate: FrameRate) -> Self {
        self.frame_rate = rate;
        self
    }

    pub fn frame_rate(&self) -> FrameRate {
        self.frame_rate
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &Frame {
        &self.frames[i]
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn space(&self) -> ColorSpace {
        self.frames[0].space
    }

    /// True when both clips have equal length, dimensions and color space.
    pub fn aligned_with(&self, other: &Clip) -> bool {
        self.len() == other.len() && self.frames[0].same_geometry(&other.frames[0])
    }
}

/// Half-up rounding of a normalized sample to an integer code in `0..=max`.
pub(crate) fn quantize(v: f64, max: u32) -> u32 {
    let scaled = v.clamp(0.0, 1.0) * max as f64;
    ((scaled + 0.5).floor() as u32).min(max)
}
