//! Raw planar YUV (I420 / I444, 8 or 10 bit) and YUV4MPEG2.

use std::path::Path;

use super::{chroma_upsample_420_to_444, quantize, ChromaFilter, Clip, ColorSpace, Frame, FrameRate};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsampling {
    S420,
    S444,
}

impl std::fmt::Display for Subsampling {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Subsampling::S420 => "4:2:0",
            Subsampling::S444 => "4:4:4",
        })
    }
}

/// Geometry of a headerless planar file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlanarFormat {
    pub width: usize,
    pub height: usize,
    pub subsampling: Subsampling,
    pub bit_depth: u8,
}

impl PlanarFormat {
    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid(format!(
                "frame dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if !matches!(self.bit_depth, 8 | 10) {
            return Err(Error::invalid(format!(
                "unsupported bit depth {} (expected 8 or 10)",
                self.bit_depth
            )));
        }
        Ok(())
    }

    fn chroma_dims(&self) -> (usize, usize) {
        match self.subsampling {
            Subsampling::S420 => (self.width.div_ceil(2), self.height.div_ceil(2)),
            Subsampling::S444 => (self.width, self.height),
        }
    }

    fn bytes_per_sample(&self) -> usize {
        if self.bit_depth > 8 {
            2
        } else {
            1
        }
    }

    /// Bytes occupied by one frame.
    pub fn frame_bytes(&self) -> usize {
        let (cw, ch) = self.chroma_dims();
        (self.width * self.height + 2 * cw * ch) * self.bytes_per_sample()
    }

    fn max_code(&self) -> u32 {
        (1u32 << self.bit_depth) - 1
    }
}

fn unpack(bytes: &[u8], count: usize, fmt: &PlanarFormat) -> Vec<f64> {
    let max = fmt.max_code() as f64;
    if fmt.bytes_per_sample() == 1 {
        bytes[..count].iter().map(|&b| b as f64 / max).collect()
    } else {
        bytes[..2 * count]
            .chunks_exact(2)
            .map(|c| (u16::from_le_bytes([c[0], c[1]]) & 0x3ff) as f64 / max)
            .collect()
    }
}

/// Decodes one frame's worth of planar samples starting at `bytes[0]`.
fn decode_frame(bytes: &[u8], fmt: &PlanarFormat, filter: ChromaFilter) -> Result<Frame> {
    let (w, h) = (fmt.width, fmt.height);
    let (cw, ch) = fmt.chroma_dims();
    let bps = fmt.bytes_per_sample();
    let luma = unpack(bytes, w * h, fmt);
    let cb = unpack(&bytes[w * h * bps..], cw * ch, fmt);
    let cr = unpack(&bytes[(w * h + cw * ch) * bps..], cw * ch, fmt);
    match fmt.subsampling {
        Subsampling::S444 => Frame::new(w, h, [luma, cb, cr], ColorSpace::YCbCr444),
        Subsampling::S420 => chroma_upsample_420_to_444(&luma, w, h, &cb, &cr, filter),
    }
}

/// Decodes an in-memory raw planar buffer into a 4:4:4 clip.
pub fn decode_planar_yuv(bytes: &[u8], fmt: &PlanarFormat, filter: ChromaFilter) -> Result<Clip> {
    fmt.validate()?;
    let fb = fmt.frame_bytes();
    let whole = bytes.len() / fb;
    if bytes.is_empty() || !bytes.len().is_multiple_of(fb) {
        let expected = (whole + 1) * fb;
        return Err(Error::format(
            "raw yuv",
            (whole * fb) as u64,
            format!(
                "length {} is not a whole number of {}x{} {} {}-bit frames ({fb} bytes each); \
                 expected {expected} bytes, found {}",
                bytes.len(),
                fmt.width,
                fmt.height,
                fmt.subsampling,
                fmt.bit_depth,
                bytes.len()
            ),
        ));
    }
    let frames = bytes
        .chunks_exact(fb)
        .map(|chunk| decode_frame(chunk, fmt, filter))
        .collect::<Result<Vec<_>>>()?;
    Clip::new(frames)
}

pub fn read_planar_yuv(path: &Path, fmt: &PlanarFormat, filter: ChromaFilter) -> Result<Clip> {
    fmt.validate()?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_planar_yuv(&bytes, fmt, filter).map_err(|e| match e {
        Error::Format { offset, msg, .. } => Error::format(path.display().to_string(), offset, msg),
        other => other,
    })
}

/// Writes a YCbCr 4:4:4 clip as headerless planar samples (10-bit codes are
/// little-endian `u16`).
pub fn write_planar_yuv(clip: &Clip, path: &Path, bit_depth: u8) -> Result<()> {
    let fmt = PlanarFormat {
        width: clip.width(),
        height: clip.height(),
        subsampling: Subsampling::S444,
        bit_depth,
    };
    fmt.validate()?;
    require_ycbcr(clip)?;
    let mut out = Vec::with_capacity(fmt.frame_bytes() * clip.len());
    for frame in clip.frames() {
        for plane in frame.planes() {
            for &v in plane {
                let code = quantize(v, fmt.max_code());
                if bit_depth > 8 {
                    out.extend_from_slice(&(code as u16).to_le_bytes());
                } else {
                    out.push(code as u8);
                }
            }
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn require_ycbcr(clip: &Clip) -> Result<()> {
    if clip.space() != ColorSpace::YCbCr444 {
        return Err(Error::invalid(format!(
            "YUV output needs a YCbCr clip, got {}",
            clip.space()
        )));
    }
    Ok(())
}

const Y4M_MAGIC: &str = "YUV4MPEG2";

fn header_line<'a>(bytes: &'a [u8], at: usize, what: &str) -> Result<(&'a str, usize)> {
    let end = bytes[at..]
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format("y4m", at as u64, format!("unterminated {what} header")))?;
    let line = std::str::from_utf8(&bytes[at..at + end])
        .map_err(|_| Error::format("y4m", at as u64, format!("{what} header is not ASCII")))?;
    Ok((line, at + end + 1))
}

/// Parses a YUV4MPEG2 stream (8-bit, `C420*` or `C444`).
pub fn decode_y4m(bytes: &[u8], filter: ChromaFilter) -> Result<Clip> {
    let (line, mut pos) = header_line(bytes, 0, "stream")?;
    let mut tokens = line.split(' ').filter(|t| !t.is_empty());
    if tokens.next() != Some(Y4M_MAGIC) {
        return Err(Error::format("y4m", 0, "missing YUV4MPEG2 signature"));
    }
    let (mut width, mut height) = (None, None);
    let mut rate = FrameRate::default();
    let mut subsampling = Subsampling::S420;
    for tok in tokens {
        let (tag, val) = tok.split_at(1);
        let bad = |what: &str| Error::format("y4m", 0, format!("malformed {what} token {tok:?}"));
        match tag {
            "W" => width = Some(val.parse::<usize>().map_err(|_| bad("width"))?),
            "H" => height = Some(val.parse::<usize>().map_err(|_| bad("height"))?),
            "F" => {
                let (n, d) = val.split_once(':').ok_or_else(|| bad("frame rate"))?;
                rate = FrameRate {
                    num: n.parse().map_err(|_| bad("frame rate"))?,
                    den: d.parse().map_err(|_| bad("frame rate"))?,
                };
            }
            "C" => {
                subsampling = match val {
                    "420" | "420jpeg" | "420paldv" | "420mpeg2" => Subsampling::S420,
                    "444" => Subsampling::S444,
                    _ => {
                        return Err(Error::format(
                            "y4m",
                            0,
                            format!("unsupported colorspace token {tok:?} (expected C420 or C444, 8-bit)"),
                        ))
                    }
                }
            }
            "I" | "A" | "X" => {}
            _ => return Err(Error::format("y4m", 0, format!("unknown header token {tok:?}"))),
        }
    }
    let fmt = PlanarFormat {
        width: width.ok_or_else(|| Error::format("y4m", 0, "missing W token"))?,
        height: height.ok_or_else(|| Error::format("y4m", 0, "missing H token"))?,
        subsampling,
        bit_depth: 8,
    };
    fmt.validate()?;
    let fb = fmt.frame_bytes();
    let mut frames = Vec::new();
    while pos < bytes.len() {
        let (line, body) = header_line(bytes, pos, "frame")?;
        if !line.starts_with("FRAME") {
            return Err(Error::format("y4m", pos as u64, "expected FRAME marker"));
        }
        if bytes.len() - body < fb {
            return Err(Error::format(
                "y4m",
                body as u64,
                format!("truncated frame: need {fb} bytes, {} remain", bytes.len() - body),
            ));
        }
        frames.push(decode_frame(&bytes[body..body + fb], &fmt, filter)?);
        pos = body + fb;
    }
    Ok(Clip::new(frames)?.with_frame_rate(rate))
}

pub fn read_y4m(path: &Path) -> Result<Clip> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_y4m(&bytes, ChromaFilter::Bilinear).map_err(|e| match e {
        Error::Format { offset, msg, .. } => Error::format(path.display().to_string(), offset, msg),
        other => other,
    })
}

/// Serializes a YCbCr clip as 8-bit `C444` YUV4MPEG2.
pub fn encode_y4m(clip: &Clip) -> Result<Vec<u8>> {
    require_ycbcr(clip)?;
    let rate = clip.frame_rate();
    let (w, h) = (clip.width(), clip.height());
    let mut out = format!("{Y4M_MAGIC} W{w} H{h} F{}:{} Ip A1:1 C444\n", rate.num, rate.den).into_bytes();
    out.reserve(clip.len() * (6 + 3 * w * h));
    for frame in clip.frames() {
        out.extend_from_slice(b"FRAME\n");
        for plane in frame.planes() {
            out.extend(plane.iter().map(|&v| quantize(v, 255) as u8));
        }
    }
    Ok(out)
}

pub fn write_y4m(clip: &Clip, path: &Path) -> Result<()> {
    let bytes = encode_y4m(clip)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
