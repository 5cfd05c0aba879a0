use super::{ColorSpace, Frame};
use crate::error::{Error, Result};

/// Interpolation used when lifting 4:2:0 chroma to full resolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ChromaFilter {
    /// Bilinear with chroma samples co-sited at the top-left luma sample.
    #[default]
    Bilinear,
    /// Sample replication; mostly useful for debugging.
    Nearest,
}

/// Builds a 4:4:4 YCbCr frame from a full-size luma plane and two chroma
/// planes of `ceil(w/2) x ceil(h/2)`.
pub fn chroma_upsample_420_to_444(
    luma: &[f64],
    width: usize,
    height: usize,
    cb: &[f64],
    cr: &[f64],
    filter: ChromaFilter,
) -> Result<Frame> {
    let (cw, ch) = (width.div_ceil(2), height.div_ceil(2));
    if luma.len() != width * height {
        return Err(Error::shape(
            "chroma_upsample_420_to_444",
            format!("luma has {} samples, expected {width}x{height}", luma.len()),
        ));
    }
    for (name, plane) in [("cb", cb), ("cr", cr)] {
        if plane.len() != cw * ch {
            return Err(Error::shape(
                "chroma_upsample_420_to_444",
                format!(
                    "{name} has {} samples, expected {cw}x{ch} for {width}x{height} luma",
                    plane.len()
                ),
            ));
        }
    }
    let up = |c: &[f64]| upsample(c, cw, ch, width, height, filter);
    Frame::new(width, height, [luma.to_vec(), up(cb), up(cr)], ColorSpace::YCbCr444)
}

fn upsample(src: &[f64], cw: usize, ch: usize, width: usize, height: usize, filter: ChromaFilter) -> Vec<f64> {
    let mut out = Vec::with_capacity(width * height);
    match filter {
        ChromaFilter::Nearest => {
            for y in 0..height {
                let row = &src[(y / 2) * cw..][..cw];
                out.extend((0..width).map(|x| row[x / 2]));
            }
        }
        ChromaFilter::Bilinear => {
            // Luma position p sits at chroma coordinate p / 2.
            let taps = |p: usize, n: usize| {
                let lo = p / 2;
                let hi = (lo + 1).min(n - 1);
                let frac = if p % 2 == 1 && hi != lo { 0.5 } else { 0.0 };
                (lo, hi, frac)
            };
            for y in 0..height {
                let (y0, y1, fy) = taps(y, ch);
                for x in 0..width {
                    let (x0, x1, fx) = taps(x, cw);
                    let top = src[y0 * cw + x0] * (1.0 - fx) + src[y0 * cw + x1] * fx;
                    let bot = src[y1 * cw + x0] * (1.0 - fx) + src[y1 * cw + x1] * fx;
                    out.push(top * (1.0 - fy) + bot * fy);
                }
            }
        }
    }
    out
}
