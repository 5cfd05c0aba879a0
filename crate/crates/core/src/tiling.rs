//! Tri-frame patch geometry: where the 96x96 tiles sit, which three frames
//! feed each patch, which output channels restore the current frame, and how
//! tile outputs are blended back into a full frame.

use crate::error::{Error, Result};
use crate::frame_io::{Clip, ColorSpace, Frame};
use crate::tensor::Tensor;

/// Side length of a network patch, in pixels.
pub const PATCH_SIZE: usize = 96;
/// Spatial overlap between neighbouring tiles, in pixels.
pub const PATCH_OVERLAP: usize = 4;
/// Channels in a tri-frame patch: YCbCr for each of three frames.
pub const TRIPATCH_CHANNELS: usize = 9;

/// Top-left anchors of the overlapping tiles covering one frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TileLayout {
    patch: usize,
    overlap: usize,
    frame_width: usize,
    frame_height: usize,
    anchors: Vec<(usize, usize)>,
}

/// Tile positions along one axis: stride `patch - overlap` from zero, with the
/// last tile pulled back to end flush with the frame edge.
fn axis_anchors(dim: usize, patch: usize, stride: usize) -> Vec<usize> {
    let count = 1 + (dim - patch).div_ceil(stride);
    let mut v: Vec<usize> = (0..count - 1).map(|i| i * stride).collect();
    v.push(dim - patch);
    v
}

impl TileLayout {
    /// Layout with an arbitrary patch size and overlap.
    pub fn with_geometry(width: usize, height: usize, patch: usize, overlap: usize) -> Result<Self> {
        if patch == 0 || overlap >= patch {
            return Err(Error::invalid(format!(
                "patch {patch} with overlap {overlap} has no forward stride"
            )));
        }
        if width < patch || height < patch {
            return Err(Error::invalid(format!(
                "frame {width}x{height} is smaller than the {patch}x{patch} patch"
            )));
        }
        let stride = patch - overlap;
        let xs = axis_anchors(width, patch, stride);
        let ys = axis_anchors(height, patch, stride);
        let anchors = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect();
        Ok(Self {
            patch,
            overlap,
            frame_width: width,
            frame_height: height,
            anchors,
        })
    }

    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn overlap(&self) -> usize {
        self.overlap
    }

    pub fn frame_width(&self) -> usize {
        self.frame_width
    }

    pub fn frame_height(&self) -> usize {
        self.frame_height
    }

    /// Anchors `(x, y)` in row-major order.
    pub fn anchors(&self) -> &[(usize, usize)] {
        &self.anchors
    }

    pub fn columns(&self) -> usize {
        self.anchors.iter().take_while(|a| a.1 == 0).count()
    }

    pub fn rows(&self) -> usize {
        self.anchors.len() / self.columns()
    }

    fn check_frame(&self, width: usize, height: usize) -> Result<()> {
        if (width, height) != (self.frame_width, self.frame_height) {
            return Err(Error::shape(
                "tiling",
                format!(
                    "layout is for {}x{} frames, got {width}x{height}",
                    self.frame_width, self.frame_height
                ),
            ));
        }
        Ok(())
    }
}

/// The default 96-pixel, 4-pixel-overlap layout.
pub fn compute_layout(width: usize, height: usize) -> Result<TileLayout> {
    TileLayout::with_geometry(width, height, PATCH_SIZE, PATCH_OVERLAP)
}

/// Source frames feeding the patch for frame `i` of an `n`-frame clip:
/// its two neighbours, or the two following (preceding) frames at the start
/// (end) of the clip.
pub fn triframe_indices(i: usize, n: usize) -> Result<(usize, usize, usize)> {
    check_index(i, n)?;
    let a = i.saturating_sub(1).min(n - 3);
    Ok((a, a + 1, a + 2))
}

/// Replicating variant for clips of one or two frames: out-of-range
/// neighbours are clamped to the clip ends, so the current frame always sits
/// in the middle slot.
pub fn triframe_indices_padded(i: usize, n: usize) -> Result<(usize, usize, usize)> {
    if n >= 3 {
        return triframe_indices(i, n);
    }
    if i >= n {
        return Err(Error::invalid(format!("frame index {i} outside clip of {n} frames")));
    }
    Ok((i.saturating_sub(1), i, (i + 1).min(n - 1)))
}

fn check_index(i: usize, n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::invalid(format!(
            "tri-frame processing needs at least 3 frames, clip has {n}"
        )));
    }
    if i >= n {
        return Err(Error::invalid(format!("frame index {i} outside clip of {n} frames")));
    }
    Ok(())
}

/// A three-channel slice of a nine-channel network output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelWindow {
    pub start: usize,
    pub len: usize,
}

/// Output channels that reconstruct frame `i`: the middle three for interior
/// frames, the first three for frame 0 and the last three for frame `n - 1`.
pub fn channel_window(i: usize, n: usize) -> Result<ChannelWindow> {
    check_index(i, n)?;
    let (a, _, _) = triframe_indices(i, n)?;
    Ok(ChannelWindow {
        start: 3 * (i - a),
        len: 3,
    })
}

/// Nine-channel patch: YCbCr of frames `t-1`, `t`, `t+1` (or the boundary
/// substitutes) cut at one anchor.
#[derive(Clone, Debug, PartialEq)]
pub struct TriPatch {
    pub data: Tensor,
    pub anchor: (usize, usize),
    pub center_frame_index: usize,
}

pub(crate) fn crop_into(dst: &mut [f64], frame: &Frame, anchor: (usize, usize), size: usize) {
    let (x0, y0) = anchor;
    let w = frame.width();
    for p in 0..3 {
        let src = frame.plane(p);
        let out = &mut dst[p * size * size..(p + 1) * size * size];
        for y in 0..size {
            let row = (y0 + y) * w + x0;
            out[y * size..(y + 1) * size].copy_from_slice(&src[row..row + size]);
        }
    }
}

/// Stacks three frames' crops at `anchor` into a `[9, S, S]` tensor.
pub(crate) fn stack_frames(frames: [&Frame; 3], anchor: (usize, usize), size: usize) -> Tensor {
    let per = 3 * size * size;
    let mut data = vec![0.0; 3 * per];
    for (k, f) in frames.iter().enumerate() {
        crop_into(&mut data[k * per..(k + 1) * per], f, anchor, size);
    }
    Tensor::new(vec![TRIPATCH_CHANNELS, size, size], data).expect("patch geometry is valid")
}

fn extract(clip: &Clip, i: usize, layout: &TileLayout, sources: (usize, usize, usize)) -> Result<Vec<TriPatch>> {
    if clip.space() != ColorSpace::YCbCr444 {
        return Err(Error::invalid(format!(
            "tiling expects YCbCr 4:4:4 frames, got {}",
            clip.space()
        )));
    }
    layout.check_frame(clip.width(), clip.height())?;
    let (a, b, c) = sources;
    let frames = [clip.frame(a), clip.frame(b), clip.frame(c)];
    Ok(layout
        .anchors()
        .iter()
        .map(|&anchor| TriPatch {
            data: stack_frames(frames, anchor, layout.patch()),
            anchor,
            center_frame_index: i,
        })
        .collect())
}

/// One tri-frame patch per layout anchor for frame `i`.
pub fn extract_tripatches(clip: &Clip, i: usize, layout: &TileLayout) -> Result<Vec<TriPatch>> {
    extract(clip, i, layout, triframe_indices(i, clip.len())?)
}

/// [`extract_tripatches`] that also accepts one- and two-frame clips by
/// replicating frames (see [`triframe_indices_padded`]).
pub fn extract_tripatches_padded(clip: &Clip, i: usize, layout: &TileLayout) -> Result<Vec<TriPatch>> {
    extract(clip, i, layout, triframe_indices_padded(i, clip.len())?)
}

/// Running per-pixel sums and coverage counts for overlap averaging.
///
/// Partial accumulators over disjoint anchor sets can be merged in any order.
#[derive(Clone, Debug)]
pub struct StitchAccumulator {
    width: usize,
    height: usize,
    sum: [Vec<f64>; 3],
    count: Vec<u32>,
}

impl StitchAccumulator {
    pub fn new(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            sum: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            count: vec![0; n],
        }
    }

    /// Adds a `[3, S, S]` tile whose top-left corner is `anchor`.
    pub fn add(&mut self, anchor: (usize, usize), tile: &Tensor) -> Result<()> {
        let (c, h, w) = tile.dims3()?;
        if c != 3 || h != w {
            return Err(Error::shape(
                "stitch",
                format!("tile must be [3, S, S], got {:?}", tile.shape()),
            ));
        }
        let (x0, y0) = anchor;
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::shape(
                "stitch",
                format!(
                    "tile at {anchor:?} of size {w} exceeds {}x{} frame",
                    self.width, self.height
                ),
            ));
        }
        for p in 0..3 {
            let src = tile.plane(p);
            for y in 0..h {
                let base = (y0 + y) * self.width + x0;
                for (d, s) in self.sum[p][base..base + w].iter_mut().zip(&src[y * w..(y + 1) * w]) {
                    *d += s;
                }
            }
        }
        for y in 0..h {
            let base = (y0 + y) * self.width + x0;
            for c in &mut self.count[base..base + w] {
                *c += 1;
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &StitchAccumulator) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::shape("stitch", "accumulators cover different frame sizes"));
        }
        for p in 0..3 {
            for (a, b) in self.sum[p].iter_mut().zip(&other.sum[p]) {
                *a += b;
            }
        }
        for (a, b) in self.count.iter_mut().zip(&other.count) {
            *a += b;
        }
        Ok(())
    }

    /// Divides sums by coverage counts. Fails if any pixel is uncovered.
    pub fn finish(self) -> Result<Frame> {
        if let Some(i) = self.count.iter().position(|&c| c == 0) {
            return Err(Error::invalid(format!(
                "pixel ({}, {}) is not covered by any tile",
                i % self.width,
                i / self.width
            )));
        }
        let count = self.count;
        let planes = self.sum.map(|mut s| {
            for (v, &c) in s.iter_mut().zip(&count) {
                if c > 1 {
                    *v /= c as f64;
                }
            }
            s
        });
        Frame::new(self.width, self.height, planes, ColorSpace::YCbCr444)
    }
}

/// Averages `[3, S, S]` tile outputs back into a full frame. Every layout
/// anchor must appear exactly once.
pub fn stitch(outputs: &[((usize, usize), Tensor)], layout: &TileLayout) -> Result<Frame> {
    let mut seen = std::collections::HashSet::with_capacity(outputs.len());
    for (anchor, _) in outputs {
        if !seen.insert(*anchor) {
            return Err(Error::invalid(format!("duplicate tile output for anchor {anchor:?}")));
        }
    }
    if let Some(missing) = layout.anchors().iter().find(|a| !seen.contains(a)) {
        return Err(Error::invalid(format!("no tile output for anchor {missing:?}")));
    }
    if seen.len() != layout.anchors().len() {
        return Err(Error::invalid(
            "tile output at an anchor that is not part of the layout",
        ));
    }
    let mut acc = StitchAccumulator::new(layout.frame_width(), layout.frame_height());
    for (anchor, tile) in outputs {
        if tile.shape()[1..] != [layout.patch(), layout.patch()] {
            return Err(Error::shape(
                "stitch",
                format!("tile {:?} does not match patch size {}", tile.shape(), layout.patch()),
            ));
        }
        acc.add(*anchor, tile)?;
    }
    acc.finish()
}
