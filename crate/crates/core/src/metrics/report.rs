use std::fmt::Write as _;

use super::{psnr_frames, PsnrPlanes};
use crate::error::{Error, Result};
use crate::frame_io::{Clip, ColorSpace};

/// Infinite PSNR values (and deltas) are printed as this many dB.
pub const REPORT_CAP_DB: f64 = 99.99;

const HEADER: &str = "# trifuse psnr gain report v1";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameGain {
    pub index: usize,
    pub anchor_db: f64,
    pub enhanced_db: f64,
    pub delta_db: f64,
}

/// Per-frame PSNR of an enhanced clip and its unenhanced anchor against a
/// common reference.
#[derive(Clone, Debug, PartialEq)]
pub struct GainReport {
    pub color: ColorSpace,
    pub planes: PsnrPlanes,
    pub frames: Vec<FrameGain>,
    pub mean_anchor_db: f64,
    pub mean_enhanced_db: f64,
    pub mean_delta_db: f64,
}

fn delta(enhanced: f64, anchor: f64) -> f64 {
    if enhanced == anchor {
        0.0
    } else {
        enhanced - anchor
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in v {
        s += x;
        n += 1;
    }
    s / n as f64
}

pub fn psnr_gain_report(enhanced: &Clip, anchor: &Clip, reference: &Clip, planes: PsnrPlanes) -> Result<GainReport> {
    if !enhanced.aligned_with(reference) || !anchor.aligned_with(reference) {
        return Err(Error::shape(
            "psnr_gain_report",
            format!(
                "clips differ: enhanced {}x{}x{} {}, anchor {}x{}x{} {}, reference {}x{}x{} {}",
                enhanced.width(),
                enhanced.height(),
                enhanced.len(),
                enhanced.space(),
                anchor.width(),
                anchor.height(),
                anchor.len(),
                anchor.space(),
                reference.width(),
                reference.height(),
                reference.len(),
                reference.space()
            ),
        ));
    }
    let frames = (0..reference.len())
        .map(|i| {
            let r = reference.frame(i);
            let anchor_db = psnr_frames(anchor.frame(i), r, planes, 1.0)?;
            let enhanced_db = psnr_frames(enhanced.frame(i), r, planes, 1.0)?;
            Ok(FrameGain {
                index: i,
                anchor_db,
                enhanced_db,
                delta_db: delta(enhanced_db, anchor_db),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GainReport {
        color: reference.space(),
        planes,
        mean_anchor_db: mean(frames.iter().map(|f| f.anchor_db)),
        mean_enhanced_db: mean(frames.iter().map(|f| f.enhanced_db)),
        mean_delta_db: mean(frames.iter().map(|f| f.delta_db)),
        frames,
    })
}

fn cap(v: f64) -> f64 {
    v.clamp(-REPORT_CAP_DB, REPORT_CAP_DB)
}

impl GainReport {
    /// Tab-separated table: one row per frame, then a `mean` row.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{HEADER}");
        let _ = writeln!(s, "# color: {}", self.color);
        let _ = writeln!(s, "# planes: {}", self.planes);
        let _ = writeln!(s, "# frames: {}", self.frames.len());
        let _ = writeln!(s, "frame\tanchor_db\tenhanced_db\tdelta_db");
        for f in &self.frames {
            let _ = writeln!(
                s,
                "{}\t{:.6}\t{:.6}\t{:.6}",
                f.index,
                cap(f.anchor_db),
                cap(f.enhanced_db),
                cap(f.delta_db)
            );
        }
        let _ = writeln!(
            s,
            "mean\t{:.6}\t{:.6}\t{:.6}",
            cap(self.mean_anchor_db),
            cap(self.mean_enhanced_db),
            cap(self.mean_delta_db)
        );
        s
    }

    /// Parses [`GainReport::to_text`] output. Values come back capped and
    /// rounded to six decimals.
    pub fn parse(text: &str) -> Result<GainReport> {
        let bad = |line: usize, msg: &str| Error::format("gain report", line as u64, msg.to_string());
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l == HEADER => {}
            _ => return Err(bad(0, "missing report header")),
        }
        let mut color = None;
        let mut planes = None;
        let mut frames = Vec::new();
        let mut means = None;
        for (n, line) in lines {
            if let Some(v) = line.strip_prefix("# color: ") {
                color = Some(match v {
                    "ycbcr444" => ColorSpace::YCbCr444,
                    "rgb" => ColorSpace::Rgb,
                    _ => return Err(bad(n, "unknown color space")),
                });
            } else if let Some(v) = line.strip_prefix("# planes: ") {
                planes = Some(match v {
                    "all" => PsnrPlanes::All,
                    "luma" => PsnrPlanes::LumaOnly,
                    _ => return Err(bad(n, "unknown plane selection")),
                });
            } else if line.starts_with('#') || line.starts_with("frame\t") || line.is_empty() {
                continue;
            } else {
                let cols: Vec<&str> = line.split('\t').collect();
                if cols.len() != 4 {
                    return Err(bad(n, "expected four tab-separated columns"));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "non-numeric value"));
                let (a, e, d) = (num(cols[1])?, num(cols[2])?, num(cols[3])?);
                if cols[0] == "mean" {
                    means = Some((a, e, d));
                } else {
                    let index = cols[0].parse().map_err(|_| bad(n, "bad frame index"))?;
                    frames.push(FrameGain {
                        index,
                        anchor_db: a,
                        enhanced_db: e,
                        delta_db: d,
                    });
                }
            }
        }
        let (mean_anchor_db, mean_enhanced_db, mean_delta_db) = means.ok_or_else(|| bad(0, "missing mean row"))?;
        Ok(GainReport {
            color: color.ok_or_else(|| bad(0, "missing color line"))?,
            planes: planes.ok_or_else(|| bad(0, "missing planes line"))?,
            frames,
            mean_anchor_db,
            mean_enhanced_db,
            mean_delta_db,
        })
    }
}
