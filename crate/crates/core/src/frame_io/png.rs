use std::path::{Path, PathBuf};

use super::{quantize, Clip, ColorSpace, Frame};
use crate::error::{Error, Result};

/// Writes an RGB clip as `000000.png`, `000001.png`, ... in `dir`.
///
/// Samples are clamped, scaled by 255 and rounded half-up. YCbCr clips are
/// refused before anything touches the filesystem.
pub fn write_png_sequence(clip: &Clip, dir: &Path) -> Result<Vec<PathBuf>> {
    if clip.space() != ColorSpace::Rgb {
        return Err(Error::invalid(format!(
            "PNG output needs an RGB clip, got {}; convert it first",
            clip.space()
        )));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (w, h) = (clip.width(), clip.height());
    let mut paths = Vec::with_capacity(clip.len());
    for (i, frame) in clip.frames().iter().enumerate() {
        let mut buf = Vec::with_capacity(w * h * 3);
        for px in 0..w * h {
            for p in 0..3 {
                buf.push(quantize(frame.plane(p)[px], 255) as u8);
            }
        }
        let img = image::RgbImage::from_raw(w as u32, h as u32, buf).expect("buffer sized from frame");
        let path = dir.join(format!("{i:06}.png"));
        img.save_with_format(&path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.clone(),
                source,
            })?;
        paths.push(path);
    }
    Ok(paths)
}

/// Reads every `*.png` in `dir` (sorted by name) into an RGB clip.
pub fn read_png_sequence(dir: &Path) -> Result<Clip> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    let mut frames = Vec::with_capacity(paths.len());
    for path in &paths {
        let img = image::open(path)
            .map_err(|source| Error::Image {
                path: path.clone(),
                source,
            })?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut planes = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];
        for (i, px) in img.pixels().enumerate() {
            for p in 0..3 {
                planes[p][i] = px.0[p] as f64 / 255.0;
            }
        }
        frames.push(Frame::new(w, h, planes, ColorSpace::Rgb)?);
    }
    Clip::new(frames)
}
