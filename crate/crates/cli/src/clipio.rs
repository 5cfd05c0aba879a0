//! Reading and writing clips named on the command line.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use trifuse_core::frame_io::{
    read_planar_yuv, read_y4m, write_planar_yuv, write_y4m, ChromaFilter, ColorConfig, ColorMatrix, ColorRange,
    PlanarFormat, Subsampling,
};
use trifuse_core::{Clip, Error, Result};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Chroma {
    #[value(name = "420")]
    S420,
    #[value(name = "444")]
    S444,
}

/// Geometry of headerless `.yuv` inputs. Ignored for `.y4m` files.
#[derive(Args, Clone, Debug)]
pub struct RawGeometry {
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long, value_enum, default_value = "420")]
    pub subsampling: Chroma,
    #[arg(long, default_value_t = 8)]
    pub bit_depth: u8,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Matrix {
    Bt709,
    Bt601,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Range {
    Limited,
    Full,
}

#[derive(Args, Clone, Debug)]
pub struct ColorArgs {
    /// YCbCr matrix used for RGB conversion.
    #[arg(long, value_enum, default_value = "bt709")]
    pub matrix: Matrix,
    #[arg(long, value_enum, default_value = "limited")]
    pub range: Range,
}

impl ColorArgs {
    pub fn config(&self) -> ColorConfig {
        ColorConfig {
            matrix: match self.matrix {
                Matrix::Bt709 => ColorMatrix::Bt709,
                Matrix::Bt601 => ColorMatrix::Bt601,
            },
            range: match self.range {
                Range::Limited => ColorRange::Limited,
                Range::Full => ColorRange::Full,
            },
        }
    }
}

fn is_y4m(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m"))
}

pub fn read_clip(path: &Path, geometry: &RawGeometry) -> Result<Clip> {
    if is_y4m(path) {
        return read_y4m(path);
    }
    let (Some(width), Some(height)) = (geometry.width, geometry.height) else {
        return Err(Error::InvalidArgument(format!(
            "{} is raw YUV: --width and --height are required",
            path.display()
        )));
    };
    let fmt = PlanarFormat {
        width,
        height,
        subsampling: match geometry.subsampling {
            Chroma::S420 => Subsampling::S420,
            Chroma::S444 => Subsampling::S444,
        },
        bit_depth: geometry.bit_depth,
    };
    read_planar_yuv(path, &fmt, ChromaFilter::Bilinear)
}

/// Y4M for `.y4m` paths, otherwise raw planar 4:4:4 at `bit_depth`.
pub fn write_clip(clip: &Clip, path: &Path, bit_depth: u8) -> Result<()> {
    if is_y4m(path) {
        write_y4m(clip, path)
    } else {
        write_planar_yuv(clip, path, bit_depth)
    }
}

/// Clip files directly inside `dir`, sorted by name.
pub fn clips_in(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })?
            .path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if matches!(ext.as_deref(), Some("y4m" | "yuv")) {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no .y4m or .yuv clips in {}",
            dir.display()
        )));
    }
    Ok(paths)
}
