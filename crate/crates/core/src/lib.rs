//! Decoder-side multi-frame enhancement for compressed video.
//!
//! Three consecutive decoded frames are cut into overlapping 96x96 tiles,
//! stacked into 9-channel patches, passed through a residual CNN, and the
//! relevant 3-channel slice of each output is stitched back into the frame.
//! The crate also carries the training loss (L1, SSIM, L2 and MS-SSIM
//! blended), a blockwise-DCT codec stand-in for building training pairs, and
//! the PSNR gain report used for evaluation.

mod binio;
pub mod error;
pub mod frame_io;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod selftest;
pub mod tensor;
pub mod tiling;

pub use error::{Error, ErrorKind, Result};
pub use frame_io::{Clip, ColorSpace, Frame};
pub use loss::{combined_loss, LossValue, LossWeights};
pub use metrics::{ms_ssim, psnr, ssim, GainReport, MsSsimParams, SsimParams};
pub use model::{BitrateTarget, GeneratorConfig, GeneratorModel};
pub use pipeline::{DegradeSpec, PatchPair, TrainingConfig};
pub use tensor::Tensor;
pub use tiling::{ChannelWindow, TileLayout, TriPatch};
