//! Shared inputs for the criterion benches.

use trifuse_core::pipeline::{build_dataset, synthetic_clip};
use trifuse_core::{DegradeSpec, PatchPair, Tensor};

/// Smooth-but-busy `[c, h, w]` tensor in `[0, 1]`.
pub fn tensor(c: usize, h: usize, w: usize, phase: f64) -> Tensor {
    Tensor::from_fn(&[c, h, w], |i| {
        let (x, y, z) = ((i % w) as f64, ((i / w) % h) as f64, (i / (w * h)) as f64);
        0.5 + 0.4 * (0.37 * x + 0.23 * y + 1.7 * z + phase).sin() * (0.11 * x - 0.19 * y).cos()
    })
}

/// Degraded/pristine patch pairs cut from synthetic clips.
pub fn pairs(count: usize) -> Vec<PatchPair> {
    let clips: Vec<_> = (0..2)
        .map(|k| synthetic_clip(192, 160, 5, k).expect("valid geometry"))
        .collect();
    build_dataset(&clips, &DegradeSpec::with_strength(16.0), count, 0).expect("valid dataset")
}

/// Small zero-mean `[cout, cin, k, k]` kernel.
pub fn kernel(cout: usize, cin: usize, k: usize, scale: f64) -> Tensor {
    Tensor::from_fn(&[cout, cin, k, k], |i| scale * ((i as f64 * 0.618).fract() - 0.5))
}
