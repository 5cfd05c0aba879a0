//! Procedural test content: a drifting colour gradient, a sinusoidal texture
//! and a handful of hard-edged moving shapes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frame_io::{Clip, ColorSpace, Frame};

struct Shape {
    disc: bool,
    cx: f64,
    cy: f64,
    vx: f64,
    vy: f64,
    rx: f64,
    ry: f64,
    color: [f64; 3],
}

impl Shape {
    fn contains(&self, x: f64, y: f64, t: f64) -> bool {
        let dx = (x - (self.cx + self.vx * t)) / self.rx;
        let dy = (y - (self.cy + self.vy * t)) / self.ry;
        if self.disc {
            dx * dx + dy * dy <= 1.0
        } else {
            dx.abs() <= 1.0 && dy.abs() <= 1.0
        }
    }
}

/// Deterministic YCbCr 4:4:4 clip with motion between frames.
pub fn synthetic_clip(width: usize, height: usize, frames: usize, seed: u64) -> Result<Clip> {
    if width == 0 || height == 0 || frames == 0 {
        return Err(Error::invalid(format!(
            "synthetic clip needs positive size, got {width}x{height}x{frames}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (wf, hf) = (width as f64, height as f64);
    let grad: [[f64; 3]; 3] = std::array::from_fn(|_| {
        [
            rng.gen_range(0.2..0.8),
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.3..0.3),
        ]
    });
    let drift = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
    let tex_freq = (rng.gen_range(0.15..0.6), rng.gen_range(0.15..0.6));
    let tex_amp = rng.gen_range(0.02..0.08);
    let tex_speed = rng.gen_range(-0.4..0.4);
    let shapes: Vec<Shape> = (0..rng.gen_range(4..9))
        .map(|_| Shape {
            disc: rng.gen_bool(0.5),
            cx: rng.gen_range(0.0..wf),
            cy: rng.gen_range(0.0..hf),
            vx: rng.gen_range(-3.0..3.0),
            vy: rng.gen_range(-3.0..3.0),
            rx: rng.gen_range(4.0..(wf / 3.0).max(5.0)),
            ry: rng.gen_range(4.0..(hf / 3.0).max(5.0)),
            color: [
                rng.gen_range(0.05..0.95),
                rng.gen_range(0.25..0.75),
                rng.gen_range(0.25..0.75),
            ],
        })
        .collect();

    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        let t = f as f64;
        let mut planes = [
            vec![0.0; width * height],
            vec![0.0; width * height],
            vec![0.0; width * height],
        ];
        for y in 0..height {
            for x in 0..width {
                let (xf, yf) = (x as f64 + drift.0 * t, y as f64 + drift.1 * t);
                let (u, v) = (xf / wf, yf / hf);
                let mut px: [f64; 3] = std::array::from_fn(|p| {
                    let g = grad[p];
                    let base = if p == 0 { g[0] } else { 0.5 + 0.5 * (g[0] - 0.5) };
                    base + g[1] * u + g[2] * v
                });
                px[0] += tex_amp * (tex_freq.0 * xf + tex_speed * t).sin() * (tex_freq.1 * yf).cos();
                for s in &shapes {
                    if s.contains(x as f64, y as f64, t) {
                        px = s.color;
                    }
                }
                for p in 0..3 {
                    planes[p][y * width + x] = px[p].clamp(0.0, 1.0);
                }
            }
        }
        out.push(Frame::new(width, height, planes, ColorSpace::YCbCr444)?);
    }
    Clip::new(out)
}
