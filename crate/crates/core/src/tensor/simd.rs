//! AVX-512 kernels: 3x3 same-size correlation, its kernel gradient, and the
//! row FIR used by the SSIM filters.
//!
//! Loads go through [`load`], a full-mask masked load: a plain unaligned
//! load is lowered as a byte copy that CPUs tuned for 256-bit vectors split
//! in two and bounce through the stack.
//!
//! The convolutions work on a zero-padded copy of the input with rows
//! widened to a multiple of eight samples, so every vector load is in bounds
//! and lanes past the frame edge only see zeros.

use std::arch::x86_64::*;

/// Output channels per register tile.
const COB: usize = 4;
/// Vectors of eight samples per register tile row.
const XB_MAX: usize = 4;

pub(crate) fn available() -> bool {
    is_x86_feature_detected!("avx512f")
}

struct Padded {
    data: Vec<f64>,
    stride: usize,
    plane: usize,
}

/// Copies `[c, h, w]` into rows of `stride` with `top`/`left` zero margins.
fn pad(src: &[f64], c: usize, h: usize, w: usize, rows: usize, stride: usize, top: usize, left: usize) -> Padded {
    let plane = rows * stride;
    let mut data = vec![0.0; c * plane];
    for ch in 0..c {
        for y in 0..h {
            let d = ch * plane + (y + top) * stride + left;
            data[d..d + w].copy_from_slice(&src[(ch * h + y) * w..][..w]);
        }
    }
    Padded { data, stride, plane }
}

fn round8(n: usize) -> usize {
    n.div_ceil(8) * 8
}

/// `out[co] = bias[co] + sum_ci input[ci] (*) kernel[co, ci]` for 3x3 kernels.
pub(super) fn correlate3(
    out: &mut [f64],
    input: &[f64],
    kernel: &[f64],
    bias: Option<&[f64]>,
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
) {
    assert!(available());
    assert_eq!(input.len(), cin * h * w);
    assert_eq!(kernel.len(), cout * cin * 9);
    assert_eq!(out.len(), cout * h * w);
    let wr = round8(w);
    let p = pad(input, cin, h, w, h + 2, wr + 2, 1, 1);
    let blocks = cout.div_ceil(COB);
    // [block][ci][tap][COB], zero-filled past cout.
    let mut kp = vec![0.0; blocks * cin * 9 * COB];
    for co in 0..cout {
        let (b, j) = (co / COB, co % COB);
        for ci in 0..cin {
            for t in 0..9 {
                kp[((b * cin + ci) * 9 + t) * COB + j] = kernel[(co * cin + ci) * 9 + t];
            }
        }
    }
    let hw = h * w;
    let mut res = [[0.0f64; 8 * XB_MAX]; COB];
    for b in 0..blocks {
        let mut init = [0.0; COB];
        for (j, v) in init.iter_mut().enumerate() {
            let co = b * COB + j;
            if co < cout {
                *v = bias.map_or(0.0, |bs| bs[co]);
            }
        }
        let kb = &kp[b * cin * 9 * COB..(b + 1) * cin * 9 * COB];
        for y in 0..h {
            let mut x0 = 0;
            while x0 < wr {
                let nv = ((wr - x0) / 8).min(XB_MAX);
                let origin = &p.data[y * p.stride + x0..];
                // SAFETY: the tile reads rows y..y+3 and columns
                // x0..x0+8*nv+2 of every padded plane, all inside `p.data`;
                // avx512f presence is asserted above.
                unsafe {
                    match nv {
                        4 => tile::<4>(origin, p.plane, p.stride, cin, kb, init, &mut res),
                        3 => tile::<3>(origin, p.plane, p.stride, cin, kb, init, &mut res),
                        2 => tile::<2>(origin, p.plane, p.stride, cin, kb, init, &mut res),
                        _ => tile::<1>(origin, p.plane, p.stride, cin, kb, init, &mut res),
                    }
                }
                let valid = (8 * nv).min(w - x0);
                for (j, r) in res.iter().enumerate() {
                    let co = b * COB + j;
                    if co < cout {
                        out[co * hw + y * w + x0..][..valid].copy_from_slice(&r[..valid]);
                    }
                }
                x0 += 8 * nv;
            }
        }
    }
}

#[inline]
#[target_feature(enable = "avx512f")]
unsafe fn load(p: *const f64) -> __m512d {
    _mm512_maskz_loadu_pd(0xff, p)
}

#[target_feature(enable = "avx512f")]
unsafe fn tile<const XB: usize>(
    origin: &[f64],
    plane: usize,
    stride: usize,
    cin: usize,
    kb: &[f64],
    init: [f64; COB],
    res: &mut [[f64; 8 * XB_MAX]; COB],
) {
    debug_assert!((cin - 1) * plane + 2 * stride + 8 * XB + 2 <= origin.len());
    let base = origin.as_ptr();
    let kp = kb.as_ptr();
    let mut acc = [[_mm512_setzero_pd(); XB]; COB];
    for j in 0..COB {
        for a in acc[j].iter_mut() {
            *a = _mm512_set1_pd(init[j]);
        }
    }
    for ci in 0..cin {
        for ky in 0..3 {
            let row = base.add(ci * plane + ky * stride);
            for kx in 0..3 {
                let k = kp.add(((ci * 3 + ky) * 3 + kx) * COB);
                let mut v = [_mm512_setzero_pd(); XB];
                for (b, vb) in v.iter_mut().enumerate() {
                    *vb = load(row.add(kx + 8 * b));
                }
                for j in 0..COB {
                    let s = _mm512_set1_pd(*k.add(j));
                    for b in 0..XB {
                        acc[j][b] = _mm512_fmadd_pd(s, v[b], acc[j][b]);
                    }
                }
            }
        }
    }
    for j in 0..COB {
        for b in 0..XB {
            _mm512_storeu_pd(res[j].as_mut_ptr().add(8 * b), acc[j][b]);
        }
    }
}

/// `grad[co, ci, ky, kx] = sum_{y,x} grad_out[co, y, x] * input[ci, y+ky-1, x+kx-1]`.
pub(super) fn kernel_grad3(grad_out: &[f64], input: &[f64], cin: usize, cout: usize, h: usize, w: usize) -> Vec<f64> {
    assert!(available());
    assert_eq!(input.len(), cin * h * w);
    assert_eq!(grad_out.len(), cout * h * w);
    let wr = round8(w);
    let blocks = cout.div_ceil(COB);
    let g = pad(grad_out, cout, h, w, h, wr, 0, 0);
    let p = pad(input, cin, h, w, h + 2, wr + 8, 1, 1);
    let mut gp = g.data;
    gp.resize(blocks * COB * g.plane, 0.0);
    let mut grad = vec![0.0; cout * cin * 9];
    for b in 0..blocks {
        for ci in 0..cin {
            for ky in 0..3 {
                let mut sums = [[0.0; 3]; COB];
                // SAFETY: reads rows ky..ky+h of plane ci of `p` (columns
                // up to wr+2 < wr+8) and rows 0..h of COB planes of `gp`;
                // avx512f presence is asserted above.
                unsafe {
                    grad_tile(
                        &gp[b * COB * g.plane..],
                        g.plane,
                        wr,
                        &p.data[ci * p.plane + ky * p.stride..],
                        p.stride,
                        h,
                        &mut sums,
                    );
                }
                for (j, s) in sums.iter().enumerate() {
                    let co = b * COB + j;
                    if co < cout {
                        grad[((co * cin + ci) * 3 + ky) * 3..][..3].copy_from_slice(s);
                    }
                }
            }
        }
    }
    grad
}

#[target_feature(enable = "avx512f")]
unsafe fn grad_tile(
    g: &[f64],
    gplane: usize,
    gstride: usize,
    p: &[f64],
    pstride: usize,
    h: usize,
    sums: &mut [[f64; 3]; COB],
) {
    debug_assert!(g.len() >= (COB - 1) * gplane + h * gstride);
    debug_assert!(p.len() >= (h - 1) * pstride + gstride + 2);
    let (gb, pb) = (g.as_ptr(), p.as_ptr());
    let mut acc = [[_mm512_setzero_pd(); 3]; COB];
    for y in 0..h {
        let prow = pb.add(y * pstride);
        let grow = gb.add(y * gstride);
        for x in (0..gstride).step_by(8) {
            let v = [load(prow.add(x)), load(prow.add(x + 1)), load(prow.add(x + 2))];
            for j in 0..COB {
                let gv = load(grow.add(j * gplane + x));
                for t in 0..3 {
                    acc[j][t] = _mm512_fmadd_pd(gv, v[t], acc[j][t]);
                }
            }
        }
    }
    for j in 0..COB {
        for t in 0..3 {
            sums[j][t] = _mm512_reduce_add_pd(acc[j][t]);
        }
    }
}

/// `dst[i] = sum_t taps[t] * rows[t][i]`; every row must be at least
/// `dst.len()` long.
pub(crate) fn fir_rows(dst: &mut [f64], rows: &[&[f64]], taps: &[f64]) {
    assert!(available());
    assert_eq!(rows.len(), taps.len());
    assert!(rows.iter().all(|r| r.len() >= dst.len()));
    // SAFETY: every access is below dst.len() (masked past it) on slices
    // checked above; avx512f presence is asserted.
    unsafe { fir_rows_avx512(dst, rows, taps) }
}

#[target_feature(enable = "avx512f")]
unsafe fn fir_rows_avx512(dst: &mut [f64], rows: &[&[f64]], taps: &[f64]) {
    let n = dst.len();
    let out = dst.as_mut_ptr();
    let mut x = 0;
    while x < n {
        let mut mask = [0 as __mmask8; 4];
        for (b, m) in mask.iter_mut().enumerate() {
            let left = n.saturating_sub(x + 8 * b);
            *m = if left >= 8 { 0xff } else { ((1u16 << left) - 1) as u8 };
        }
        let mut acc = [_mm512_setzero_pd(); 4];
        for (r, &g) in rows.iter().zip(taps) {
            let s = _mm512_set1_pd(g);
            let p = r.as_ptr().add(x);
            for b in 0..4 {
                acc[b] = _mm512_fmadd_pd(s, _mm512_maskz_loadu_pd(mask[b], p.wrapping_add(8 * b)), acc[b]);
            }
        }
        for b in 0..4 {
            _mm512_mask_storeu_pd(out.wrapping_add(x + 8 * b), mask[b], acc[b]);
        }
        x += 32;
    }
}
