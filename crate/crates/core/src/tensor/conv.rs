//! Same-size 2-D cross-correlation (no kernel flip) with zero padding of
//! `(K - 1) / 2` on every side, plus its exact adjoints.

use super::Tensor;
use crate::error::{Error, Result};

/// Gradients of [`conv2d_forward`] with respect to each of its inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2dGrads {
    pub input: Tensor,
    pub kernel: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    k: usize,
}

fn geometry(op: &'static str, input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Geometry> {
    let (cin, h, w) = input.dims3()?;
    let (cout, kcin, kh, kw) = match kernel.shape()[..] {
        [a, b, c, d] => (a, b, c, d),
        _ => {
            return Err(Error::shape(
                op,
                format!("kernel must be [Cout, Cin, K, K], got {:?}", kernel.shape()),
            ))
        }
    };
    if kcin != cin {
        return Err(Error::shape(
            op,
            format!("input has {cin} channels but kernel expects {kcin}"),
        ));
    }
    if kh != kw || kh % 2 == 0 {
        return Err(Error::shape(
            op,
            format!("kernel must be square with odd side, got {kh}x{kw}"),
        ));
    }
    if bias.shape() != [cout] {
        return Err(Error::shape(
            op,
            format!("bias must be [{cout}], got {:?}", bias.shape()),
        ));
    }
    Ok(Geometry { cin, cout, h, w, k: kh })
}

/// Zero-padded same-size cross-correlation.
///
/// `input` is `[Cin, H, W]`, `kernel` is `[Cout, Cin, K, K]` with odd `K`,
/// `bias` is `[Cout]`; the result is `[Cout, H, W]`.
pub fn conv2d_forward(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let g = geometry("conv2d_forward", input, kernel, bias)?;
    let mut out = vec![0.0; g.cout * g.h * g.w];
    correlate(&mut out, input.data(), kernel.data(), Some(bias.data()), g);
    Tensor::new(vec![g.cout, g.h, g.w], out)
}

/// Exact gradients of [`conv2d_forward`] for the given upstream gradient.
pub fn conv2d_backward(grad_out: &Tensor, input: &Tensor, kernel: &Tensor) -> Result<Conv2dGrads> {
    let (input_grad, kernel, bias) = conv2d_backward_impl(grad_out, input, kernel, true)?;
    Ok(Conv2dGrads {
        input: input_grad.expect("input gradient requested"),
        kernel,
        bias,
    })
}

/// Backward pass that can skip the input gradient (first layer of a network).
pub(crate) fn conv2d_backward_impl(
    grad_out: &Tensor,
    input: &Tensor,
    kernel: &Tensor,
    want_input: bool,
) -> Result<(Option<Tensor>, Tensor, Tensor)> {
    let cout = kernel.shape().first().copied().unwrap_or(0);
    let zero_bias = Tensor::zeros(&[cout.max(1)]);
    let g = geometry("conv2d_backward", input, kernel, &zero_bias)?;
    if grad_out.shape() != [g.cout, g.h, g.w] {
        return Err(Error::shape(
            "conv2d_backward",
            format!(
                "upstream gradient {:?} does not match forward output [{}, {}, {}]",
                grad_out.shape(),
                g.cout,
                g.h,
                g.w
            ),
        ));
    }

    let input_grad = if want_input {
        // The adjoint of a same-size correlation is a correlation with the
        // kernel transposed over channels and flipped spatially.
        let k2 = g.k * g.k;
        let mut flipped = vec![0.0; g.cin * g.cout * k2];
        let kd = kernel.data();
        for co in 0..g.cout {
            for ci in 0..g.cin {
                let src = &kd[(co * g.cin + ci) * k2..][..k2];
                let dst = &mut flipped[(ci * g.cout + co) * k2..][..k2];
                for (t, d) in dst.iter_mut().enumerate() {
                    *d = src[k2 - 1 - t];
                }
            }
        }
        let mut gi = vec![0.0; g.cin * g.h * g.w];
        let gt = Geometry {
            cin: g.cout,
            cout: g.cin,
            ..g
        };
        correlate(&mut gi, grad_out.data(), &flipped, None, gt);
        Some(Tensor::new(vec![g.cin, g.h, g.w], gi)?)
    } else {
        None
    };

    let kernel_grad = kernel_gradient(grad_out.data(), input.data(), g);
    let hw = g.h * g.w;
    let bias_grad: Vec<f64> = (0..g.cout)
        .map(|co| sum(&grad_out.data()[co * hw..(co + 1) * hw]))
        .collect();

    Ok((
        input_grad,
        Tensor::new(kernel.shape().to_vec(), kernel_grad)?,
        Tensor::new(vec![g.cout], bias_grad)?,
    ))
}

/// Unfolds zero-padded `K x K` neighbourhoods into a `[Cin*K*K, H*W]`
/// matrix, row `(ci, ky, kx)`.
fn im2col(input: &[f64], g: Geometry) -> Vec<f64> {
    let Geometry { cin, h, w, k, .. } = g;
    let hw = h * w;
    let pad = k / 2;
    let mut col = vec![0.0; cin * k * k * hw];
    for ci in 0..cin {
        let src = &input[ci * hw..(ci + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((ci * k + ky) * k + kx) * hw..][..hw];
                let (x_lo, x_hi) = (pad.saturating_sub(kx), (w + pad).saturating_sub(kx).min(w));
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y + ky;
                    if sy < pad || sy - pad >= h {
                        continue;
                    }
                    let srow = &src[(sy - pad) * w..][..w];
                    row[y * w + x_lo..y * w + x_hi].copy_from_slice(&srow[x_lo + kx - pad..x_hi + kx - pad]);
                }
            }
        }
    }
    col
}

/// `C = alpha * A * B + beta * C` on row-major or strided operands.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
) {
    assert!(c.len() >= m * n && a.len() >= m * k && b.len() >= k * n);
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn correlate(out: &mut [f64], input: &[f64], kernel: &[f64], bias: Option<&[f64]>, g: Geometry) {
    #[cfg(target_arch = "x86_64")]
    if g.k == 3 && super::simd::available() {
        return super::simd::correlate3(out, input, kernel, bias, g.cin, g.cout, g.h, g.w);
    }
    correlate_gemm(out, input, kernel, bias, g)
}

fn correlate_gemm(out: &mut [f64], input: &[f64], kernel: &[f64], bias: Option<&[f64]>, g: Geometry) {
    let hw = g.h * g.w;
    for co in 0..g.cout {
        out[co * hw..(co + 1) * hw].fill(bias.map_or(0.0, |b| b[co]));
    }
    let kk = g.cin * g.k * g.k;
    let col = im2col(input, g);
    gemm(
        g.cout,
        kk,
        hw,
        kernel,
        (kk as isize, 1),
        &col,
        (hw as isize, 1),
        1.0,
        out,
    );
}

fn kernel_gradient(grad_out: &[f64], input: &[f64], g: Geometry) -> Vec<f64> {
    #[cfg(target_arch = "x86_64")]
    if g.k == 3 && super::simd::available() {
        return super::simd::kernel_grad3(grad_out, input, g.cin, g.cout, g.h, g.w);
    }
    kernel_gradient_gemm(grad_out, input, g)
}

fn kernel_gradient_gemm(grad_out: &[f64], input: &[f64], g: Geometry) -> Vec<f64> {
    let hw = g.h * g.w;
    let kk = g.cin * g.k * g.k;
    let col = im2col(input, g);
    let mut grad = vec![0.0; g.cout * kk];
    gemm(
        g.cout,
        hw,
        kk,
        grad_out,
        (hw as isize, 1),
        &col,
        (1, hw as isize),
        0.0,
        &mut grad,
    );
    grad
}

pub(crate) fn sum(a: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let ra = ca.remainder();
    for x in ca {
        for i in 0..8 {
            acc[i] += x[i];
        }
    }
    let tail: f64 = ra.iter().sum();
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::finite_diff_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// Direct quadruple loop, no shortcuts.
    fn naive(input: &Tensor, kernel: &Tensor, bias: &Tensor) -> Tensor {
        let (cin, h, w) = input.dims3().unwrap();
        let (cout, k) = (kernel.shape()[0], kernel.shape()[2]);
        let p = (k / 2) as isize;
        let mut out = Tensor::zeros(&[cout, h, w]);
        for co in 0..cout {
            for y in 0..h {
                for x in 0..w {
                    let mut acc = bias.data()[co];
                    for ci in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = y as isize + ky as isize - p;
                                let sx = x as isize + kx as isize - p;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                acc += kernel.data()[((co * cin + ci) * k + ky) * k + kx]
                                    * input.data()[(ci * h + sy as usize) * w + sx as usize];
                            }
                        }
                    }
                    out.data_mut()[(co * h + y) * w + x] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn one_by_one_kernel_scales() {
        let x = Tensor::full(&[1, 3, 3], 1.0);
        let k = Tensor::full(&[1, 1, 1, 1], 2.0);
        let b = Tensor::full(&[1], 0.5);
        let y = conv2d_forward(&x, &k, &b).unwrap();
        assert!(y.data().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn box_filter_counts_zero_padded_taps() {
        let x = Tensor::full(&[1, 3, 3], 1.0);
        let k = Tensor::full(&[1, 1, 3, 3], 1.0 / 9.0);
        let y = conv2d_forward(&x, &k, &Tensor::zeros(&[1])).unwrap();
        let d = y.data();
        assert!((d[4] - 1.0).abs() < 1e-15);
        for &i in &[1, 3, 5, 7] {
            assert!((d[i] - 6.0 / 9.0).abs() < 1e-15);
        }
        for &i in &[0, 2, 6, 8] {
            assert!((d[i] - 4.0 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let x = Tensor::zeros(&[2, 4, 4]);
        let k = Tensor::zeros(&[1, 3, 3, 3]);
        let err = conv2d_forward(&x, &k, &Tensor::zeros(&[1])).unwrap_err();
        assert!(err.to_string().contains("2 channels"), "{err}");
        let even = Tensor::zeros(&[1, 2, 2, 2]);
        assert!(conv2d_forward(&x, &even, &Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn fast_and_general_paths_match_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(cin, cout, h, w, k) in &[
            (2, 3, 5, 7, 3),
            (1, 1, 1, 1, 3),
            (3, 2, 1, 6, 3),
            (2, 2, 6, 5, 5),
            (2, 4, 4, 4, 1),
            (1, 2, 2, 3, 5),
        ] {
            let x = random(&[cin, h, w], &mut rng);
            let kern = random(&[cout, cin, k, k], &mut rng);
            let b = random(&[cout], &mut rng);
            let fast = conv2d_forward(&x, &kern, &b).unwrap();
            let slow = naive(&x, &kern, &b);
            assert!(fast.max_abs_diff(&slow).unwrap() < 1e-12, "{cin} {cout} {h} {w} {k}");
        }
    }

    #[test]
    fn vector_kernels_match_gemm() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &(cin, cout, h, w) in &[
            (9, 16, 13, 37),
            (5, 7, 3, 8),
            (1, 9, 1, 1),
            (16, 5, 9, 96),
            (3, 3, 2, 17),
        ] {
            let g = Geometry { cin, cout, h, w, k: 3 };
            let x = random(&[cin, h, w], &mut rng);
            let kern = random(&[cout, cin, 3, 3], &mut rng);
            let b = random(&[cout], &mut rng);
            let up = random(&[cout, h, w], &mut rng);
            let mut fast = vec![0.0; cout * h * w];
            let mut slow = fast.clone();
            correlate(&mut fast, x.data(), kern.data(), Some(b.data()), g);
            correlate_gemm(&mut slow, x.data(), kern.data(), Some(b.data()), g);
            let d = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(d < 1e-12, "forward {cin} {cout} {h} {w}: {d}");
            let fast = kernel_gradient(up.data(), x.data(), g);
            let slow = kernel_gradient_gemm(up.data(), x.data(), g);
            let d = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(d < 1e-10, "kernel grad {cin} {cout} {h} {w}: {d}");
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[2, 5, 5], &mut rng);
        let k = random(&[3, 2, 3, 3], &mut rng);
        let g = conv2d_backward(&Tensor::zeros(&[3, 5, 5]), &x, &k).unwrap();
        assert!(g.input.data().iter().all(|&v| v == 0.0));
        assert!(g.kernel.data().iter().all(|&v| v == 0.0));
        assert!(g.bias.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_kernel_input_gradient_is_scaled_upstream() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&[1, 4, 6], &mut rng);
        let w = 0.37;
        let k = Tensor::full(&[1, 1, 1, 1], w);
        let go = random(&[1, 4, 6], &mut rng);
        let g = conv2d_backward(&go, &x, &k).unwrap();
        for (gi, go) in g.input.data().iter().zip(go.data()) {
            assert_eq!(*gi, w * go);
        }
    }

    #[test]
    fn backward_rejects_inconsistent_upstream() {
        let x = Tensor::zeros(&[2, 4, 4]);
        let k = Tensor::zeros(&[3, 2, 3, 3]);
        assert!(conv2d_backward(&Tensor::zeros(&[2, 4, 4]), &x, &k).is_err());
        assert!(conv2d_backward(&Tensor::zeros(&[3, 4, 5]), &x, &k).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let x = random(&[2, 8, 8], &mut rng);
            let k = random(&[4, 2, 3, 3], &mut rng);
            let b = random(&[4], &mut rng);
            // Scalar objective: weighted sum of outputs.
            let proj = random(&[4, 8, 8], &mut rng);
            let grads = conv2d_backward(&proj, &x, &k).unwrap();
            let loss = |x: &Tensor, k: &Tensor, b: &Tensor| -> f64 {
                let y = conv2d_forward(x, k, b).unwrap();
                dot(y.data(), proj.data())
            };
            let rx = finite_diff_check(|t| Ok(loss(t, &k, &b)), &grads.input, &x, 1e-5).unwrap();
            let rk = finite_diff_check(|t| Ok(loss(&x, t, &b)), &grads.kernel, &k, 1e-5).unwrap();
            let rb = finite_diff_check(|t| Ok(loss(&x, &k, t)), &grads.bias, &b, 1e-5).unwrap();
            assert!(rx.max_rel_error < 1e-4, "input {rx:?}");
            assert!(rk.max_rel_error < 1e-4, "kernel {rk:?}");
            assert!(rb.max_rel_error < 1e-4, "bias {rb:?}");
        }
    }

    #[test]
    fn general_path_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = random(&[2, 6, 5], &mut rng);
        let k = random(&[3, 2, 5, 5], &mut rng);
        let proj = random(&[3, 6, 5], &mut rng);
        let b = Tensor::zeros(&[3]);
        let grads = conv2d_backward(&proj, &x, &k).unwrap();
        let loss = |x: &Tensor, k: &Tensor| dot(conv2d_forward(x, k, &b).unwrap().data(), proj.data());
        let rx = finite_diff_check(|t| Ok(loss(t, &k)), &grads.input, &x, 1e-5).unwrap();
        let rk = finite_diff_check(|t| Ok(loss(&x, t)), &grads.kernel, &k, 1e-5).unwrap();
        assert!(rx.max_rel_error < 1e-4 && rk.max_rel_error < 1e-4);
    }
}
