//! Gaussian-window SSIM and MS-SSIM with analytic gradients.
//!
//! Local moments use "valid" filtering (no padding), so a `H x W` plane
//! yields a `(H - 10) x (W - 10)` SSIM map for the default 11-tap window.
//! Gradients are taken with respect to the first argument.

use crate::error::{Error, Result};
use crate::tensor::{sum, Tensor};

/// Window and stabilizing constants for SSIM.
#[derive(Clone, Debug, PartialEq)]
pub struct SsimParams {
    pub window_size: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of the samples; 1 for normalized data.
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window_size: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let half = (self.window_size / 2) as f64;
        let raw: Vec<f64> = (0..self.window_size)
            .map(|i| {
                let d = i as f64 - half;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / total).collect()
    }

    /// The full 2-D window, row-major.
    pub fn window(&self) -> Vec<f64> {
        let t = self.taps();
        t.iter().flat_map(|a| t.iter().map(move |b| a * b)).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.window_size == 0 || self.window_size.is_multiple_of(2) || !(self.sigma > 0.0) {
            return Err(Error::invalid(format!(
                "SSIM window must have odd size and positive sigma, got {} / {}",
                self.window_size, self.sigma
            )));
        }
        Ok(())
    }
}

/// Scale weights and per-scale SSIM settings for MS-SSIM.
#[derive(Clone, Debug, PartialEq)]
pub struct MsSsimParams {
    pub weights: Vec<f64>,
    pub ssim: SsimParams,
}

/// Published five-scale MS-SSIM exponents.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

impl Default for MsSsimParams {
    fn default() -> Self {
        Self {
            weights: MS_SSIM_WEIGHTS.to_vec(),
            ssim: SsimParams::default(),
        }
    }
}

impl MsSsimParams {
    /// Number of scales usable on an `h x w` input: the configured count,
    /// or fewer if the coarsest would be smaller than the window.
    pub fn scales_for(&self, h: usize, w: usize) -> Result<usize> {
        let min = h.min(w);
        let win = self.ssim.window_size;
        let fit = (0..self.weights.len()).take_while(|&j| (min >> j) >= win).count();
        if fit == 0 {
            return Err(Error::invalid(format!(
                "{h}x{w} input is smaller than the {win}x{win} SSIM window"
            )));
        }
        Ok(fit)
    }

    /// Weights for `scales` levels; a truncated set is renormalized to sum 1.
    pub fn weights_for(&self, scales: usize) -> Vec<f64> {
        if scales == self.weights.len() {
            return self.weights.clone();
        }
        let head = &self.weights[..scales];
        let total: f64 = head.iter().sum();
        head.iter().map(|w| w / total).collect()
    }
}

/// `dst[i] = sum_t taps[t] * rows[t][i]`.
fn fir_rows(dst: &mut [f64], rows: &[&[f64]], taps: &[f64]) {
    #[cfg(target_arch = "x86_64")]
    if crate::tensor::simd::available() {
        return crate::tensor::simd::fir_rows(dst, rows, taps);
    }
    fir_rows_portable(dst, rows, taps)
}

fn fir_rows_portable(dst: &mut [f64], rows: &[&[f64]], taps: &[f64]) {
    let n = dst.len();
    let mut x = 0;
    while x + 32 <= n {
        fir_block::<32>(dst, rows, taps, x);
        x += 32;
    }
    while x + 8 <= n {
        fir_block::<8>(dst, rows, taps, x);
        x += 8;
    }
    for x in x..n {
        dst[x] = rows.iter().zip(taps).map(|(r, &g)| g * r[x]).sum();
    }
}

#[inline(always)]
fn fir_block<const L: usize>(dst: &mut [f64], rows: &[&[f64]], taps: &[f64], x: usize) {
    let mut acc = [0.0f64; L];
    for (r, &g) in rows.iter().zip(taps) {
        let v: &[f64; L] = r[x..x + L].try_into().expect("L lanes");
        for l in 0..L {
            acc[l] += g * v[l];
        }
    }
    dst[x..x + L].copy_from_slice(&acc);
}

/// `dst[i] = sum_t taps[t] * src[i + t]`.
fn fir_shifted(dst: &mut [f64], src: &[f64], taps: &[f64]) {
    let n = dst.len();
    let rows: Vec<&[f64]> = (0..taps.len()).map(|t| &src[t..t + n]).collect();
    fir_rows(dst, &rows, taps);
}

/// Valid-region separable filter of a `h x w` plane.
fn filter_valid(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        fir_shifted(&mut rows[y * ow..(y + 1) * ow], &src[y * w..(y + 1) * w], taps);
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        let window: Vec<&[f64]> = (0..k).map(|t| &rows[(y + t) * ow..(y + t + 1) * ow]).collect();
        fir_rows(&mut out[y * ow..(y + 1) * ow], &window, taps);
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters a `(h-k+1) x (w-k+1)` gradient back
/// onto the `h x w` input. Equivalent to a full-size correlation of the
/// zero-padded gradient with the reversed taps.
fn filter_valid_adjoint(grad: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ow, oh) = (w + 1 - k, h + 1 - k);
    let rev: Vec<f64> = taps.iter().rev().copied().collect();
    let zero = vec![0.0; ow];
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let window: Vec<&[f64]> = (0..k)
            .map(|t| {
                let sy = (y + t) as isize - (k - 1) as isize;
                if sy >= 0 && (sy as usize) < oh {
                    &grad[sy as usize * ow..(sy as usize + 1) * ow]
                } else {
                    &zero[..]
                }
            })
            .collect();
        fir_rows(&mut rows[y * ow..(y + 1) * ow], &window, &rev);
    }
    let mut out = vec![0.0; h * w];
    let mut padded = vec![0.0; ow + 2 * (k - 1)];
    for y in 0..h {
        padded[k - 1..k - 1 + ow].copy_from_slice(&rows[y * ow..(y + 1) * ow]);
        fir_shifted(&mut out[y * w..(y + 1) * w], &padded, &rev);
    }
    out
}

/// Local moment maps of one plane pair over the valid window positions.
pub(crate) struct Moments {
    w: usize,
    h: usize,
    taps: Vec<f64>,
    c1: f64,
    c2: f64,
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    e_xx: Vec<f64>,
    e_yy: Vec<f64>,
    e_xy: Vec<f64>,
}

impl Moments {
    pub fn new(x: &[f64], y: &[f64], w: usize, h: usize, p: &SsimParams) -> Self {
        let taps = p.taps();
        let prod = |f: fn(f64, f64) -> f64| -> Vec<f64> { x.iter().zip(y).map(|(&a, &b)| f(a, b)).collect() };
        Self {
            mu_x: filter_valid(x, w, h, &taps),
            mu_y: filter_valid(y, w, h, &taps),
            e_xx: filter_valid(&prod(|a, _| a * a), w, h, &taps),
            e_yy: filter_valid(&prod(|_, b| b * b), w, h, &taps),
            e_xy: filter_valid(&prod(|a, b| a * b), w, h, &taps),
            w,
            h,
            taps,
            c1: p.c1(),
            c2: p.c2(),
        }
    }

    /// Per-position luminance and contrast-structure terms: numerators and
    /// denominators `(a1, b1, a2, b2)`.
    fn terms(&self) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
        let (c1, c2) = (self.c1, self.c2);
        self.mu_x
            .iter()
            .zip(&self.mu_y)
            .zip(self.e_xx.iter().zip(&self.e_yy).zip(&self.e_xy))
            .map(move |((&mx, &my), ((&xx, &yy), &xy))| {
                (
                    2.0 * mx * my + c1,
                    mx * mx + my * my + c1,
                    2.0 * (xy - mx * my) + c2,
                    (xx - mx * mx) + (yy - my * my) + c2,
                )
            })
    }

    /// Map means of SSIM and of the contrast-structure term.
    pub fn means(&self) -> (f64, f64) {
        let n = self.mu_x.len();
        let (mut ssim_map, mut cs_map) = (vec![0.0; n], vec![0.0; n]);
        for ((s, c), (a1, b1, a2, b2)) in ssim_map.iter_mut().zip(cs_map.iter_mut()).zip(self.terms()) {
            *c = a2 / b2;
            *s = (a1 / b1) * *c;
        }
        let inv_n = 1.0 / n as f64;
        (sum(&ssim_map) * inv_n, sum(&cs_map) * inv_n)
    }

    /// Gradient of `alpha * mean SSIM + beta * mean cs` with respect to `x`.
    pub fn grad(&self, x: &[f64], y: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
        let n = self.mu_x.len();
        let inv_n = 1.0 / n as f64;
        let (mut d_mu, mut d_exx, mut d_exy) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let outs = d_mu.iter_mut().zip(d_exx.iter_mut()).zip(d_exy.iter_mut());
        let ins = self.mu_x.iter().zip(&self.mu_y).zip(self.terms());
        for (((dm, dxx), dxy), ((&mx, &my), (a1, b1, a2, b2))) in outs.zip(ins) {
            let cs = a2 / b2;
            let s = (a1 / b1) * cs;
            let (sa, cb) = (alpha * s * inv_n, beta * cs * inv_n);
            let cs_mu = -2.0 * my / a2 + 2.0 * mx / b2;
            *dm = sa * (2.0 * my / a1 - 2.0 * mx / b1 + cs_mu) + cb * cs_mu;
            *dxx = -(sa + cb) / b2;
            *dxy = 2.0 * (sa + cb) / a2;
        }
        let (w, h) = (self.w, self.h);
        let mut g = filter_valid_adjoint(&d_mu, w, h, &self.taps);
        let gxx = filter_valid_adjoint(&d_exx, w, h, &self.taps);
        let gxy = filter_valid_adjoint(&d_exy, w, h, &self.taps);
        for ((o, (&xv, &yv)), (&a, &b)) in g.iter_mut().zip(x.iter().zip(y)).zip(gxx.iter().zip(&gxy)) {
            *o += 2.0 * xv * a + yv * b;
        }
        g
    }
}

fn check_pair(op: &'static str, a: &Tensor, b: &Tensor, window: usize) -> Result<(usize, usize, usize)> {
    a.ensure_same_shape(b, op)?;
    let (c, h, w) = a.dims3()?;
    if h < window || w < window {
        return Err(Error::invalid(format!(
            "{op}: {h}x{w} input is smaller than the {window}x{window} window"
        )));
    }
    Ok((c, h, w))
}

/// SSIM averaged over the map and over channels of two `[C, H, W]` tensors,
/// with its gradient with respect to `a` when requested.
pub(crate) fn ssim_with_grad(a: &Tensor, b: &Tensor, p: &SsimParams, want_grad: bool) -> Result<(f64, Option<Tensor>)> {
    p.validate()?;
    let (c, h, w) = check_pair("ssim", a, b, p.window_size)?;
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Tensor::zeros(a.shape()));
    let inv_c = 1.0 / c as f64;
    for ch in 0..c {
        let m = Moments::new(a.plane(ch), b.plane(ch), w, h, p);
        total += m.means().0;
        if let Some(g) = grad.as_mut() {
            g.plane_mut(ch)
                .copy_from_slice(&m.grad(a.plane(ch), b.plane(ch), inv_c, 0.0));
        }
    }
    Ok((total * inv_c, grad))
}

/// Mean SSIM of two `[C, H, W]` tensors.
pub fn ssim(a: &Tensor, b: &Tensor, params: &SsimParams) -> Result<f64> {
    Ok(ssim_with_grad(a, b, params, false)?.0)
}

/// 2x2 mean pooling; odd trailing rows/columns are dropped.
fn downsample(src: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w / 2, h / 2);
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        let r0 = &src[2 * y * w..];
        let r1 = &src[(2 * y + 1) * w..];
        for x in 0..ow {
            out.push(0.25 * (r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1]));
        }
    }
    (out, ow, oh)
}

fn downsample_adjoint(grad: &[f64], w: usize, h: usize) -> Vec<f64> {
    let (ow, oh) = (w / 2, h / 2);
    let mut out = vec![0.0; w * h];
    for y in 0..oh {
        for x in 0..ow {
            let g = 0.25 * grad[y * ow + x];
            out[2 * y * w + 2 * x] = g;
            out[2 * y * w + 2 * x + 1] = g;
            out[(2 * y + 1) * w + 2 * x] = g;
            out[(2 * y + 1) * w + 2 * x + 1] = g;
        }
    }
    out
}

/// Per-scale terms below this are clamped (zero gradient) so fractional
/// exponents stay real.
const MS_SSIM_FLOOR: f64 = 1e-6;

/// Single-scale SSIM and MS-SSIM of one plane pair, sharing the
/// full-resolution moments. With `grad_weights = Some((ks, km))` also
/// returns the gradient of `ks * ssim + km * ms_ssim` with respect to `x`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn plane_ssim_msssim(
    x: &[f64],
    y: &[f64],
    w: usize,
    h: usize,
    p: &MsSsimParams,
    scales: usize,
    weights: &[f64],
    grad_weights: Option<(f64, f64)>,
) -> (f64, f64, Option<Vec<f64>>) {
    let mut pyramid = vec![(x.to_vec(), y.to_vec(), w, h)];
    for _ in 1..scales {
        let (px, py, pw, ph) = pyramid.last().expect("non-empty");
        let (nx, nw, nh) = downsample(px, *pw, *ph);
        let (ny, _, _) = downsample(py, *pw, *ph);
        pyramid.push((nx, ny, nw, nh));
    }
    let moments: Vec<Moments> = pyramid
        .iter()
        .map(|(px, py, pw, ph)| Moments::new(px, py, *pw, *ph, &p.ssim))
        .collect();
    let stats: Vec<(f64, f64)> = moments.iter().map(Moments::means).collect();
    // Term j: cs for all but the coarsest scale, full SSIM at the coarsest.
    let terms: Vec<f64> = (0..scales)
        .map(|j| if j + 1 < scales { stats[j].1 } else { stats[j].0 })
        .collect();
    let value: f64 = terms
        .iter()
        .zip(weights)
        .map(|(t, wt)| t.max(MS_SSIM_FLOOR).powf(*wt))
        .product();

    let grad = grad_weights.map(|(ks, km)| {
        let mut acc: Option<Vec<f64>> = None;
        for j in (0..scales).rev() {
            let (ref px, ref py, sw, sh) = pyramid[j];
            let mut here = match acc.take() {
                Some(coarse) => downsample_adjoint(&coarse, sw, sh),
                None => vec![0.0; sw * sh],
            };
            let coef = if terms[j] > MS_SSIM_FLOOR {
                km * value * weights[j] / terms[j]
            } else {
                0.0
            };
            let (alpha, beta) = if j + 1 < scales { (0.0, coef) } else { (coef, 0.0) };
            let alpha = if j == 0 { alpha + ks } else { alpha };
            if alpha != 0.0 || beta != 0.0 {
                for (o, d) in here.iter_mut().zip(moments[j].grad(px, py, alpha, beta)) {
                    *o += d;
                }
            }
            acc = Some(here);
        }
        acc.expect("at least one scale")
    });
    (stats[0].0, value, grad)
}

fn ms_ssim_setup(a: &Tensor, b: &Tensor, p: &MsSsimParams) -> Result<(usize, usize, usize, usize, Vec<f64>)> {
    p.ssim.validate()?;
    let (c, h, w) = check_pair("ms_ssim", a, b, p.ssim.window_size)?;
    let scales = p.scales_for(h, w)?;
    if scales < p.weights.len() {
        log::debug!(
            "MS-SSIM on {h}x{w}: using {scales} of {} scales with renormalized weights",
            p.weights.len()
        );
    }
    Ok((c, h, w, scales, p.weights_for(scales)))
}

pub(crate) fn ms_ssim_with_grad(
    a: &Tensor,
    b: &Tensor,
    p: &MsSsimParams,
    want_grad: bool,
) -> Result<(f64, Option<Tensor>)> {
    let (_, total, grad) = ssim_and_ms_ssim_with_grad(a, b, p, want_grad.then_some((0.0, 1.0)))?;
    Ok((total, grad))
}

/// Channel-mean SSIM and MS-SSIM in one pass. With
/// `grad_weights = Some((ks, km))` also returns the gradient of
/// `ks * ssim + km * ms_ssim` with respect to `a`.
pub(crate) fn ssim_and_ms_ssim_with_grad(
    a: &Tensor,
    b: &Tensor,
    p: &MsSsimParams,
    grad_weights: Option<(f64, f64)>,
) -> Result<(f64, f64, Option<Tensor>)> {
    let (c, h, w, scales, weights) = ms_ssim_setup(a, b, p)?;
    let inv_c = 1.0 / c as f64;
    let (mut s_total, mut m_total) = (0.0, 0.0);
    let mut grad = grad_weights.map(|_| Tensor::zeros(a.shape()));
    let gw = grad_weights.map(|(ks, km)| (ks * inv_c, km * inv_c));
    for ch in 0..c {
        let (s, m, g) = plane_ssim_msssim(a.plane(ch), b.plane(ch), w, h, p, scales, &weights, gw);
        s_total += s;
        m_total += m;
        if let (Some(out), Some(g)) = (grad.as_mut(), g) {
            out.plane_mut(ch).copy_from_slice(&g);
        }
    }
    Ok((s_total * inv_c, m_total * inv_c, grad))
}

/// Multi-scale SSIM of two `[C, H, W]` tensors, averaged over channels.
pub fn ms_ssim(a: &Tensor, b: &Tensor, params: &MsSsimParams) -> Result<f64> {
    Ok(ms_ssim_with_grad(a, b, params, false)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::finite_diff_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(shape, |_| rng.gen::<f64>())
    }

    fn noisy(a: &Tensor, amp: f64, rng: &mut ChaCha8Rng) -> Tensor {
        a.map(|v| v + amp * rng.gen_range(-1.0..1.0))
    }

    /// Direct 2-D windowed SSIM, no separability and no shared code.
    fn brute_ssim(a: &[f64], b: &[f64], w: usize, h: usize) -> f64 {
        let p = SsimParams::default();
        let win = p.window();
        let k = p.window_size;
        let (c1, c2) = (p.c1(), p.c2());
        let mut total = 0.0;
        let mut n = 0;
        for oy in 0..=h - k {
            for ox in 0..=w - k {
                let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..k {
                    for dx in 0..k {
                        let g = win[dy * k + dx];
                        let (u, v) = (a[(oy + dy) * w + ox + dx], b[(oy + dy) * w + ox + dx]);
                        mx += g * u;
                        my += g * v;
                        xx += g * u * u;
                        yy += g * v * v;
                        xy += g * u * v;
                    }
                }
                let (sx, sy, sxy) = (xx - mx * mx, yy - my * my, xy - mx * my);
                total += (2.0 * mx * my + c1) * (2.0 * sxy + c2) / ((mx * mx + my * my + c1) * (sx + sy + c2));
                n += 1;
            }
        }
        total / n as f64
    }

    #[test]
    fn window_is_normalized_and_symmetric() {
        let p = SsimParams::default();
        let win = p.window();
        assert!((win.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let k = p.window_size;
        for y in 0..k {
            for x in 0..k {
                let v = win[y * k + x];
                assert_eq!(v, win[x * k + y]);
                assert_eq!(v, win[y * k + (k - 1 - x)]);
                assert_eq!(v, win[(k - 1 - y) * k + x]);
            }
        }
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&[1, 17, 14], &mut rng);
        let b = noisy(&a, 0.2, &mut rng);
        let fast = ssim(&a, &b, &SsimParams::default()).unwrap();
        let slow = brute_ssim(a.data(), b.data(), 14, 17);
        assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
    }

    #[test]
    fn identical_inputs_score_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(&[3, 40, 40], &mut rng);
        assert!((ssim(&a, &a, &SsimParams::default()).unwrap() - 1.0).abs() < 1e-9);
        assert!((ms_ssim(&a, &a, &MsSsimParams::default()).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_variance_closed_form() {
        let a = Tensor::zeros(&[1, 16, 16]);
        let b = Tensor::full(&[1, 16, 16], 0.5);
        let c1 = SsimParams::default().c1();
        let s = ssim(&a, &b, &SsimParams::default()).unwrap();
        assert!((s - c1 / (0.25 + c1)).abs() < 1e-9);
    }

    #[test]
    fn symmetric_and_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&[2, 20, 20], &mut rng);
        let b = noisy(&a, 0.3, &mut rng);
        let p = SsimParams::default();
        let s = ssim(&a, &b, &p).unwrap();
        assert!((s - ssim(&b, &a, &p).unwrap()).abs() < 1e-12);
        let rot = |t: &Tensor| {
            Tensor::from_fn(t.shape(), |i| {
                let (c, y, x) = (i / 400, (i / 20) % 20, i % 20);
                t.data()[c * 400 + (19 - x) * 20 + y]
            })
        };
        assert!((s - ssim(&rot(&a), &rot(&b), &p).unwrap()).abs() < 1e-9);
        let mp = MsSsimParams::default();
        let m = ms_ssim(&a, &b, &mp).unwrap();
        assert!((m - ms_ssim(&b, &a, &mp).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn scale_fallback() {
        let p = MsSsimParams::default();
        assert_eq!(p.scales_for(96, 96).unwrap(), 4);
        assert_eq!(p.scales_for(176, 200).unwrap(), 5);
        assert_eq!(p.scales_for(48, 48).unwrap(), 3);
        assert!(p.scales_for(10, 96).is_err());
        let w4 = p.weights_for(4);
        assert!((w4.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((MS_SSIM_WEIGHTS.iter().sum::<f64>() - 1.0001).abs() < 2e-4);
    }

    #[test]
    fn ms_ssim_in_unit_interval_on_patches() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random(&[3, 96, 96], &mut rng);
        let b = noisy(&a, 0.05, &mut rng);
        let m = ms_ssim(&a, &b, &MsSsimParams::default()).unwrap();
        assert!(m > 0.0 && m <= 1.0, "{m}");
    }

    #[test]
    fn ms_ssim_falls_with_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random(&[1, 96, 96], &mut rng);
        let p = MsSsimParams::default();
        let scores: Vec<f64> = [0.02, 0.1, 0.3]
            .iter()
            .map(|&amp| ms_ssim(&a, &noisy(&a, amp, &mut rng), &p).unwrap())
            .collect();
        assert!(scores[0] > scores[1] && scores[1] > scores[2], "{scores:?}");
    }

    #[test]
    fn too_small_rejected() {
        let a = Tensor::zeros(&[1, 10, 30]);
        assert!(ssim(&a, &a, &SsimParams::default()).is_err());
        assert!(ms_ssim(&a, &a, &MsSsimParams::default()).is_err());
        let b = Tensor::zeros(&[1, 30, 10]);
        assert!(ssim(&a, &b, &SsimParams::default()).is_err());
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random(&[2, 16, 15], &mut rng);
        let b = noisy(&a, 0.2, &mut rng);
        let p = SsimParams::default();
        let (_, g) = ssim_with_grad(&a, &b, &p, true).unwrap();
        let r = finite_diff_check(|t| ssim(t, &b, &p), &g.unwrap(), &a, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn ms_ssim_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random(&[1, 25, 23], &mut rng);
        let b = noisy(&a, 0.2, &mut rng);
        let p = MsSsimParams::default();
        assert_eq!(p.scales_for(25, 23).unwrap(), 2);
        let (_, g) = ms_ssim_with_grad(&a, &b, &p, true).unwrap();
        let r = finite_diff_check(|t| ms_ssim(t, &b, &p), &g.unwrap(), &a, 1e-5).unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }
}
