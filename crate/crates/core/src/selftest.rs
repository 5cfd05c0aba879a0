//! Quick built-in oracle checks, run by `trifuse selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::loss::{combined_loss, l1_loss, l2_loss, msssim_loss, ssim_loss, LossWeights};
use crate::metrics::{ms_ssim, psnr, ssim, MsSsimParams, SsimParams};
use crate::model::{GeneratorConfig, GeneratorModel};
use crate::pipeline::{enhance_clip, synthetic_clip};
use crate::tensor::{conv2d_backward, conv2d_forward, finite_diff_check, finite_diff_check_at, Tensor};
use crate::tiling::{channel_window, compute_layout};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen::<f64>())
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match f() {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn conv_grad() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&[2, 7, 6], &mut rng);
    let k = random(&[3, 2, 3, 3], &mut rng);
    let b = random(&[3], &mut rng);
    let go = random(&[3, 7, 6], &mut rng);
    let g = conv2d_backward(&go, &x, &k)?;
    let dot = |t: &Tensor| -> f64 { t.data().iter().zip(go.data()).map(|(a, b)| a * b).sum() };
    let rx = finite_diff_check(|t| Ok(dot(&conv2d_forward(t, &k, &b)?)), &g.input, &x, 1e-5)?;
    let rk = finite_diff_check(|t| Ok(dot(&conv2d_forward(&x, t, &b)?)), &g.kernel, &k, 1e-5)?;
    let worst = rx.max_rel_error.max(rk.max_rel_error);
    Ok((worst < 1e-4, format!("max relative error {worst:.2e}")))
}

fn loss_grads() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let t = random(&[2, 24, 24], &mut rng);
    let p = t.map(|v| (v + 0.1 * (v * 37.0).sin()).clamp(0.0, 1.0));
    let coords: Vec<usize> = (0..16).map(|_| rng.gen_range(0..p.len())).collect();
    let sp = SsimParams::default();
    let mp = MsSsimParams::default();
    let mut worst: f64 = 0.0;
    type LossFn<'a> = Box<dyn Fn(&Tensor) -> Result<(f64, Tensor)> + 'a>;
    let fns: Vec<LossFn> = vec![
        Box::new(|x| l1_loss(x, &t)),
        Box::new(|x| l2_loss(x, &t)),
        Box::new(|x| ssim_loss(x, &t, &sp)),
        Box::new(|x| msssim_loss(x, &t, &mp)),
        Box::new(|x| combined_loss(x, &t, &LossWeights::default()).map(|v| (v.total, v.grad))),
    ];
    for f in &fns {
        let (_, g) = f(&p)?;
        let r = finite_diff_check_at(|x| Ok(f(x)?.0), &g, &p, 1e-5, &coords)?;
        worst = worst.max(r.max_rel_error);
    }
    Ok((worst < 1e-3, format!("max relative error {worst:.2e}")))
}

fn model_grads() -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = GeneratorConfig {
        hidden_width: 4,
        residual_blocks: 1,
        ..GeneratorConfig::default()
    };
    let mut m = GeneratorModel::init(cfg, 3)?;
    let tail = m.params().len() - 2;
    *m.param_mut(tail) = random(m.params()[tail].value.shape(), &mut rng).map(|v| 0.1 * (v - 0.5));
    let x = random(&[9, 10, 10], &mut rng);
    let proj = random(&[9, 10, 10], &mut rng);
    let (_, tape) = m.forward(&x, true)?;
    let g = m.backward(&tape.expect("tape requested"), &proj)?;
    let mut worst: f64 = 0.0;
    for pi in 0..m.params().len() {
        let coords: Vec<usize> = (0..6).map(|_| rng.gen_range(0..m.params()[pi].value.len())).collect();
        let r = finite_diff_check_at(
            |t| {
                let mut mm = m.clone();
                *mm.param_mut(pi) = t.clone();
                let (y, _) = mm.forward(&x, false)?;
                Ok(y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum())
            },
            &g.params[pi],
            &m.params()[pi].value,
            1e-5,
            &coords,
        )?;
        worst = worst.max(r.max_rel_error);
    }
    Ok((worst < 1e-3, format!("max relative error {worst:.2e}")))
}

fn metric_oracles() -> Result<(bool, String)> {
    let a = Tensor::full(&[3, 32, 32], 0.5);
    let b = a.map(|v| v + 1.0 / 255.0);
    let p = psnr(&a, &b, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&[3, 64, 64], &mut rng);
    let s = ssim(&x, &x, &SsimParams::default())?;
    let ms = ms_ssim(&x, &x, &MsSsimParams::default())?;
    let sp = SsimParams::default();
    let zv = ssim(&Tensor::zeros(&[1, 16, 16]), &Tensor::full(&[1, 16, 16], 0.5), &sp)?;
    let want = sp.c1() / (0.25 + sp.c1());
    let ok =
        (p - 48.1308).abs() < 1e-3 && (s - 1.0).abs() < 1e-9 && (ms - 1.0).abs() < 1e-9 && (zv - want).abs() < 1e-9;
    Ok((
        ok,
        format!("psnr {p:.4} dB, ssim {s:.12}, ms-ssim {ms:.12}, zero-variance {zv:.3e}"),
    ))
}

fn tiling() -> Result<(bool, String)> {
    let full_hd = compute_layout(1920, 1080)?.anchors().len();
    let windows: Vec<usize> = (0..10)
        .map(|i| channel_window(i, 10).map(|w| w.start))
        .collect::<Result<_>>()?;
    let ok = full_hd == 252 && windows[0] == 0 && windows[9] == 6 && windows[1..9].iter().all(|&s| s == 3);
    Ok((ok, format!("1920x1080 anchors {full_hd}, windows {windows:?}")))
}

fn identity_enhance() -> Result<(bool, String)> {
    let clip = synthetic_clip(100, 100, 3, 5)?;
    let m = GeneratorModel::init(GeneratorConfig::default(), 5)?;
    let out = enhance_clip(&m, &clip)?;
    let mut worst: f64 = 0.0;
    for (a, b) in out.frames().iter().zip(clip.frames()) {
        worst = worst.max(a.to_tensor().max_abs_diff(&b.to_tensor())?);
    }
    Ok((worst < 1e-12, format!("max sample delta {worst:.2e}")))
}

/// Runs every check and returns one result per check.
pub fn run_selftest() -> Vec<CheckResult> {
    vec![
        check("conv gradients", conv_grad),
        check("loss gradients", loss_grads),
        check("model gradients", model_grads),
        check("metric oracles", metric_oracles),
        check("tiling", tiling),
        check("identity enhancement", identity_enhance),
    ]
}
