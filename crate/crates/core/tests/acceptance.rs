//! Acceptance suite. Runs every criterion in sequence on one thread of
//! control so the timing budgets are measured without interference, prints
//! one line per criterion and exits non-zero if any fails.

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trifuse_core::frame_io::{
    decode_y4m, encode_y4m, rgb_to_ycbcr, ycbcr_to_rgb, ChromaFilter, ColorConfig, ColorMatrix, ColorRange,
};
use trifuse_core::loss::{combined_loss, l1_loss, l2_loss, msssim_loss, ssim_loss, LossWeights};
use trifuse_core::metrics::SsimParams;
use trifuse_core::model::{decode_checkpoint, encode_checkpoint, save_checkpoint};
use trifuse_core::pipeline::{
    build_dataset, degrade_clip, enhance_clip, load_dataset, save_dataset, synthetic_clip, train,
};
use trifuse_core::tensor::finite_diff_check_at;
use trifuse_core::tiling::{channel_window, compute_layout};
use trifuse_core::{
    ms_ssim, psnr, ssim, Clip, ColorSpace, DegradeSpec, Error, Frame, GeneratorConfig, GeneratorModel, MsSsimParams,
    PatchPair, Result, Tensor, TrainingConfig,
};

/// Codec-proxy strength that puts the synthetic training clips near 30 dB.
const DESK_STRENGTH: f64 = 16.0;

struct Outcome {
    passed: bool,
    detail: String,
}

type Check = fn() -> Result<Outcome>;
type LossFn<'a> = dyn Fn(&Tensor, &Tensor) -> Result<(f64, Tensor)> + 'a;

fn outcome(passed: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        passed,
        detail: detail.into(),
    })
}

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen::<f64>())
}

fn max_delta(a: &Clip, b: &Clip) -> f64 {
    a.frames()
        .iter()
        .zip(b.frames())
        .flat_map(|(x, y)| {
            x.planes()
                .iter()
                .zip(y.planes())
                .flat_map(|(p, q)| p.iter().zip(q).map(|(u, v)| (u - v).abs()))
        })
        .fold(0.0, f64::max)
}

fn identity_round_trip() -> Result<Outcome> {
    let model = GeneratorModel::init(GeneratorConfig::default(), 11)?;
    let mut worst = 0.0f64;
    let mut slowest = Duration::ZERO;
    for (i, &(w, h)) in [(96, 96), (100, 100), (352, 288)].iter().enumerate() {
        let clip = degrade_clip(
            &synthetic_clip(w, h, 6, 40 + i as u64)?,
            &DegradeSpec::with_strength(4.0),
        )?;
        let t = Instant::now();
        let out = enhance_clip(&model, &clip)?;
        slowest = slowest.max(t.elapsed());
        if out.len() != clip.len() || out.width() != w || out.height() != h {
            return outcome(false, format!("{w}x{h}: output geometry changed"));
        }
        worst = worst.max(max_delta(&out, &clip));
    }
    outcome(
        worst < 1e-12 && slowest < Duration::from_secs(30),
        format!("max delta {worst:.1e}, slowest clip {:.2}s", slowest.as_secs_f64()),
    )
}

/// Worst gradient error of `f` over `instances` random inputs, probing
/// `probes` coordinates each. The objective is scaled by the element count so
/// per-coordinate gradients are of order one and the `max(1, |g|)`
/// normalization acts as a true relative error.
fn loss_grad_error(f: &LossFn, shape: &[usize], instances: u64, probes: usize) -> Result<f64> {
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let target = uniform(shape, &mut rng);
        let pred = target.map(|v| (v + 0.2 * (rng.gen::<f64>() - 0.5)).clamp(0.0, 1.0));
        let n = pred.len() as f64;
        let (_, g) = f(&pred, &target)?;
        let coords: Vec<usize> = (0..probes).map(|_| rng.gen_range(0..pred.len())).collect();
        let r = finite_diff_check_at(|x| Ok(n * f(x, &target)?.0), &g.scale(n), &pred, 1e-5, &coords)?;
        worst = worst.max(r.max_rel_error);
    }
    Ok(worst)
}

fn model_grad_error(instances: u64) -> Result<f64> {
    let cfg = GeneratorConfig {
        hidden_width: 8,
        residual_blocks: 2,
        ..GeneratorConfig::default()
    };
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let mut m = GeneratorModel::init(cfg, seed)?;
        // A zero tail would hide every gradient upstream of it.
        let tail = m.params().len() - 2;
        let shape = m.params()[tail].value.shape().to_vec();
        *m.param_mut(tail) = uniform(&shape, &mut rng).map(|v| 0.2 * (v - 0.5));
        let x = uniform(&[9, 16, 16], &mut rng);
        let proj = uniform(&[9, 16, 16], &mut rng).map(|v| v - 0.5);
        let (_, tape) = m.forward(&x, true)?;
        let g = m.backward(&tape.expect("tape requested"), &proj)?;
        for pi in 0..m.params().len() {
            let len = m.params()[pi].value.len();
            let coords: Vec<usize> = (0..4.min(len)).map(|_| rng.gen_range(0..len)).collect();
            let r = finite_diff_check_at(
                |t| {
                    let mut probe = m.clone();
                    *probe.param_mut(pi) = t.clone();
                    let (y, _) = probe.forward(&x, false)?;
                    Ok(y.data().iter().zip(proj.data()).map(|(a, b)| a * b).sum())
                },
                &g.params[pi],
                &m.params()[pi].value,
                1e-5,
                &coords,
            )?;
            worst = worst.max(r.max_rel_error);
        }
    }
    Ok(worst)
}

fn gradient_suite() -> Result<Outcome> {
    let t = Instant::now();
    let shape = [3, 48, 48];
    let sp = SsimParams::default();
    let mp = MsSsimParams::default();
    let weights = LossWeights::default();
    type Objective<'a> = Box<LossFn<'a>>;
    let cases: Vec<(&str, Objective, f64)> = vec![
        ("l1", Box::new(l1_loss), 1e-3),
        ("ssim", Box::new(|p, q| ssim_loss(p, q, &sp)), 1e-4),
        ("l2", Box::new(l2_loss), 1e-4),
        ("ms-ssim", Box::new(|p, q| msssim_loss(p, q, &mp)), 1e-4),
        (
            "combined",
            Box::new(|p, q| combined_loss(p, q, &weights).map(|v| (v.total, v.grad))),
            1e-3,
        ),
    ];
    let mut parts = Vec::new();
    let mut passed = true;
    for (name, f, tol) in &cases {
        let e = loss_grad_error(f.as_ref(), &shape, 5, 24)?;
        passed &= e < *tol;
        parts.push(format!("{name} {e:.1e}"));
    }
    let e = model_grad_error(5)?;
    passed &= e < 1e-3;
    parts.push(format!("model {e:.1e}"));
    let elapsed = t.elapsed();
    passed &= elapsed < Duration::from_secs(300);
    outcome(passed, format!("{}; {:.1}s", parts.join(", "), elapsed.as_secs_f64()))
}

fn metric_oracles() -> Result<Outcome> {
    let a = Tensor::full(&[3, 40, 40], 0.25);
    let b = a.map(|v| v + 1.0 / 255.0);
    let p = psnr(&a, &b, 1.0)?;
    let want_psnr = 20.0 * 255f64.log10();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = uniform(&[3, 96, 96], &mut rng);
    let s = ssim(&x, &x, &SsimParams::default())?;
    let ms = ms_ssim(&x, &x, &MsSsimParams::default())?;
    let sp = SsimParams::default();
    let c1 = (sp.k1 * sp.dynamic_range).powi(2);
    let zv = ssim(&Tensor::zeros(&[1, 32, 32]), &Tensor::full(&[1, 32, 32], 0.5), &sp)?;
    let want_zv = c1 / (0.25 + c1);
    let passed = (p - 48.1308).abs() < 1e-3
        && (want_psnr - 48.1308).abs() < 1e-3
        && (s - 1.0).abs() < 1e-9
        && (ms - 1.0).abs() < 1e-9
        && (zv - want_zv).abs() < 1e-9;
    outcome(
        passed,
        format!(
            "psnr {p:.4} dB, ssim-1 {:.1e}, ms-ssim-1 {:.1e}, zero-variance err {:.1e}",
            s - 1.0,
            ms - 1.0,
            zv - want_zv
        ),
    )
}

fn loss_recomposition() -> Result<Outcome> {
    let w = LossWeights::default();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let target = uniform(&[9, 96, 96], &mut rng);
        let pred = target.map(|v| (v + 0.3 * (rng.gen::<f64>() - 0.5)).clamp(0.0, 1.0));
        let n = pred.len() as f64;
        let l1 = pred
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / n;
        let l2 = pred
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        let s = ssim(&pred, &target, &SsimParams::default())?;
        let m = ms_ssim(&pred, &target, &MsSsimParams::default())?;
        let expected = 0.3 * l1 + 0.2 * (1.0 - s) + 0.1 * l2 + 0.4 * (1.0 - m);
        worst = worst.max((combined_loss(&pred, &target, &w)?.total - expected).abs());
    }
    let sum_exact = w.l1 + w.ssim + w.l2 + w.msssim == 1.0;
    outcome(
        worst < 1e-12 && sum_exact,
        format!("max |combined - recomposed| {worst:.1e}, weight sum exact: {sum_exact}"),
    )
}

/// Mean PSNR of the current-frame window, network output vs degraded input,
/// both against pristine.
fn window_psnr(model: &GeneratorModel, pairs: &[PatchPair]) -> Result<(f64, f64)> {
    let db = |a: &[f64], b: &[f64]| {
        let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
        10.0 * (1.0 / mse).log10()
    };
    let (mut enhanced, mut baseline) = (0.0, 0.0);
    for p in pairs {
        let (out, _) = model.forward(&p.degraded.data, false)?;
        let plane = p.pristine.len() / 9;
        let window = 3 * plane..6 * plane;
        enhanced += db(&out.data()[window.clone()], &p.pristine.data()[window.clone()]);
        baseline += db(&p.degraded.data.data()[window.clone()], &p.pristine.data()[window]);
    }
    let k = pairs.len() as f64;
    Ok((enhanced / k, baseline / k))
}

fn desk_learning() -> Result<Outcome> {
    let t = Instant::now();
    let spec = DegradeSpec::with_strength(DESK_STRENGTH);
    let train_clips: Vec<Clip> = (0..4)
        .map(|k| synthetic_clip(192, 160, 5, 100 + k))
        .collect::<Result<_>>()?;
    let test_clips: Vec<Clip> = (0..2)
        .map(|k| synthetic_clip(192, 160, 5, 900 + k))
        .collect::<Result<_>>()?;
    let mut clip_db = 0.0;
    for c in &train_clips {
        let d = degrade_clip(c, &spec)?;
        for (a, b) in d.frames().iter().zip(c.frames()) {
            clip_db += psnr(&a.to_tensor(), &b.to_tensor(), 1.0)?;
        }
    }
    clip_db /= (train_clips.len() * 5) as f64;
    let data = build_dataset(&train_clips, &spec, 256, 1)?;
    let held = build_dataset(&test_clips, &spec, 32, 2)?;
    let mut gains = Vec::new();
    for seed in 0..3 {
        let cfg = TrainingConfig {
            generator: GeneratorConfig {
                hidden_width: 16,
                residual_blocks: 2,
                ..GeneratorConfig::default()
            },
            batch_size: 16,
            initial_lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epochs: 1000,
            max_steps: Some(300),
            seed,
            ..TrainingConfig::default()
        };
        let out = train(&cfg, &data)?;
        if out.model.meta.steps != 300 {
            return outcome(false, format!("seed {seed} ran {} steps", out.model.meta.steps));
        }
        let (e, b) = window_psnr(&out.model, &held)?;
        gains.push(e - b);
    }
    let mean = gains.iter().sum::<f64>() / gains.len() as f64;
    let elapsed = t.elapsed();
    let list: Vec<String> = gains.iter().map(|g| format!("{g:+.3}")).collect();
    outcome(
        mean >= 0.15 && elapsed < Duration::from_secs(600),
        format!(
            "training clips {clip_db:.2} dB; gain per seed [{}] dB, mean {mean:+.3} dB; {:.0}s",
            list.join(", "),
            elapsed.as_secs_f64()
        ),
    )
}

/// Every stride-92 position that fits, plus the flush-right/bottom one.
fn brute_force_anchors(w: usize, h: usize) -> Vec<(usize, usize)> {
    let axis = |d: usize| {
        let mut v: Vec<usize> = (0..=d - 96).filter(|p| p % 92 == 0).collect();
        if !v.contains(&(d - 96)) {
            v.push(d - 96);
        }
        v
    };
    let (xs, ys) = (axis(w), axis(h));
    ys.iter().flat_map(|&y| xs.iter().map(move |&x| (x, y))).collect()
}

fn tiling_equivalence() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    for _ in 0..50 {
        let (w, h) = (rng.gen_range(96..=512), rng.gen_range(96..=512));
        if compute_layout(w, h)?.anchors() != brute_force_anchors(w, h).as_slice() {
            mismatches += 1;
        }
    }
    let full_hd = compute_layout(1920, 1080)?.anchors().len();
    let starts: Vec<usize> = (0..10)
        .map(|i| channel_window(i, 10).map(|c| c.start))
        .collect::<Result<_>>()?;
    let expected: Vec<usize> = (0..10)
        .map(|i| {
            if i == 0 {
                0
            } else if i == 9 {
                6
            } else {
                3
            }
        })
        .collect();
    outcome(
        mismatches == 0 && full_hd == 252 && starts == expected,
        format!("{mismatches}/50 layout mismatches, 1920x1080 -> {full_hd} anchors, window starts {starts:?}"),
    )
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn tiny_config(width: usize, blocks: usize, epochs: u64, seed: u64) -> TrainingConfig {
    TrainingConfig {
        generator: GeneratorConfig {
            hidden_width: width,
            residual_blocks: blocks,
            ..GeneratorConfig::default()
        },
        epochs,
        seed,
        ..TrainingConfig::default()
    }
}

fn determinism() -> Result<Outcome> {
    let clips: Vec<Clip> = (0..2)
        .map(|k| synthetic_clip(128, 112, 4, 60 + k))
        .collect::<Result<_>>()?;
    let spec = DegradeSpec::with_strength(DESK_STRENGTH);
    let tmp = std::env::temp_dir();
    let dir = tempfile::tempdir().map_err(io_error(&tmp))?;
    let run = |k: usize| -> Result<(Vec<u8>, Vec<u8>)> {
        let ds_path = dir.path().join(format!("set{k}.bin"));
        save_dataset(&build_dataset(&clips, &spec, 40, 9)?, &ds_path)?;
        let model = train(&tiny_config(8, 1, 2, 5), &load_dataset(&ds_path)?)?.model;
        let ck_path = dir.path().join(format!("model{k}.ckpt"));
        save_checkpoint(&model, &ck_path)?;
        Ok((
            std::fs::read(&ds_path).map_err(io_error(&ds_path))?,
            std::fs::read(&ck_path).map_err(io_error(&ck_path))?,
        ))
    };
    let (d1, c1) = run(1)?;
    let (d2, c2) = run(2)?;
    outcome(
        d1 == d2 && c1 == c2,
        format!(
            "dataset {} bytes identical: {}, checkpoint {} bytes identical: {}",
            d1.len(),
            d1 == d2,
            c1.len(),
            c1 == c2
        ),
    )
}

fn format_round_trips() -> Result<Outcome> {
    let clip = degrade_clip(&synthetic_clip(112, 96, 3, 8)?, &DegradeSpec::with_strength(4.0))?;
    let y1 = encode_y4m(&clip)?;
    let y2 = encode_y4m(&decode_y4m(&y1, ChromaFilter::Bilinear)?)?;

    // A trained model, so the Adam moments and step counters are non-trivial.
    let pairs = build_dataset(&[synthetic_clip(96, 96, 3, 1)?], &DegradeSpec::with_strength(4.0), 4, 0)?;
    let model = train(&tiny_config(8, 1, 1, 4), &pairs)?.model;
    let c1 = encode_checkpoint(&model);
    let c2 = encode_checkpoint(&decode_checkpoint(&c1, None)?);

    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for matrix in [ColorMatrix::Bt709, ColorMatrix::Bt601] {
        for range in [ColorRange::Limited, ColorRange::Full] {
            let cfg = ColorConfig { matrix, range };
            let planes = [0, 1, 2].map(|_| (0..64 * 48).map(|_| rng.gen::<f64>()).collect());
            let rgb = Frame::new(64, 48, planes, ColorSpace::Rgb)?;
            // Stored YCbCr is 8-bit, so round through integer codes.
            let ycc = rgb_to_ycbcr(&rgb, cfg)?;
            let coded = ycc
                .planes()
                .clone()
                .map(|p| p.iter().map(|v| (v * 255.0).round() / 255.0).collect());
            let back = ycbcr_to_rgb(&Frame::new(64, 48, coded, ColorSpace::YCbCr444)?, cfg)?;
            for (p, q) in rgb.planes().iter().zip(back.planes()) {
                worst = p.iter().zip(q).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
            }
        }
    }
    outcome(
        y1 == y2 && c1 == c2 && worst <= 2.0 / 255.0,
        format!(
            "y4m {} bytes identical: {}, checkpoint {} bytes identical: {}, colour round trip max err {:.1e}",
            y1.len(),
            y1 == y2,
            c1.len(),
            c1 == c2,
            worst
        ),
    )
}

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("identity round trip", identity_round_trip),
        ("gradient suite", gradient_suite),
        ("metric oracles", metric_oracles),
        ("loss recomposition", loss_recomposition),
        ("desk-scale learning", desk_learning),
        ("tiling equivalence", tiling_equivalence),
        ("determinism", determinism),
        ("format round trips", format_round_trips),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !filter.is_empty() && !filter.iter().any(|f| *f == id.to_string() || name.contains(f.as_str())) {
            continue;
        }
        let t = Instant::now();
        let (passed, detail) = match run() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!passed);
        println!(
            "criterion {id} {name:<22} {} ({detail}) [{:.1}s]",
            if passed { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
