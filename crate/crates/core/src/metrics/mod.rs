//! PSNR, SSIM and MS-SSIM, plus the per-frame PSNR gain report.

mod report;
mod ssim;

pub use report::{psnr_gain_report, FrameGain, GainReport, REPORT_CAP_DB};
pub use ssim::{ms_ssim, ssim, MsSsimParams, SsimParams, MS_SSIM_WEIGHTS};
pub(crate) use ssim::{ms_ssim_with_grad, ssim_and_ms_ssim_with_grad, ssim_with_grad};

use crate::error::{Error, Result};
use crate::frame_io::Frame;
use crate::tensor::Tensor;

/// Which planes contribute to PSNR.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PsnrPlanes {
    /// All three planes pooled into one MSE.
    #[default]
    All,
    /// First plane only (luma for YCbCr content).
    LumaOnly,
}

impl std::fmt::Display for PsnrPlanes {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PsnrPlanes::All => "all",
            PsnrPlanes::LumaOnly => "luma",
        })
    }
}

fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

fn check_peak(peak: f64) -> Result<()> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::invalid(format!("PSNR peak must be positive, got {peak}")));
    }
    Ok(())
}

fn squared_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `10 log10(peak^2 / MSE)` over every sample; `+inf` when the inputs match.
pub fn psnr(a: &Tensor, b: &Tensor, peak: f64) -> Result<f64> {
    check_peak(peak)?;
    a.ensure_same_shape(b, "psnr")?;
    Ok(psnr_from_mse(squared_error(a.data(), b.data()) / a.len() as f64, peak))
}

/// PSNR between two frames of the same geometry and color space.
pub fn psnr_frames(a: &Frame, b: &Frame, planes: PsnrPlanes, peak: f64) -> Result<f64> {
    check_peak(peak)?;
    if !a.same_geometry(b) {
        return Err(Error::shape(
            "psnr",
            format!(
                "{}x{} {} vs {}x{} {}",
                a.width(),
                a.height(),
                a.space(),
                b.width(),
                b.height(),
                b.space()
            ),
        ));
    }
    let used = match planes {
        PsnrPlanes::All => 3,
        PsnrPlanes::LumaOnly => 1,
    };
    let se: f64 = (0..used).map(|p| squared_error(a.plane(p), b.plane(p))).sum();
    let n = (used * a.width() * a.height()) as f64;
    Ok(psnr_from_mse(se / n, peak))
}
