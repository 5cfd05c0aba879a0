use super::Tensor;
use crate::error::{Error, Result};

/// Outcome of a central-difference gradient comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    /// `max |g_analytic - g_numeric| / max(1, |g_numeric|)` over checked coordinates.
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Compares `analytic` against central differences of `f` at `x`, over every
/// coordinate.
pub fn finite_diff_check<F>(f: F, analytic: &Tensor, x: &Tensor, eps: f64) -> Result<GradCheckReport>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    let coords: Vec<usize> = (0..x.len()).collect();
    finite_diff_check_at(f, analytic, x, eps, &coords)
}

/// Like [`finite_diff_check`] but only probes the listed flat coordinates.
pub fn finite_diff_check_at<F>(
    mut f: F,
    analytic: &Tensor,
    x: &Tensor,
    eps: f64,
    coords: &[usize],
) -> Result<GradCheckReport>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    analytic.ensure_same_shape(x, "finite_diff_check")?;
    if !(eps > 0.0) {
        return Err(Error::invalid(format!(
            "finite-difference step must be positive, got {eps}"
        )));
    }
    let mut probe = x.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: 0,
    };
    for &i in coords {
        if i >= x.len() {
            return Err(Error::invalid(format!(
                "coordinate {i} outside tensor of {} samples",
                x.len()
            )));
        }
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numerical(format!(
                "objective is non-finite around coordinate {i} ({plus}, {minus})"
            )));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let err = (analytic.data()[i] - numeric).abs() / numeric.abs().max(1.0);
        if !err.is_finite() {
            return Err(Error::Numerical(format!(
                "analytic gradient non-finite at coordinate {i}"
            )));
        }
        if err > report.max_rel_error || report.checked == 0 {
            report.max_rel_error = err;
            report.worst_index = i;
        }
        report.checked += 1;
    }
    Ok(report)
}
