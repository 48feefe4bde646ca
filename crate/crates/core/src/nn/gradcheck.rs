//! Central finite-difference verification of analytic gradients.

use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-6;
/// Denominator floor used by [`gradient_check`].
pub const DEFAULT_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// Compares `analytic[k]` with `(L(theta_k + h) - L(theta_k - h)) / 2h` for
/// every coordinate and returns the worst `|a - n| / max(|a|, |n|, 1e-8)`.
///
/// `loss` is evaluated at copies of `params` with one coordinate perturbed;
/// any stochastic layer inside it must be deterministic (dropout in inference
/// mode or with a fixed seed).
pub fn gradient_check<F>(loss: F, params: &[f64], analytic: &[f64], h: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    gradient_check_with_floor(loss, params, analytic, h, DEFAULT_FLOOR)
}

/// As [`gradient_check`] but with denominator `max(|a|, |n|, floor)`.
///
/// Deep networks evaluate the loss with roughly 1e-15 absolute rounding
/// noise, so a central difference carries about `1e-15 / h` absolute error.
/// Components whose true gradient is below that noise cannot be checked
/// relatively; a floor turns the comparison into an absolute one there.
pub fn gradient_check_with_floor<F>(
    mut loss: F,
    params: &[f64],
    analytic: &[f64],
    h: f64,
    floor: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if params.len() != analytic.len() {
        return Err(Error::shape(
            "gradient_check",
            format!("{} parameters, {} gradient entries", params.len(), analytic.len()),
        ));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: params.len(),
    };
    let mut theta = params.to_vec();
    for k in 0..theta.len() {
        let orig = theta[k];
        theta[k] = orig + h;
        let plus = loss(&theta)?;
        theta[k] = orig - h;
        let minus = loss(&theta)?;
        theta[k] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::domain("loss", format!("non-finite value perturbing parameter {k}")));
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[k];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_index = k;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}
