//! Evaluation metrics: NMSE over Monte-Carlo trials, PSNR, test-set RMSE
//! and the phase-transition success rule.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::model::ObservedMatrix;
use crate::Scalar;

/// Success threshold for phase-transition experiments.
pub const SUCCESS_THRESHOLD: f64 = 1e-1;

/// Normalized mean square error: the mean over trials of
/// `||estimate - truth||_F^2`, divided by `||truth||_F^2`.
pub fn nmse<F: Scalar>(estimates: &[Array2<F>], truth: &Array2<F>) -> Result<F> {
    if estimates.is_empty() {
        return Err(Error::DimensionMismatch("no estimates given".into()));
    }
    let denom: F = truth.iter().map(|&x| x * x).sum();
    if denom == F::zero() {
        return Err(Error::ZeroTruth);
    }
    let mut total = F::zero();
    for est in estimates {
        if est.dim() != truth.dim() {
            return Err(Error::DimensionMismatch(format!(
                "estimate is {:?} but truth is {:?}",
                est.dim(),
                truth.dim()
            )));
        }
        total += est
            .iter()
            .zip(truth.iter())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<F>();
    }
    Ok(total / F::from_usize(estimates.len()) / denom)
}

/// Raw reconstruction ratio `m n / ||estimate - truth||_F^2`.
///
/// Infinite for an exact match.
pub fn psnr_ratio<F: Scalar>(estimate: &Array2<F>, truth: &Array2<F>) -> Result<F> {
    if estimate.dim() != truth.dim() {
        return Err(Error::DimensionMismatch(format!(
            "estimate is {:?} but truth is {:?}",
            estimate.dim(),
            truth.dim()
        )));
    }
    let err: F = estimate
        .iter()
        .zip(truth.iter())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    let (m, n) = truth.dim();
    if err == F::zero() {
        return Ok(F::infinity());
    }
    Ok(F::from_usize(m * n) / err)
}

/// Peak signal-to-noise ratio in decibels:
/// `10 log10(peak^2 m n / ||estimate - truth||_F^2)`.
///
/// Returns the documented `+inf` sentinel when the estimate matches the
/// truth exactly.
pub fn psnr<F: Scalar>(estimate: &Array2<F>, truth: &Array2<F>, peak: F) -> Result<F> {
    let ratio = psnr_ratio(estimate, truth)?;
    if ratio == F::infinity() {
        return Ok(F::infinity());
    }
    Ok(F::from_f64(10.0) * (peak * peak * ratio).log10())
}

/// Root mean square error over the support of a held-out test set.
/// Values of the estimate off the test support are ignored.
pub fn rmse_test<F: Scalar>(estimate: &Array2<F>, test: &ObservedMatrix<F>) -> Result<F> {
    if estimate.dim() != (test.nrows(), test.ncols()) {
        return Err(Error::DimensionMismatch(format!(
            "estimate is {:?} but test set is {}x{}",
            estimate.dim(),
            test.nrows(),
            test.ncols()
        )));
    }
    let mut total = F::zero();
    for (i, j, x) in test.entries() {
        let e = estimate[(i, j)] - x;
        total += e * e;
    }
    Ok((total / F::from_usize(test.nnz())).sqrt())
}

/// Phase-transition success: NMSE below the standard `1e-1` threshold.
pub fn phase_success<F: Scalar>(nmse_value: F) -> bool {
    phase_success_at(nmse_value, F::from_f64(SUCCESS_THRESHOLD))
}

/// Success under a custom threshold.
pub fn phase_success_at<F: Scalar>(nmse_value: F, threshold: F) -> bool {
    nmse_value < threshold
}

/// Aggregated evaluation of one experiment cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport<F> {
    pub nmse: F,
    pub psnr_db: F,
    pub rmse: F,
    pub success: bool,
    pub trials: usize,
    pub elapsed: f64,
}

impl<F: Scalar> EvalReport<F> {
    /// Builds a report; `success` is derived from `nmse` and the threshold.
    pub fn new(nmse: F, psnr_db: F, rmse: F, trials: usize, elapsed: f64, threshold: F) -> Self {
        Self { nmse, psnr_db, rmse, success: phase_success_at(nmse, threshold), trials, elapsed }
    }
}
