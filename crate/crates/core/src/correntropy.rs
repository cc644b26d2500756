//! Gaussian kernel, correntropy-induced loss, the closed-form weight update
//! and the adaptive kernel-width schedules.
//!
//! The loss per residual is `sigma^2 (1 - exp(-e^2 / (2 sigma^2)))`: quadratic
//! near zero, saturating at `sigma^2` for large errors. Minimizing it is
//! equivalent to a weighted least-squares problem whose optimal weights are
//! the kernel values of the current residuals; that equivalence is what the
//! solvers alternate on.

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::Scalar;

/// Adaptive kernel-width state: slope `eta` on the residual interquartile
/// range, floor `xi`, and the large warm-start width.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSchedule<F> {
    /// Multiplier on the residual IQR.
    pub eta: F,
    /// Lower bound for every kernel width. `None` resolves to
    /// `max(1e-4 * max |observed value|, 1e-4)` at solve time so the floor
    /// stays meaningful across data magnitudes.
    pub xi: Option<F>,
    /// Width used while a solver is in its l2 warm-up (and to seed the
    /// inner iteration of HQ-PF).
    pub warm_sigma: F,
}

impl<F: Scalar> Default for KernelSchedule<F> {
    fn default() -> Self {
        Self { eta: F::from_f64(2.0), xi: None, warm_sigma: F::from_f64(1e4) }
    }
}

impl<F: Scalar> KernelSchedule<F> {
    /// Schedule that keeps every kernel width at `sigma`, assuming the
    /// residual IQR stays below `sigma / eta` (true for the large pins used
    /// to recover the l2 limit). Both the adaptive rule and the inner-width
    /// floor then always return `sigma`.
    pub fn pinned(sigma: F) -> Self {
        Self { eta: F::from_f64(2.0), xi: Some(sigma), warm_sigma: sigma }
    }

    /// The width floor, given the largest absolute observed value.
    pub fn resolve_xi(&self, max_abs_value: F) -> F {
        match self.xi {
            Some(xi) => xi,
            None => {
                let floor = F::from_f64(1e-4);
                let scaled = floor * max_abs_value;
                if scaled > floor {
                    scaled
                } else {
                    floor
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > F::zero()) {
            return Err(Error::InvalidConfig("kernel eta must be positive".into()));
        }
        if let Some(xi) = self.xi {
            if !(xi > F::zero()) {
                return Err(Error::InvalidConfig("kernel xi must be positive".into()));
            }
            if self.warm_sigma < xi {
                return Err(Error::InvalidConfig("warm_sigma must be at least xi".into()));
            }
        }
        if !(self.warm_sigma > F::zero()) {
            return Err(Error::InvalidConfig("warm_sigma must be positive".into()));
        }
        Ok(())
    }
}

/// Correntropy weights on an observation support, each in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField<F>(Vec<F>);

impl<F: Scalar> WeightField<F> {
    /// Weights identically one (the l2 limit).
    pub fn ones(len: usize) -> Self {
        Self(vec![F::one(); len])
    }

    pub fn values(&self) -> &[F] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<F> std::ops::Deref for WeightField<F> {
    type Target = [F];

    fn deref(&self) -> &[F] {
        &self.0
    }
}

#[inline]
fn check_sigma<F: Scalar>(sigma: F) -> Result<()> {
    if sigma > F::zero() {
        Ok(())
    } else {
        Err(Error::NonPositiveSigma(sigma.to_f64().unwrap_or(f64::NAN)))
    }
}

/// Gaussian kernel `exp(-e^2 / (2 sigma^2))`.
pub fn gaussian_kernel<F: Scalar>(e: F, sigma: F) -> Result<F> {
    check_sigma(sigma)?;
    let z = e / sigma;
    Ok((-z * z / F::from_f64(2.0)).exp())
}

/// Correntropy objective of a residual vector:
/// `sum_k sigma^2 (1 - exp(-e_k^2 / (2 sigma^2)))`.
///
/// Evaluated through `exp_m1` so the large-`sigma` limit `e^2 / 2` keeps
/// full precision instead of cancelling.
pub fn closs<F: Scalar>(residual: &[F], sigma: F) -> Result<F> {
    check_sigma(sigma)?;
    let two = F::from_f64(2.0);
    let s2 = sigma * sigma;
    let mut total = F::zero();
    for &e in residual {
        let z = e / sigma;
        total += s2 * (-((-z * z / two).exp_m1()));
    }
    Ok(total)
}

/// Closed-form optimal weights `w_k = exp(-e_k^2 / (2 sigma^2))`.
///
/// Only support entries are ever weighted; off-support weights would not
/// affect any masked objective.
pub fn compute_weights<F: Scalar>(residual: &[F], sigma: F) -> Result<WeightField<F>> {
    check_sigma(sigma)?;
    let two = F::from_f64(2.0);
    let weights = residual
        .iter()
        .map(|&e| {
            let z = e / sigma;
            (-z * z / two).exp()
        })
        .collect();
    Ok(WeightField(weights))
}

/// Linear-interpolation quantile of sorted data: index position `(n-1) q`.
fn quantile_sorted<F: Scalar>(sorted: &[F], q: f64) -> F {
    debug_assert!(!sorted.is_empty());
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = F::from_f64(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Outer kernel width `max(eta * IQR(residual), xi)` where IQR is the
/// 0.75-quantile minus the 0.25-quantile under linear interpolation.
pub fn adaptive_sigma<F: Scalar>(residual: &[F], eta: F, xi: F) -> Result<F> {
    if residual.is_empty() {
        return Err(Error::EmptyResidual);
    }
    let mut sorted = residual.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("residuals must be comparable"));
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let sigma = eta * iqr;
    Ok(if sigma > xi { sigma } else { xi })
}

/// Inner kernel width for the HQ-PF row iteration.
///
/// While the iterate still moves (`||u_curr - u_prev||^2 > eps_inner`) the
/// width tracks the scaled residual norm `|| (x - D u_curr) / (2 |theta|) ||`,
/// floored at `xi` so a zero residual cannot collapse the kernel; once the
/// iterate has converged the outer width is returned as the stop signal.
pub fn inner_sigma<F: Scalar>(
    x_theta: &[F],
    design: ArrayView2<F>,
    u_curr: &[F],
    u_prev: &[F],
    eps_inner: F,
    sigma_outer: F,
    xi: F,
) -> Result<F> {
    let len = x_theta.len();
    if len == 0 {
        return Err(Error::EmptyRow);
    }
    debug_assert_eq!(design.nrows(), len);
    let delta: F = u_curr
        .iter()
        .zip(u_prev)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    if delta <= eps_inner {
        return Ok(sigma_outer);
    }
    let scale = F::from_f64(2.0) * F::from_usize(len);
    let mut sum_sq = F::zero();
    for (k, &x) in x_theta.iter().enumerate() {
        let pred: F = design.row(k).iter().zip(u_curr).map(|(&d, &u)| d * u).sum();
        let scaled = (x - pred) / scale;
        sum_sq += scaled * scaled;
    }
    let sigma = sum_sq.sqrt();
    Ok(if sigma > xi { sigma } else { xi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    #[test]
    fn kernel_at_zero_error() {
        assert_eq!(gaussian_kernel::<f64>(0.0, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn kernel_unit_point() {
        // exp(-1/2) evaluated independently to high precision.
        let g: f64 = gaussian_kernel(1.0, 1.0).unwrap();
        assert!((g - 0.6065306597).abs() < 1e-10);
    }

    #[test]
    fn kernel_large_sigma_limit() {
        let g: f64 = gaussian_kernel(3.0, 1e8).unwrap();
        assert!((g - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_rejects_bad_sigma() {
        assert!(matches!(gaussian_kernel(1.0, 0.0), Err(Error::NonPositiveSigma(_))));
        assert!(matches!(gaussian_kernel(1.0, -1.0), Err(Error::NonPositiveSigma(_))));
    }

    #[test]
    fn closs_zero_residuals() {
        assert_eq!(closs::<f64>(&[0.0, 0.0, 0.0], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn closs_single_unit_residual() {
        // 1 - exp(-1/2) by independent evaluation.
        let j: f64 = closs(&[1.0], 1.0).unwrap();
        assert!((j - 0.3934693403).abs() < 1e-10);
    }

    #[test]
    fn closs_large_sigma_is_half_square() {
        // sigma^2 (1 - G(e)) -> e^2 / 2 as sigma grows.
        let j: f64 = closs(&[2.0], 1e4).unwrap();
        assert!((j - 2.0).abs() < 1e-6);
    }

    #[test]
    fn closs_bounded_by_sigma_sq_times_count() {
        let r = [5.0f64, -3.0, 100.0];
        let sigma = 0.7;
        let j = closs(&r, sigma).unwrap();
        assert!(j > 0.0);
        assert!(j <= sigma * sigma * r.len() as f64);
    }

    #[test]
    fn weights_exact_fit() {
        let w = compute_weights::<f64>(&[0.0, 0.0], 3.0).unwrap();
        assert!(w.values().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn weights_match_kernel() {
        let w = compute_weights::<f64>(&[1.0, 0.0], 1.0).unwrap();
        assert!((w[0] - 0.6065306597).abs() < 1e-10);
        assert_eq!(w[1], 1.0);
    }

    #[test]
    fn weights_large_sigma_all_one() {
        let r = [10.0f64, -7.5, 0.3];
        let w = compute_weights(&r, 1e8).unwrap();
        assert!(w.values().iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn adaptive_sigma_floor_binds_on_equal_residuals() {
        let s: f64 = adaptive_sigma(&[1.5, 1.5, 1.5], 2.0, 0.1).unwrap();
        assert_eq!(s, 0.1);
    }

    #[test]
    fn adaptive_sigma_symmetric_residuals() {
        // Quartiles of [-2,-1,0,1,2] interpolate to -1 and 1.
        let s: f64 = adaptive_sigma(&[-2.0, -1.0, 0.0, 1.0, 2.0], 1.0, 0.1).unwrap();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_sigma_floor_beats_small_iqr() {
        let s: f64 = adaptive_sigma(&[-2.0, -1.0, 0.0, 1.0, 2.0], 2.0, 10.0).unwrap();
        assert_eq!(s, 10.0);
    }

    #[test]
    fn adaptive_sigma_empty_rejected() {
        assert!(matches!(adaptive_sigma::<f64>(&[], 2.0, 0.1), Err(Error::EmptyResidual)));
    }

    #[test]
    fn inner_sigma_converged_returns_outer() {
        let design: Array2<f64> = array![[1.0], [1.0]];
        let s = inner_sigma(&[2.0, 2.0], design.view(), &[0.5], &[0.5], 1e-8, 7.0, 1e-4).unwrap();
        assert_eq!(s, 7.0);
    }

    #[test]
    fn inner_sigma_scaled_residual_norm() {
        // Residual [2, 2] over 2 entries: || [2,2] / 4 || = sqrt(0.5).
        let design: Array2<f64> = array![[0.0], [0.0]];
        let s = inner_sigma(&[2.0, 2.0], design.view(), &[1.0], &[0.0], 1e-8, 7.0, 1e-4).unwrap();
        assert!((s - 0.7071067812).abs() < 1e-10);
    }

    #[test]
    fn inner_sigma_zero_residual_floored() {
        let design: Array2<f64> = array![[1.0], [1.0]];
        // u fits exactly but still moved; width must not collapse to zero.
        let s = inner_sigma(&[2.0, 2.0], design.view(), &[2.0], &[0.0], 1e-8, 7.0, 1e-4).unwrap();
        assert_eq!(s, 1e-4);
    }

    #[test]
    fn inner_sigma_empty_row_rejected() {
        let design = Array2::<f64>::zeros((0, 1));
        assert!(matches!(
            inner_sigma(&[], design.view(), &[1.0], &[0.0], 1e-8, 7.0, 1e-4),
            Err(Error::EmptyRow)
        ));
    }

    #[test]
    fn closs_monotone_in_sigma() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(1..20);
            let residual: Vec<f64> =
                (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            if residual.iter().all(|&e| e == 0.0) {
                continue;
            }
            let s1 = rng.gen_range(0.05..2.0);
            let s2 = s1 * rng.gen_range(1.1..10.0);
            let j1 = closs(&residual, s1).unwrap();
            let j2 = closs(&residual, s2).unwrap();
            assert!(j1 < j2, "closs must increase with sigma: {j1} vs {j2}");
        }
    }

    #[test]
    fn majorization_transfers_weighted_descent_to_closs() {
        // If a new residual has no larger weighted square sum under the
        // weights of the old residual, its correntropy objective cannot be
        // larger either. This is the descent step both solvers rely on.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let mut checked = 0;
        while checked < 200 {
            let n = rng.gen_range(1..15);
            let e_old: Vec<f64> = (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let e_new: Vec<f64> = if rng.gen_bool(0.5) {
                let alpha: f64 = rng.gen_range(0.0..1.0);
                e_old.iter().map(|&e| e * alpha).collect()
            } else {
                (0..n).map(|_| rng.gen_range(-4.0..4.0)).collect()
            };
            let sigma = rng.gen_range(0.1..3.0);
            let w = compute_weights(&e_old, sigma).unwrap();
            let wsum = |e: &[f64]| -> f64 {
                e.iter().zip(w.values()).map(|(&x, &wk)| wk * x * x).sum()
            };
            if wsum(&e_new) > wsum(&e_old) {
                continue;
            }
            let j_old = closs(&e_old, sigma).unwrap();
            let j_new = closs(&e_new, sigma).unwrap();
            assert!(j_new <= j_old + 1e-10, "{j_new} > {j_old}");
            checked += 1;
        }
    }

    #[test]
    fn large_sigma_degeneracy_to_squared_norm() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let residual: Vec<f64> = (0..50).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let norm_sq: f64 = residual.iter().map(|e| e * e).sum();
        let j = closs(&residual, 1e6).unwrap();
        assert!((2.0 * j - norm_sq).abs() / norm_sq < 1e-6);
    }

    proptest! {
        // Ranges keep |e / sigma| below ~25 so the kernel stays above the
        // f64 underflow threshold and the open lower bound is observable.
        #[test]
        fn kernel_bounds_and_symmetry(e in -50.0f64..50.0, sigma in 2.0f64..100.0) {
            let g = gaussian_kernel(e, sigma).unwrap();
            prop_assert!(g > 0.0 && g <= 1.0);
            if e == 0.0 {
                prop_assert_eq!(g, 1.0);
            }
            if (e / sigma).abs() > 1e-7 {
                prop_assert!(g < 1.0);
            }
            let g_neg = gaussian_kernel(-e, sigma).unwrap();
            prop_assert_eq!(g, g_neg);
        }

        #[test]
        fn kernel_monotone_in_abs_error(e1 in 0.0f64..10.0, gap in 0.1f64..10.0,
                                        sigma in 0.1f64..10.0) {
            let e2 = e1 + gap;
            let g1 = gaussian_kernel(e1, sigma).unwrap();
            let g2 = gaussian_kernel(e2, sigma).unwrap();
            prop_assert!(g1 > g2 || (g1 == g2 && g2 == 0.0));
        }

        #[test]
        fn weights_in_unit_interval(res in proptest::collection::vec(-20.0f64..20.0, 1..30),
                                    sigma in 1.0f64..50.0) {
            let w = compute_weights(&res, sigma).unwrap();
            for (&wk, &e) in w.values().iter().zip(&res) {
                prop_assert!(wk > 0.0 && wk <= 1.0);
                if e == 0.0 {
                    prop_assert_eq!(wk, 1.0);
                }
                if (e / sigma).abs() > 1e-7 {
                    prop_assert!(wk < 1.0);
                }
            }
        }

        #[test]
        fn adaptive_sigma_translation_invariant(
            res in proptest::collection::vec(-5.0f64..5.0, 2..40),
            c in -100.0f64..100.0,
        ) {
            let shifted: Vec<f64> = res.iter().map(|&e| e + c).collect();
            let a = adaptive_sigma(&res, 2.0, 1e-4).unwrap();
            let b = adaptive_sigma(&shifted, 2.0, 1e-4).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + c.abs()));
        }
    }
}
