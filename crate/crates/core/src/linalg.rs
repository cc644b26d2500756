//! Small dense helpers: Cholesky solves for the r x r systems that appear in
//! the per-row least squares and in the Gram scaling of descent directions.
//!
//! r stays small (tens at most), so a hand-rolled factorization beats pulling
//! in a LAPACK backend.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::Scalar;

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// On success the lower triangle of `a` holds `L` with `A = L L^T`.
/// Fails (returns `false`) when a pivot drops below `n * eps * max |A_kk|`,
/// which covers indefinite, singular and NaN-contaminated inputs.
pub fn cholesky_in_place<F: Scalar>(a: &mut Array2<F>) -> bool {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut max_diag = F::zero();
    for k in 0..n {
        let d = a[(k, k)].abs();
        if d > max_diag {
            max_diag = d;
        }
    }
    let tol = F::from_usize(n) * F::epsilon() * max_diag;
    for k in 0..n {
        let mut d = a[(k, k)];
        for p in 0..k {
            d = d - a[(k, p)] * a[(k, p)];
        }
        if !(d > tol) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[(k, k)] = d;
        for i in (k + 1)..n {
            let mut s = a[(i, k)];
            for p in 0..k {
                s = s - a[(i, p)] * a[(k, p)];
            }
            a[(i, k)] = s / d;
        }
    }
    true
}

/// Solves `L L^T x = b` in place given the factor from [`cholesky_in_place`].
pub fn cholesky_solve_in_place<F: Scalar>(l: &Array2<F>, b: &mut [F]) {
    let n = l.nrows();
    debug_assert_eq!(n, b.len());
    for i in 0..n {
        let mut s = b[i];
        for p in 0..i {
            s = s - l[(i, p)] * b[p];
        }
        b[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for p in (i + 1)..n {
            s = s - l[(p, i)] * b[p];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Cholesky factor of a symmetric positive-definite matrix, with a
/// `ridge * tr(A) / n` diagonal shift as fallback for singular inputs.
/// `force_ridge` skips the plain attempt (used for subproblems known to be
/// underdetermined).
pub fn spd_factor_ridged<F: Scalar>(
    a: &Array2<F>,
    ridge: F,
    force_ridge: bool,
) -> Result<Array2<F>> {
    if !force_ridge {
        let mut l = a.clone();
        if cholesky_in_place(&mut l) {
            return Ok(l);
        }
    }
    let n = a.nrows();
    let trace = (0..n).map(|k| a[(k, k)]).sum::<F>();
    // Trace-scaled shift; falls back to the plain ridge for all-zero
    // subproblems (e.g. every weight underflowed), where the solution is
    // the zero vector and any positive shift recovers it.
    let shift = if trace > F::zero() { ridge * trace / F::from_usize(n) } else { ridge };
    if !(shift > F::zero()) {
        return Err(Error::NumericalFailure);
    }
    let mut l = a.clone();
    for k in 0..n {
        l[(k, k)] += shift;
    }
    if !cholesky_in_place(&mut l) {
        return Err(Error::NumericalFailure);
    }
    Ok(l)
}

/// Solves the symmetric positive-definite system `A x = b`, with the same
/// ridge fallback as [`spd_factor_ridged`].
pub fn solve_spd_ridged<F: Scalar>(
    a: &Array2<F>,
    b: &[F],
    ridge: F,
    force_ridge: bool,
) -> Result<Vec<F>> {
    let l = spd_factor_ridged(a, ridge, force_ridge)?;
    let mut x = b.to_vec();
    cholesky_solve_in_place(&l, &mut x);
    Ok(x)
}

/// Frobenius inner product `<a, b> = sum a_ij b_ij`.
pub fn frob_inner<F: Scalar>(a: &Array2<F>, b: &Array2<F>) -> F {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(&x, &y)| x * y).sum()
}

/// Squared Frobenius norm.
pub fn frob_norm_sq<F: Scalar>(a: &Array2<F>) -> F {
    a.iter().map(|&x| x * x).sum()
}
