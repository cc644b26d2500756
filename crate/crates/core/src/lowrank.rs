//! Best rank-k approximation by orthogonal subspace iteration, without a
//! linear-algebra backend dependency.
//!
//! Used by the inpainting pipeline to compress images to a prescribed rank,
//! and handy as a singular-value probe in tests. The iteration runs on
//! `X^T X`: a block of k orthonormal vectors is repeatedly multiplied and
//! re-orthonormalized until the Rayleigh estimates stabilize.

use ndarray::Array2;

use crate::Scalar;

/// Modified Gram-Schmidt with one re-orthogonalization pass. Columns that
/// collapse (rank deficiency) are replaced by canonical basis vectors and
/// orthogonalized again, keeping the block orthonormal.
fn orthonormalize<F: Scalar>(q: &mut Array2<F>) {
    let (n, k) = q.dim();
    let tiny = F::min_positive_value().sqrt();
    let mut replace = 0usize;
    for j in 0..k {
        for _pass in 0..2 {
            for p in 0..j {
                let dot: F = (0..n).map(|i| q[(i, p)] * q[(i, j)]).sum();
                for i in 0..n {
                    q[(i, j)] = q[(i, j)] - dot * q[(i, p)];
                }
            }
        }
        let norm = (0..n).map(|i| q[(i, j)] * q[(i, j)]).sum::<F>().sqrt();
        if norm > tiny {
            for i in 0..n {
                q[(i, j)] = q[(i, j)] / norm;
            }
        } else {
            // Deterministic replacement; retry this column.
            for i in 0..n {
                q[(i, j)] = if i == replace % n { F::one() } else { F::zero() };
            }
            replace += 1;
            if replace <= n {
                // Redo orthogonalization of this column.
                let mut col = vec![F::zero(); n];
                for (i, c) in col.iter_mut().enumerate() {
                    *c = q[(i, j)];
                }
                for p in 0..j {
                    let dot: F = (0..n).map(|i| q[(i, p)] * col[i]).sum();
                    for i in 0..n {
                        col[i] = col[i] - dot * q[(i, p)];
                    }
                }
                let norm = col.iter().map(|&c| c * c).sum::<F>().sqrt();
                if norm > tiny {
                    for i in 0..n {
                        q[(i, j)] = col[i] / norm;
                    }
                }
            }
        }
    }
}

/// Orthonormal basis (n x k) approximately spanning the top-k right singular
/// subspace of `x`.
fn top_right_subspace<F: Scalar>(
    x: &Array2<F>,
    k: usize,
    max_iter: usize,
    tol: F,
) -> Array2<F> {
    let (_m, n) = x.dim();
    // Deterministic pseudo-random start keeps the whole pipeline replayable.
    let mut q = Array2::from_shape_fn((n, k), |(i, j)| {
        let h = crate::synth::stream_seed(0x6c6f7772616e6b, "subspace-init", (i * k + j) as u64);
        F::from_f64((h % 2_000_003) as f64 / 1_000_001.5 - 1.0)
    });
    orthonormalize(&mut q);
    let mut prev_estimates = vec![F::zero(); k];
    for _ in 0..max_iter {
        let z = x.t().dot(&x.dot(&q)); // (X^T X) Q
        // Rayleigh estimates before re-orthonormalization.
        let mut estimates = vec![F::zero(); k];
        for j in 0..k {
            estimates[j] = (0..n).map(|i| q[(i, j)] * z[(i, j)]).sum();
        }
        q = z;
        orthonormalize(&mut q);
        let mut converged = true;
        for j in 0..k {
            let diff = (estimates[j] - prev_estimates[j]).abs();
            let scale = estimates[0].abs().max(F::epsilon());
            if diff > tol * scale {
                converged = false;
            }
        }
        prev_estimates = estimates;
        if converged {
            break;
        }
    }
    q
}

/// Best rank-k approximation `X Q Q^T` where `Q` spans the dominant right
/// singular subspace. `k` is clipped to `min(m, n)`.
pub fn rank_k_approx<F: Scalar>(x: &Array2<F>, k: usize, max_iter: usize, tol: F) -> Array2<F> {
    let (m, n) = x.dim();
    let k = k.min(m).min(n);
    if k == 0 {
        return Array2::zeros((m, n));
    }
    let q = top_right_subspace(x, k, max_iter, tol);
    x.dot(&q).dot(&q.t())
}

/// Jacobi eigenvalue sweep for a small symmetric matrix; returns eigenvalues
/// in decreasing order.
fn jacobi_eigenvalues<F: Scalar>(mut a: Array2<F>) -> Vec<F> {
    let k = a.nrows();
    let half = F::from_f64(0.5);
    for _sweep in 0..100 {
        let mut off = F::zero();
        for p in 0..k {
            for q in (p + 1)..k {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        let scale = (0..k).map(|i| a[(i, i)] * a[(i, i)]).sum::<F>().max(F::epsilon());
        if off <= F::epsilon() * F::epsilon() * scale {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                if a[(p, q)] == F::zero() {
                    continue;
                }
                let angle =
                    half * (F::from_f64(2.0) * a[(p, q)]).atan2(a[(q, q)] - a[(p, p)]);
                let (s, c) = angle.sin_cos();
                for i in 0..k {
                    let aip = a[(i, p)];
                    let aiq = a[(i, q)];
                    a[(i, p)] = c * aip - s * aiq;
                    a[(i, q)] = s * aip + c * aiq;
                }
                for i in 0..k {
                    let api = a[(p, i)];
                    let aqi = a[(q, i)];
                    a[(p, i)] = c * api - s * aqi;
                    a[(q, i)] = s * api + c * aqi;
                }
            }
        }
    }
    let mut eig: Vec<F> = (0..k).map(|i| a[(i, i)]).collect();
    eig.sort_unstable_by(|x, y| y.partial_cmp(x).unwrap());
    eig
}

/// Top-k singular values of `x`, largest first.
pub fn singular_values<F: Scalar>(x: &Array2<F>, k: usize, max_iter: usize, tol: F) -> Vec<F> {
    let (m, n) = x.dim();
    let k = k.min(m).min(n);
    if k == 0 {
        return Vec::new();
    }
    let q = top_right_subspace(x, k, max_iter, tol);
    let b = x.dot(&q); // m x k
    let small = b.t().dot(&b); // k x k, eigenvalues are squared singular values
    jacobi_eigenvalues(small)
        .into_iter()
        .map(|lambda| lambda.max(F::zero()).sqrt())
        .collect()
}
