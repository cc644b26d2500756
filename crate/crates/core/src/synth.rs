//! Synthetic problem generation: random low-rank matrices, uniform
//! observation masks and the noise models used by the benchmarks.
//!
//! Every function is a pure function of its inputs and a seed. Seeds for
//! distinct purposes and trial indices are derived with [`stream_seed`], so
//! Monte-Carlo sweeps can run trials in any order (or in parallel) and still
//! reproduce bit-identical data.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::ObservedMatrix;
use crate::Scalar;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a master seed, a purpose tag and
/// a counter (e.g. the trial index). Same inputs, same stream — regardless
/// of scheduling.
pub fn stream_seed(master: u64, purpose: &str, index: u64) -> u64 {
    let mut tag = 0xcbf29ce484222325u64;
    for b in purpose.bytes() {
        tag = (tag ^ u64::from(b)).wrapping_mul(0x100000001b3);
    }
    mix64(mix64(master ^ tag).wrapping_add(index.wrapping_mul(0x9e3779b97f4a7c15)))
}

/// Rank-r matrix `X = U V` with i.i.d. standard normal factor entries.
pub fn gen_low_rank<F: Scalar>(m: usize, n: usize, r: usize, seed: u64) -> Result<Array2<F>>
where
    StandardNormal: Distribution<F>,
{
    if r == 0 || r > m.min(n) {
        return Err(Error::BadRank { r, m, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "lowrank", 0));
    let u = Array2::<F>::from_shape_simple_fn((m, r), || StandardNormal.sample(&mut rng));
    let v = Array2::<F>::from_shape_simple_fn((r, n), || StandardNormal.sample(&mut rng));
    Ok(u.dot(&v))
}

/// Uniform observation mask: exactly `round(p * m * n)` distinct entries.
///
/// Masks that leave a row or column empty make the corresponding factor
/// slice unidentifiable, so draws are retried (up to 100 times) until every
/// row and column is hit; impossible requests fail with `MaskCoverage`.
pub fn sample_mask(m: usize, n: usize, p: f64, seed: u64) -> Result<Vec<(usize, usize)>> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::BadFraction(p));
    }
    let total = m * n;
    let k = (p * total as f64).round() as usize;
    if k == 0 {
        return Err(Error::BadFraction(p));
    }
    let attempts = 100;
    for attempt in 0..attempts {
        let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "mask", attempt as u64));
        let mut cells: Vec<u32> = (0..total as u32).collect();
        let (chosen, _) = cells.partial_shuffle(&mut rng, k);
        let mut row_hit = vec![false; m];
        let mut col_hit = vec![false; n];
        for &cell in chosen.iter() {
            row_hit[cell as usize / n] = true;
            col_hit[cell as usize % n] = true;
        }
        if row_hit.iter().all(|&h| h) && col_hit.iter().all(|&h| h) {
            let mut mask: Vec<(usize, usize)> = chosen
                .iter()
                .map(|&cell| (cell as usize / n, cell as usize % n))
                .collect();
            mask.sort_unstable();
            return Ok(mask);
        }
    }
    Err(Error::MaskCoverage { attempts })
}

/// Restricts a dense matrix to a support set.
pub fn observe<F: Scalar>(truth: &Array2<F>, mask: &[(usize, usize)]) -> Result<ObservedMatrix<F>> {
    let (m, n) = truth.dim();
    let triplets: Vec<(usize, usize, F)> =
        mask.iter().map(|&(i, j)| (i, j, truth[(i, j)])).collect();
    ObservedMatrix::from_triplets(m, n, &triplets)
}

/// Which corruption to apply to the observed entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    Gmm,
    SaltPepper,
}

/// Noise model for the observed entries.
///
/// `Gmm` adds two-component Gaussian mixture noise: with probability
/// `1 - c` a draw from `N(0, sigma_a^2)` (dense small noise), with
/// probability `c` a draw from `N(0, sigma_b^2)` (sparse outliers).
/// `SaltPepper` overwrites a `sp_density` fraction of the observed entries
/// with `sp_low` or `sp_high`, equiprobably; amplitudes default to the
/// min/max of the observed values so the corruption stays meaningful on
/// data that is not unit-scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec<F> {
    pub kind: NoiseKind,
    pub c: f64,
    pub sigma_a: F,
    pub sigma_b: F,
    pub sp_density: f64,
    pub sp_low: Option<F>,
    pub sp_high: Option<F>,
}

impl<F: Scalar> NoiseSpec<F> {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            c: 0.0,
            sigma_a: F::zero(),
            sigma_b: F::zero(),
            sp_density: 0.0,
            sp_low: None,
            sp_high: None,
        }
    }

    pub fn gmm(c: f64, sigma_a: F, sigma_b: F) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::InvalidConfig(format!("outlier rate must be in [0,1], got {c}")));
        }
        if sigma_a < F::zero() || sigma_b < F::zero() {
            return Err(Error::InvalidConfig("noise deviations must be nonnegative".into()));
        }
        Ok(Self { kind: NoiseKind::Gmm, c, sigma_a, sigma_b, ..Self::none() })
    }

    pub fn salt_pepper(density: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&density) {
            return Err(Error::InvalidConfig(format!(
                "salt-and-pepper density must be in [0,1], got {density}"
            )));
        }
        Ok(Self { kind: NoiseKind::SaltPepper, sp_density: density, ..Self::none() })
    }

    pub fn salt_pepper_with(density: f64, low: F, high: F) -> Result<Self> {
        let mut spec = Self::salt_pepper(density)?;
        spec.sp_low = Some(low);
        spec.sp_high = Some(high);
        Ok(spec)
    }
}

/// Applies the noise model to the observed entries. The support never
/// changes and off-support entries do not exist to be touched.
pub fn corrupt<F: Scalar>(
    obs: &ObservedMatrix<F>,
    spec: &NoiseSpec<F>,
    seed: u64,
) -> ObservedMatrix<F>
where
    StandardNormal: Distribution<F>,
{
    match spec.kind {
        NoiseKind::None => obs.clone(),
        NoiseKind::Gmm => {
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "gmm", 0));
            let values: Vec<F> = obs
                .values()
                .iter()
                .map(|&x| {
                    let outlier = rng.gen_bool(spec.c);
                    let z: F = StandardNormal.sample(&mut rng);
                    let dev = if outlier { spec.sigma_b } else { spec.sigma_a };
                    x + z * dev
                })
                .collect();
            obs.with_values(values)
        }
        NoiseKind::SaltPepper => {
            let nnz = obs.nnz();
            let k = (spec.sp_density * nnz as f64).round() as usize;
            let mut values = obs.values().to_vec();
            if k == 0 {
                return obs.with_values(values);
            }
            let low = spec.sp_low.unwrap_or_else(|| {
                values.iter().cloned().fold(F::infinity(), F::min)
            });
            let high = spec.sp_high.unwrap_or_else(|| {
                values.iter().cloned().fold(F::neg_infinity(), F::max)
            });
            let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, "saltpepper", 0));
            let mut positions: Vec<usize> = (0..nnz).collect();
            let (chosen, _) = positions.partial_shuffle(&mut rng, k);
            for &pos in chosen.iter() {
                values[pos] = if rng.gen_bool(0.5) { high } else { low };
            }
            obs.with_values(values)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_matrix_has_vanishing_minors() {
        let x = gen_low_rank::<f64>(4, 4, 1, 1).unwrap();
        let scale = x.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
        for i in 0..4 {
            for k in (i + 1)..4 {
                for j in 0..4 {
                    for l in (j + 1)..4 {
                        let minor = x[(i, j)] * x[(k, l)] - x[(i, l)] * x[(k, j)];
                        assert!(minor.abs() < 1e-10 * scale * scale);
                    }
                }
            }
        }
    }

    #[test]
    fn generated_matrix_is_numerically_rank_r() {
        let x = gen_low_rank::<f64>(64, 48, 5, 2).unwrap();
        let sv = crate::lowrank::singular_values(&x, 6, 500, 1e-12);
        assert!(sv[5] < 1e-10 * sv[0], "sigma_6 {} vs sigma_1 {}", sv[5], sv[0]);
    }

    #[test]
    fn gen_low_rank_is_deterministic() {
        let a = gen_low_rank::<f64>(10, 8, 3, 9).unwrap();
        let b = gen_low_rank::<f64>(10, 8, 3, 9).unwrap();
        assert_eq!(a, b);
        let c = gen_low_rank::<f64>(10, 8, 3, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bad_rank_rejected() {
        assert!(matches!(gen_low_rank::<f64>(4, 4, 0, 1), Err(Error::BadRank { .. })));
        assert!(matches!(gen_low_rank::<f64>(4, 4, 5, 1), Err(Error::BadRank { .. })));
    }

    #[test]
    fn full_fraction_gives_full_support() {
        let mask = sample_mask(5, 7, 1.0, 3).unwrap();
        assert_eq!(mask.len(), 35);
    }

    #[test]
    fn mask_size_rounds_to_nearest() {
        let mask = sample_mask(256, 256, 0.6, 11).unwrap();
        assert_eq!(mask.len(), 39322); // round(0.6 * 65536)
    }

    #[test]
    fn bad_fraction_rejected() {
        assert!(matches!(sample_mask(4, 4, 0.0, 1), Err(Error::BadFraction(_))));
        assert!(matches!(sample_mask(4, 4, 1.5, 1), Err(Error::BadFraction(_))));
    }

    #[test]
    fn infeasible_coverage_errors() {
        // Two entries cannot hit three rows.
        assert!(matches!(sample_mask(3, 3, 0.223, 1), Err(Error::MaskCoverage { .. })));
    }

    #[test]
    fn tiny_mask_satisfies_coverage() {
        let mask = sample_mask(2, 2, 0.5, 0).unwrap();
        assert_eq!(mask.len(), 2);
        let rows: std::collections::BTreeSet<_> = mask.iter().map(|&(i, _)| i).collect();
        let cols: std::collections::BTreeSet<_> = mask.iter().map(|&(_, j)| j).collect();
        assert_eq!(rows.len(), 2);
        assert_eq!(cols.len(), 2);
        assert_eq!(mask, sample_mask(2, 2, 0.5, 0).unwrap());
    }

    #[test]
    fn inclusion_frequency_is_uniform() {
        // Every cell of an 8x8 grid should be included in about half of
        // 10000 half-density masks; 3 binomial standard deviations is 150.
        let mut counts = [[0u32; 8]; 8];
        for seed in 0..10_000u64 {
            for (i, j) in sample_mask(8, 8, 0.5, seed).unwrap() {
                counts[i][j] += 1;
            }
        }
        for row in &counts {
            for &c in row {
                assert!(
                    (c as f64 - 5000.0).abs() <= 150.0,
                    "inclusion count {c} outside 3 sigma"
                );
            }
        }
    }

    #[test]
    fn none_noise_is_identity() {
        let x = gen_low_rank::<f64>(6, 6, 2, 5).unwrap();
        let obs = observe(&x, &sample_mask(6, 6, 0.8, 5).unwrap()).unwrap();
        let noisy = corrupt(&obs, &NoiseSpec::none(), 1);
        assert_eq!(obs, noisy);
    }

    #[test]
    fn pure_gaussian_component_variance() {
        let truth = Array2::<f64>::zeros((1000, 1000));
        let mask: Vec<_> =
            (0..1000).flat_map(|i| (0..1000).map(move |j| (i, j))).collect();
        let obs = observe(&truth, &mask).unwrap();
        let spec = NoiseSpec::gmm(0.0, 0.5, 1.0).unwrap();
        let noisy = corrupt(&obs, &spec, 77);
        let var: f64 =
            noisy.values().iter().map(|&v| v * v).sum::<f64>() / noisy.nnz() as f64;
        assert!((var - 0.25).abs() / 0.25 < 0.01, "sample variance {var}");
    }

    #[test]
    fn mixture_variance_matches_identity() {
        // Var = (1-c) sigma_a^2 + c sigma_b^2 = 0.9e-4 + 0.1 = 0.10009.
        let truth = Array2::<f64>::zeros((1000, 1000));
        let mask: Vec<_> =
            (0..1000).flat_map(|i| (0..1000).map(move |j| (i, j))).collect();
        let obs = observe(&truth, &mask).unwrap();
        let spec = NoiseSpec::gmm(0.1, 0.01, 1.0).unwrap();
        let noisy = corrupt(&obs, &spec, 3);
        let var: f64 =
            noisy.values().iter().map(|&v| v * v).sum::<f64>() / noisy.nnz() as f64;
        let expected = 0.9 * 1e-4 + 0.1;
        assert!((var - expected).abs() / expected < 0.03, "sample variance {var}");
    }

    #[test]
    fn salt_pepper_flips_exact_count_to_amplitudes() {
        let truth = Array2::<f64>::from_elem((20, 20), 0.5);
        let mask = sample_mask(20, 20, 1.0, 1).unwrap();
        let obs = observe(&truth, &mask).unwrap();
        let spec = NoiseSpec::salt_pepper_with(0.1, 0.0, 1.0).unwrap();
        let noisy = corrupt(&obs, &spec, 9);
        let flipped = noisy.values().iter().filter(|&&v| v != 0.5).count();
        assert_eq!(flipped, 40); // round(0.1 * 400)
        assert!(noisy.values().iter().all(|&v| v == 0.0 || v == 1.0 || v == 0.5));
    }

    #[test]
    fn salt_pepper_defaults_to_data_range() {
        let triplets = vec![(0, 0, -3.0), (0, 1, 2.0), (1, 0, 0.0), (1, 1, 1.0)];
        let obs = ObservedMatrix::from_triplets(2, 2, &triplets).unwrap();
        let spec = NoiseSpec::salt_pepper(0.5).unwrap();
        let noisy = corrupt(&obs, &spec, 4);
        for (&before, &after) in obs.values().iter().zip(noisy.values()) {
            assert!(after == before || after == -3.0 || after == 2.0);
        }
        assert_eq!(
            noisy.values().iter().zip(obs.values()).filter(|(a, b)| a != b).count() <= 2,
            true
        );
    }

    #[test]
    fn corrupt_preserves_support_and_is_deterministic() {
        let x = gen_low_rank::<f64>(12, 9, 2, 8).unwrap();
        let obs = observe(&x, &sample_mask(12, 9, 0.5, 8).unwrap()).unwrap();
        let spec = NoiseSpec::gmm(0.2, 0.1, 2.0).unwrap();
        let a = corrupt(&obs, &spec, 5);
        let b = corrupt(&obs, &spec, 5);
        assert_eq!(a, b);
        assert_eq!(a.to_triplets().len(), obs.to_triplets().len());
        for ((i1, j1, _), (i2, j2, _)) in a.to_triplets().iter().zip(obs.to_triplets()) {
            assert_eq!((*i1, *j1), (i2, j2));
        }
    }

    #[test]
    fn stream_seeds_are_distinct_per_purpose_and_index() {
        let a = stream_seed(1, "mask", 0);
        let b = stream_seed(1, "mask", 1);
        let c = stream_seed(1, "gmm", 0);
        let d = stream_seed(2, "mask", 0);
        assert!(a != b && a != c && a != d && b != c);
    }
}
