//! Solver-independent machinery: variant dispatch, factor initialization and
//! the observer hooks the tests use to inspect iterates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ndarray::Array2;

use crate::error::Result;
use crate::model::{ConvergenceTrace, FactorPair, ObservedMatrix, Phase, SolverConfig, Variant};
use crate::Scalar;

/// Which factor a half-step updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    U,
    V,
}

/// Hooks into a running solve. Every method has an empty default body, so
/// implementors only override what they need. Used by tests to compare
/// iterates across solvers and to audit line-search steps.
#[allow(unused_variables)]
pub trait SolveObserver<F: Scalar> {
    /// After both half-steps of outer iteration `iter` (0-based).
    fn on_iteration(&mut self, iter: usize, phase: Phase, factors: &FactorPair<F>) {}

    /// After a single half-step within an outer iteration.
    fn on_half_step(&mut self, iter: usize, phase: Phase, side: Side, factors: &FactorPair<F>) {}

    /// Before a gradient update `factor <- factor - mu * direction` is
    /// applied (descent solvers only). `weights` live on the observation
    /// support in row-major order.
    fn on_descent_step(
        &mut self,
        iter: usize,
        side: Side,
        factors: &FactorPair<F>,
        weights: &[F],
        gradient: &Array2<F>,
        direction: &Array2<F>,
        mu: F,
    ) {
    }
}

/// Observer that records nothing.
pub struct NoopObserver;

impl<F: Scalar> SolveObserver<F> for NoopObserver {}

/// Random factors seeded from the config: i.i.d. standard normal entries
/// scaled by `sqrt(mean |observed value|) / r^(1/4)`, which puts the initial
/// product on the same scale as the data.
pub fn init_factors<F: Scalar>(
    obs: &ObservedMatrix<F>,
    rank: usize,
    seed: u64,
) -> Result<FactorPair<F>>
where
    rand_distr::StandardNormal: rand_distr::Distribution<F>,
{
    if rank == 0 || rank > obs.nrows().min(obs.ncols()) {
        return Err(crate::Error::BadRank { r: rank, m: obs.nrows(), n: obs.ncols() });
    }
    let mean_abs = obs.values().iter().map(|v| v.abs()).sum::<F>() / F::from_usize(obs.nnz());
    let scale = if mean_abs > F::zero() {
        mean_abs.sqrt() / F::from_usize(rank).powf(F::from_f64(0.25))
    } else {
        F::one()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(FactorPair::random(obs.nrows(), obs.ncols(), rank, scale, &mut rng))
}

/// Runs the solver selected by `config.variant`.
pub fn solve<F: Scalar>(
    obs: &ObservedMatrix<F>,
    rank: usize,
    config: &SolverConfig<F>,
) -> Result<(FactorPair<F>, ConvergenceTrace<F>)>
where
    rand_distr::StandardNormal: rand_distr::Distribution<F>,
{
    match config.variant {
        Variant::Pf => crate::hqpf::pf_solve(obs, rank, config),
        Variant::HqPf => crate::hqpf::hqpf_solve(obs, rank, config),
        Variant::Asd | Variant::ScaledAsd => crate::hqasd::asd_solve(obs, rank, config),
        Variant::HqAsd => crate::hqasd::hqasd_solve(obs, rank, config),
    }
}
