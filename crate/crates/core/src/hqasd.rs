//! Alternating steepest descent solvers: plain `ASD`, `ScaledASD`, and the
//! robust `HQ-ASD`.
//!
//! Each outer iteration takes one exact-line-search gradient step in `U` and
//! then one in `V` on the weighted completion objective
//! `1/2 || sqrt(W) . Omega . (X - U V) ||_F^2`. The scaled variants
//! precondition the gradients with the inverse r x r Gram matrices, which
//! costs almost nothing at small rank and markedly improves conditioning.
//! The robust variant recomputes `W` from the masked residual once per
//! iteration at the clamped adaptive kernel width; with `W` identically one
//! the updates reduce to the plain l2 method.

use std::time::Instant;

use ndarray::Array2;

use crate::correntropy::{adaptive_sigma, closs, compute_weights};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve_in_place, frob_inner, frob_norm_sq, spd_factor_ridged};
use crate::model::{
    masked_residual, residual_fro_norm, ConvergenceTrace, FactorPair, ObservedMatrix, Phase,
    SolverConfig, StopReason, TraceRecord, Variant,
};
use crate::solver::{init_factors, NoopObserver, Side, SolveObserver};
use crate::Scalar;

/// Gradients, directions and step sizes of one descent iteration.
#[derive(Debug, Clone)]
pub struct StepState<F> {
    pub g_u: Array2<F>,
    pub g_v: Array2<F>,
    pub mu_u: F,
    pub mu_v: F,
    pub scaled: bool,
}

fn check_weights<F: Scalar>(obs: &ObservedMatrix<F>, w: &[F]) -> Result<()> {
    if w.len() != obs.nnz() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} observed entries",
            w.len(),
            obs.nnz()
        )));
    }
    Ok(())
}

/// Gradient of the weighted objective with respect to `U`:
/// `g_U = -(W . Omega . (X - U V)) V^T`, an m x r matrix.
pub fn grad_u<F: Scalar>(
    obs: &ObservedMatrix<F>,
    f: &FactorPair<F>,
    w: &[F],
) -> Result<Array2<F>> {
    check_weights(obs, w)?;
    if f.nrows() != obs.nrows() || f.ncols() != obs.ncols() {
        return Err(Error::DimensionMismatch("factor and observation shapes differ".into()));
    }
    let r = f.rank();
    let v = f.v();
    let mut g = Array2::<F>::zeros((obs.nrows(), r));
    let mut pos = 0usize;
    for i in 0..obs.nrows() {
        let (cols, vals) = obs.row(i);
        let u_row = f.u().row(i);
        for (&j, &x) in cols.iter().zip(vals) {
            let j = j as usize;
            let pred: F = u_row.iter().zip(v.column(j)).map(|(&a, &b)| a * b).sum();
            let c = w[pos] * (x - pred);
            for p in 0..r {
                g[(i, p)] = g[(i, p)] - c * v[(p, j)];
            }
            pos += 1;
        }
    }
    Ok(g)
}

/// Gradient with respect to `V`: `g_V = -U^T (W . Omega . (X - U V))`,
/// an r x n matrix.
pub fn grad_v<F: Scalar>(
    obs: &ObservedMatrix<F>,
    f: &FactorPair<F>,
    w: &[F],
) -> Result<Array2<F>> {
    check_weights(obs, w)?;
    if f.nrows() != obs.nrows() || f.ncols() != obs.ncols() {
        return Err(Error::DimensionMismatch("factor and observation shapes differ".into()));
    }
    let r = f.rank();
    let v = f.v();
    let mut g = Array2::<F>::zeros((r, obs.ncols()));
    let mut pos = 0usize;
    for i in 0..obs.nrows() {
        let (cols, vals) = obs.row(i);
        let u_row = f.u().row(i);
        for (&j, &x) in cols.iter().zip(vals) {
            let j = j as usize;
            let pred: F = u_row.iter().zip(v.column(j)).map(|(&a, &b)| a * b).sum();
            let c = w[pos] * (x - pred);
            for p in 0..r {
                g[(p, j)] = g[(p, j)] - c * u_row[p];
            }
            pos += 1;
        }
    }
    Ok(g)
}

/// Sum of `w_ij * (D V)_ij^2` over the support, for a `U`-side direction `D`.
fn masked_dv_sq<F: Scalar>(obs: &ObservedMatrix<F>, d: &Array2<F>, v: &Array2<F>, w: &[F]) -> F {
    let mut total = F::zero();
    let mut pos = 0usize;
    for i in 0..obs.nrows() {
        let (cols, _) = obs.row(i);
        let d_row = d.row(i);
        for &j in cols {
            let val: F = d_row.iter().zip(v.column(j as usize)).map(|(&a, &b)| a * b).sum();
            total += w[pos] * val * val;
            pos += 1;
        }
    }
    total
}

/// Sum of `w_ij * (U D)_ij^2` over the support, for a `V`-side direction `D`.
fn masked_ud_sq<F: Scalar>(obs: &ObservedMatrix<F>, u: &Array2<F>, d: &Array2<F>, w: &[F]) -> F {
    let mut total = F::zero();
    let mut pos = 0usize;
    for i in 0..obs.nrows() {
        let (cols, _) = obs.row(i);
        let u_row = u.row(i);
        for &j in cols {
            let val: F = u_row.iter().zip(d.column(j as usize)).map(|(&a, &b)| a * b).sum();
            total += w[pos] * val * val;
            pos += 1;
        }
    }
    total
}

/// Exact line-search step along `-direction`.
///
/// The minimizer of the weighted objective along the ray is
/// `<gradient, direction> / || sqrt(W) . Omega . (direction * V) ||_F^2`
/// (respectively `U * direction` for the `V` side); with
/// `direction == gradient` this is the plain steepest-descent step and with
/// a Gram-scaled direction the trace-form numerator.
pub fn exact_step<F: Scalar>(
    gradient: &Array2<F>,
    direction: &Array2<F>,
    side: Side,
    obs: &ObservedMatrix<F>,
    f: &FactorPair<F>,
    w: &[F],
) -> Result<F> {
    check_weights(obs, w)?;
    if frob_norm_sq(direction) == F::zero() {
        return Err(Error::ZeroDirection);
    }
    let num = frob_inner(gradient, direction);
    if !(num > F::zero()) {
        return Err(Error::ZeroDirection);
    }
    let denom = match side {
        Side::U => masked_dv_sq(obs, direction, f.v(), w),
        Side::V => masked_ud_sq(obs, f.u(), direction, w),
    };
    if !(denom > F::zero()) {
        return Err(Error::ZeroCurvature);
    }
    Ok(num / denom)
}

/// Preconditions a `U`-side gradient with `(V V^T)^{-1}`.
pub fn scale_direction_u<F: Scalar>(
    f: &FactorPair<F>,
    g_u: &Array2<F>,
    ridge: F,
) -> Result<Array2<F>> {
    let gram = f.v().dot(&f.v().t());
    let l = spd_factor_ridged(&gram, ridge, false)?;
    let mut out = g_u.clone();
    let r = gram.nrows();
    let mut buf = vec![F::zero(); r];
    for mut row in out.rows_mut() {
        for (b, &x) in buf.iter_mut().zip(row.iter()) {
            *b = x;
        }
        cholesky_solve_in_place(&l, &mut buf);
        for (x, &b) in row.iter_mut().zip(buf.iter()) {
            *x = b;
        }
    }
    Ok(out)
}

/// Preconditions a `V`-side gradient with `(U^T U)^{-1}`.
pub fn scale_direction_v<F: Scalar>(
    f: &FactorPair<F>,
    g_v: &Array2<F>,
    ridge: F,
) -> Result<Array2<F>> {
    let gram = f.u().t().dot(f.u());
    let l = spd_factor_ridged(&gram, ridge, false)?;
    let mut out = g_v.clone();
    let r = gram.nrows();
    let mut buf = vec![F::zero(); r];
    for mut col in out.columns_mut() {
        for (b, &x) in buf.iter_mut().zip(col.iter()) {
            *b = x;
        }
        cholesky_solve_in_place(&l, &mut buf);
        for (x, &b) in col.iter_mut().zip(buf.iter()) {
            *x = b;
        }
    }
    Ok(out)
}

/// Gram-scaled descent directions for both factors.
pub fn scaled_directions<F: Scalar>(
    f: &FactorPair<F>,
    g_u: &Array2<F>,
    g_v: &Array2<F>,
    ridge: F,
) -> Result<(Array2<F>, Array2<F>)> {
    Ok((scale_direction_u(f, g_u, ridge)?, scale_direction_v(f, g_v, ridge)?))
}

enum IterOutcome<F> {
    Stepped(StepState<F>),
    /// Both gradients vanished: the observable part is fitted exactly.
    ZeroGradient,
    /// A nonzero direction with zero curvature: stop with the current iterate.
    Stalled,
}

enum SideOutcome<F> {
    Applied { gradient: Array2<F>, mu: F },
    Zero,
    Stalled,
}

fn try_side<F: Scalar>(
    side: Side,
    obs: &ObservedMatrix<F>,
    f: &mut FactorPair<F>,
    w: &[F],
    scaled: bool,
    ridge: F,
    observer: &mut impl SolveObserver<F>,
    iter: usize,
) -> Result<SideOutcome<F>> {
    let gradient = match side {
        Side::U => grad_u(obs, f, w)?,
        Side::V => grad_v(obs, f, w)?,
    };
    if frob_norm_sq(&gradient) == F::zero() {
        return Ok(SideOutcome::Zero);
    }
    let direction = if scaled {
        match side {
            Side::U => scale_direction_u(f, &gradient, ridge)?,
            Side::V => scale_direction_v(f, &gradient, ridge)?,
        }
    } else {
        gradient.clone()
    };
    let mu = match exact_step(&gradient, &direction, side, obs, f, w) {
        Ok(mu) => mu,
        Err(Error::ZeroDirection) => return Ok(SideOutcome::Zero),
        Err(Error::ZeroCurvature) => return Ok(SideOutcome::Stalled),
        Err(e) => return Err(e),
    };
    observer.on_descent_step(iter, side, f, w, &gradient, &direction, mu);
    match side {
        Side::U => f.u_mut().zip_mut_with(&direction, |x, &d| *x = *x - mu * d),
        Side::V => f.v_mut().zip_mut_with(&direction, |x, &d| *x = *x - mu * d),
    }
    Ok(SideOutcome::Applied { gradient, mu })
}

/// One descent iteration: a `U` step, then a `V` step against the updated
/// `U`, both under the same weights.
fn descent_iteration<F: Scalar>(
    obs: &ObservedMatrix<F>,
    f: &mut FactorPair<F>,
    w: &[F],
    scaled: bool,
    ridge: F,
    observer: &mut impl SolveObserver<F>,
    iter: usize,
) -> Result<IterOutcome<F>> {
    let (g_u, mu_u) = match try_side(Side::U, obs, f, w, scaled, ridge, observer, iter)? {
        SideOutcome::Applied { gradient, mu } => (gradient, mu),
        SideOutcome::Zero => (Array2::zeros((f.nrows(), f.rank())), F::zero()),
        SideOutcome::Stalled => return Ok(IterOutcome::Stalled),
    };
    let (g_v, mu_v) = match try_side(Side::V, obs, f, w, scaled, ridge, observer, iter)? {
        SideOutcome::Applied { gradient, mu } => (gradient, mu),
        SideOutcome::Zero => (Array2::zeros((f.rank(), f.ncols())), F::zero()),
        SideOutcome::Stalled => return Ok(IterOutcome::Stalled),
    };
    if mu_u == F::zero() && mu_v == F::zero() {
        return Ok(IterOutcome::ZeroGradient);
    }
    Ok(IterOutcome::Stepped(StepState { g_u, g_v, mu_u, mu_v, scaled }))
}

/// Plain l2 alternating steepest descent (`Asd` or `ScaledAsd` per the
/// config variant).
pub fn asd_solve<F: Scalar>(
    obs: &ObservedMatrix<F>,
    rank: usize,
    config: &SolverConfig<F>,
) -> Result<(FactorPair<F>, ConvergenceTrace<F>)>
where
    rand_distr::StandardNormal: rand_distr::Distribution<F>,
{
    asd_solve_observed(obs, rank, config, &mut NoopObserver)
}

pub fn asd_solve_observed<F: Scalar>(
    obs: &ObservedMatrix<F>,
    rank: usize,
    config: &SolverConfig<F>,
    observer: &mut impl SolveObserver<F>,
) -> Result<(FactorPair<F>, ConvergenceTrace<F>)>
where
    rand_distr::StandardNormal: rand_distr::Distribution<F>,
{
    let scaled = config.variant != Variant::Asd;
    descent_solve_core(obs, rank, config, observer, false, scaled)
}

/// Robust alternating steepest descent: ScaledASD warm-up at the large warm
/// width (weights identically one), then correntropy-weighted steps at the
/// clamped adaptive kernel width.
pub fn hqasd_solve<F: Scalar>(
    obs: &ObservedMatrix<F>,
    rank: usize,
    config: &SolverConfig<F>,
) -> Result<(FactorPair<F>, ConvergenceTrace<F>)>
where
    rand_distr::StandardNormal: rand_distr::Distribution<F>,
{
    hqasd_solve_observed(obs, rank, config, &mut NoopObserver)
}

pub fn hqasd_solve_observed<F: Scalar>(
    obs: &ObservedMatrix<F>,
    rank: usize,
    config: &SolverConfig<F>,
    observer: &mut impl SolveObserver<F>,
) -> Result<(FactorPair<F>, ConvergenceTrace<F>)>
where
    rand_distr::StandardNormal: rand_distr::Distribution<F>,
{
    descent_solve_core(obs, rank, config, observer, true, true)
}

fn descent_solve_core<F: Scalar>(
    obs: &ObservedMatrix<F>,
    rank: usize,
    config: &SolverConfig<F>,
    observer: &mut impl SolveObserver<F>,
    robust: bool,
    scaled: bool,
) -> Result<(FactorPair<F>, ConvergenceTrace<F>)>
where
    rand_distr::StandardNormal: rand_distr::Distribution<F>,
{
    config.validate()?;
    obs.check_identifiable()?;
    let xi = config.kernel.resolve_xi(obs.max_abs_value());
    let mut f = init_factors(obs, rank, config.seed)?;
    let start = Instant::now();
    let mut trace = ConvergenceTrace::new();
    let warm = config.kernel.warm_sigma;
    let ones = vec![F::one(); obs.nnz()];
    let mut prev_norm = F::zero();
    let mut t = 0usize;

    // l2 phase: the whole run for the plain variants, the warm-up otherwise.
    let phase_eps = if robust { config.eps_switch } else { config.eps_stop };
    loop {
        let outcome = descent_iteration(obs, &mut f, &ones, scaled, config.ridge, observer, t)?;
        let residual = masked_residual(obs, &f)?;
        let norm = residual_fro_norm(&residual);
        trace.push(TraceRecord {
            iter: t,
            sigma: warm,
            objective: closs(&residual, warm)?,
            residual_norm: norm,
            phase: Phase::L2Warmup,
            elapsed: start.elapsed().as_secs_f64(),
        });
        observer.on_iteration(t, Phase::L2Warmup, &f);
        match outcome {
            IterOutcome::Stalled => {
                trace.finish(StopReason::Stalled);
                return Ok((f, trace));
            }
            IterOutcome::ZeroGradient => {
                trace.finish(StopReason::Converged);
                return Ok((f, trace));
            }
            IterOutcome::Stepped(_) => {}
        }
        let done = (norm - prev_norm).abs() < phase_eps;
        prev_norm = norm;
        t += 1;
        if done {
            if robust {
                break;
            }
            trace.finish(StopReason::Converged);
            return Ok((f, trace));
        }
        if t >= config.max_outer {
            trace.finish(StopReason::MaxIterations);
            return Ok((f, trace));
        }
    }

    // Correntropy phase with non-increasing kernel width.
    let mut sigma_prev = warm;
    let mut residual = masked_residual(obs, &f)?;
    while t < config.max_outer {
        let sigma_raw = adaptive_sigma(&residual, config.kernel.eta, xi)?;
        let sigma_t = if sigma_raw < sigma_prev { sigma_raw } else { sigma_prev };
        let w = compute_weights(&residual, sigma_t)?;
        let outcome = descent_iteration(obs, &mut f, &w, true, config.ridge, observer, t)?;
        residual = masked_residual(obs, &f)?;
        let norm = residual_fro_norm(&residual);
        trace.push(TraceRecord {
            iter: t,
            sigma: sigma_t,
            objective: closs(&residual, sigma_t)?,
            residual_norm: norm,
            phase: Phase::Correntropy,
            elapsed: start.elapsed().as_secs_f64(),
        });
        observer.on_iteration(t, Phase::Correntropy, &f);
        match outcome {
            IterOutcome::Stalled => {
                trace.finish(StopReason::Stalled);
                return Ok((f, trace));
            }
            IterOutcome::ZeroGradient => {
                trace.finish(StopReason::Converged);
                return Ok((f, trace));
            }
            IterOutcome::Stepped(_) => {}
        }
        if (norm - prev_norm).abs() < config.eps_stop {
            trace.finish(StopReason::Converged);
            return Ok((f, trace));
        }
        prev_norm = norm;
        sigma_prev = sigma_t;
        t += 1;
    }
    trace.finish(StopReason::MaxIterations);
    Ok((f, trace))
}
