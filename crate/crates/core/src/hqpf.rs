//! Alternating-minimization solvers: plain PowerFactorization (`PF`) and its
//! robust counterpart (`HQ-PF`).
//!
//! Each outer iteration solves one small least-squares problem per row of `U`
//! and then per column of `V`. In the robust variant the subproblems are
//! iteratively reweighted: weights come from the Gaussian kernel of the
//! current residuals at an adaptive inner width that starts large (so the
//! first pass is an ordinary least-squares fit) and then tracks the scaled
//! residual norm. The row and column subproblems are mutually independent,
//! so a half-step can run its subproblems on several workers without
//! changing any result bit.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::correntropy::{adaptive_sigma, closs, inner_sigma, compute_weights};
use crate::error::{Error, Result};
use crate::linalg::solve_spd_ridged;
use crate::model::{
    masked_residual, residual_fro_norm, ConvergenceTrace, FactorPair, ObservedMatrix, Phase,
    SolverConfig, StopReason, TraceRecord,
};
use crate::solver::{init_factors, NoopObserver, Side, SolveObserver};
use crate::Scalar;

/// One row (or column) weighted least-squares subproblem.
///
/// `design` holds the relevant factor slice as a `|theta| x r` matrix, so the
/// fitted model is `x ~ design * u`. For a row subproblem the k-th design row
/// is the `theta[k]`-th column of `V`; for a column subproblem it is the
/// `theta[k]`-th row of `U`.
#[derive(Debug, Clone)]
pub struct RowSubproblem<F> {
    /// Observed indices along the other dimension.
    pub theta: Vec<u32>,
    /// Observed values at `theta`.
    pub x: Vec<F>,
    /// `|theta| x r` design matrix.
    pub design: Array2<F>,
    /// Diagonal weights, all positive.
    pub phi: Vec<F>,
}

impl<F: Scalar> RowSubproblem<F> {
    pub fn new(theta: Vec<u32>, x: Vec<F>, design: Array2<F>, phi: Vec<F>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::DegenerateRow);
        }
        if x.len() != theta.len() || design.nrows() != theta.len() || phi.len() != theta.len() {
            return Err(Error::DimensionMismatch(
                "subproblem fields must share the support length".into(),
            ));
        }
        Ok(Self { theta, x, design, phi })
    }

    fn rank(&self) -> usize {
        self.design.ncols()
    }
}

/// Minimizer of `|| sqrt(phi) (x - design u) ||^2` via the normal equations.
///
/// Underdetermined subproblems (`|theta| < r`) and singular normal matrices
/// are solved with `ridge * tr / r` added to the diagonal.
pub fn weighted_ls_row<F: Scalar>(sub: &RowSubproblem<F>, ridge: F) -> Result<Array1<F>> {
    if sub.theta.is_empty() {
        return Err(Error::DegenerateRow);
    }
    debug_assert!(sub.phi.iter().all(|&w| w >= F::zero()));
    let r = sub.rank();
    let len = sub.theta.len();
    let mut normal = Array2::<F>::zeros((r, r));
    let mut rhs = vec![F::zero(); r];
    for k in 0..len {
        let w = sub.phi[k];
        if w == F::zero() {
            continue;
        }
        let row = sub.design.row(k);
        let wx = w * sub.x[k];
        for p in 0..r {
            let dp = row[p];
            rhs[p] += wx * dp;
            let wdp = w * dp;
            for q in p..r {
                normal[(p, q)] += wdp * row[q];
            }
        }
    }
    for p in 0..r {
        for q in 0..p {
            normal[(p, q)] = normal[(q, p)];
        }
    }
    let x = solve_spd_ridged(&normal, &rhs, ridge, len < r)?;
    Ok(Array1::from_vec(x))
}

/// Gathers the row-i subproblem against `V` (design rows are columns of `V`).
fn gather_row<F: Scalar>(obs: &ObservedMatrix<F>, i: usize, v: &Array2<F>) -> RowSubproblem<F> {
    let (cols, vals) = obs.row(i);
    let r = v.nrows();
    let mut design = Array2::<F>::zeros((cols.len(), r));
    for (k, &j) in cols.iter().enumerate() {
        for p in 0..r {
            design[(k, p)] = v[(p, j as usize)];
        }
    }
    RowSubproblem {
        theta: cols.to_vec(),
        x: vals.to_vec(),
        design,
        phi: vec![F::one(); cols.len()],
    }
}

/// Gathers the column-j subproblem against `U` (design rows are rows of `U`).
fn gather_col<F: Scalar>(obs: &ObservedMatrix<F>, j: usize, u: &Array2<F>) -> RowSubproblem<F> {
    let r = u.ncols();
    let nnz = obs.column_nnz(j);
    let mut theta = Vec::with_capacity(nnz);
    let mut x = Vec::with_capacity(nnz);
    let mut design = Array2::<F>::zeros((nnz, r));
    for (k, (i, val)) in obs.column(j).enumerate() {
        theta.push(i as u32);
        x.push(val);
        for p in 0..r {
            design[(k, p)] = u[(i, p)];
        }
    }
    RowSubproblem { theta, x, design, phi: vec![F::one(); nnz] }
}

/// Robust solve of one row subproblem by iterative reweighting.
///
/// The first pass runs at the large warm width (an ordinary least-squares
/// fit); subsequent passes reweight at the adaptive inner width until the
/// iterate stops moving or `max_inner` is hit.
pub fn hq_row_solve<F: Scalar>(
    i: usize,
    obs: &ObservedMatrix<F>,
    v: &Array2<F>,
    u_init: &[F],
    sigma_outer: F,
    config: &SolverConfig<F>,
    xi: F,
) -> Result<Array1<F>> {
    let sub = gather_row(obs, i, v);
    hq_subproblem_solve(sub, u_init, sigma_outer, config, xi)
}

fn hq_subproblem_solve<F: Scalar>(
    mut sub: RowSubproblem<F>,
    u_init: &[F],
    sigma_outer: F,
    config: &SolverConfig<F>,
    xi: F,
) -> Result<Array1<F>> {
    if sub.theta.is_empty() {
        return Err(Error::DegenerateRow);
    }
    let two = F::from_f64(2.0);
    let mut u_prev: Vec<F> = u_init.to_vec();
    let mut sigma_in = config.kernel.warm_sigma;
    for _ in 0..config.max_inner {
        for k in 0..sub.theta.len() {
            let pred: F =
                sub.design.row(k).iter().zip(&u_prev).map(|(&d, &u)| d * u).sum();
            let z = (sub.x[k] - pred) / sigma_in;
            sub.phi[k] = (-z * z / two).exp();
        }
        let u = weighted_ls_row(&sub, config.ridge)?;
        let u_slice = u.as_slice().expect("contiguous");
        let delta: F = u_slice
            .iter()
            .zip(&u_prev)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        if delta <= config.eps_inner {
            return Ok(u);
        }
        sigma_in = inner_sigma(
            &sub.x,
            sub.design.view(),
            u_slice,
            &u_prev,
            config.eps_inner,
            sigma_outer,
            xi,
        )?;
        u_prev.copy_from_slice(u_slice);
    }
    Ok(Array1::from_vec(u_prev))
}

enum HalfStep<F> {
    L2,
    Hq { sigma_outer: F, xi: F },
}

/// Updates every row of `U` (independent subproblems, optionally parallel).
fn update_rows<F: Scalar>(
    obs: &ObservedMatrix<F>,
    f: &mut FactorPair<F>,
    config: &SolverConfig<F>,
    mode: &HalfStep<F>,
    pool: Option<&rayon::ThreadPool>,
) -> Result<()> {
    let m = obs.nrows();
    let v_snapshot = f.v().clone();
    let solve_one = |i: usize| -> Result<Array1<F>> {
        match *mode {
            HalfStep::L2 => weighted_ls_row(&gather_row(obs, i, &v_snapshot), config.ridge),
            HalfStep::Hq { sigma_outer, xi } => {
                let u_init: Vec<F> = f.u().row(i).to_vec();
                hq_row_solve(i, obs, &v_snapshot, &u_init, sigma_outer, config, xi)
            }
        }
    };
    let rows: Vec<Result<Array1<F>>> = match pool {
        Some(pool) => pool.install(|| (0..m).into_par_iter().map(solve_one).collect()),
        None => (0..m).map(solve_one).collect(),
    };
    let u = f.u_mut();
    for (i, row) in rows.into_iter().enumerate() {
        u.row_mut(i).assign(&row?);
    }
    Ok(())
}

/// Updates every column of `V`; mirror image of [`update_rows`].
fn update_cols<F: Scalar>(
    obs: &ObservedMatrix<F>,
    f: &mut FactorPair<F>,
    config: &SolverConfig<F>,
    mode: &HalfStep<F>,
    pool: Option<&rayon::ThreadPool>,
) -> Result<()> {
    let n = obs.ncols();
    let u_snapshot = f.u().clone();
    let solve_one = |j: usize| -> Result<Array1<F>> {
        let sub = gather_col(obs, j, &u_snapshot);
        match *mode {
            HalfStep::L2 => weighted_ls_row(&sub, config.ridge),
            HalfStep::Hq { sigma_outer, xi } => {
                let v_init: Vec<F> = f.v().column(j).to_vec();
                hq_subproblem_solve(sub, &v_init, sigma_outer, config, xi)
            }
        }
    };
    let cols: Vec<Result<Array1<F>>> = match pool {
        Some(pool) => pool.install(|| (0..n).into_par_iter().map(solve_one).collect()),
        None => (0..n).map(solve_one).collect(),
    };
    let v = f.v_mut();
    for (j, col) in cols.into_iter().enumerate() {
        v.column_mut(j).assign(&col?);
    }
    Ok(())
}

fn build_pool(workers: usize) -> Option<rayon::ThreadPool> {
    if workers <= 1 {
        return None;
    }
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().ok()
}

/// Plain PowerFactorization: alternating unweighted least squares until the
/// change of the masked residual norm drops below `eps_stop`.
pub fn pf_solve<F: Scalar>(
    obs: &ObservedMatrix<F>,
    rank: usize,
    config: &SolverConfig<F>,
) -> Result<(FactorPair<F>, ConvergenceTrace<F>)>
where
    rand_distr::StandardNormal: rand_distr::Distribution<F>,
{
    pf_solve_observed(obs, rank, config, &mut NoopObserver)
}

pub fn pf_solve_observed<F: Scalar>(
    obs: &ObservedMatrix<F>,
    rank: usize,
    config: &SolverConfig<F>,
    observer: &mut impl SolveObserver<F>,
) -> Result<(FactorPair<F>, ConvergenceTrace<F>)>
where
    rand_distr::StandardNormal: rand_distr::Distribution<F>,
{
    config.validate()?;
    obs.check_identifiable()?;
    let mut f = init_factors(obs, rank, config.seed)?;
    let pool = build_pool(config.workers);
    let start = Instant::now();
    let mut trace = ConvergenceTrace::new();
    let warm = config.kernel.warm_sigma;
    let mut prev_norm = F::zero();
    for t in 0..config.max_outer {
        update_rows(obs, &mut f, config, &HalfStep::L2, pool.as_ref())?;
        observer.on_half_step(t, Phase::L2Warmup, Side::U, &f);
        update_cols(obs, &mut f, config, &HalfStep::L2, pool.as_ref())?;
        observer.on_half_step(t, Phase::L2Warmup, Side::V, &f);
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
        if (norm - prev_norm).abs() < config.eps_stop {
            trace.finish(StopReason::Converged);
            return Ok((f, trace));
        }
        prev_norm = norm;
    }
    trace.finish(StopReason::MaxIterations);
    Ok((f, trace))
}

/// Robust alternating minimization: an l2 warm-up phase (plain PF updates)
/// until the residual-norm change falls below `eps_switch`, then reweighted
/// subproblems at the clamped adaptive kernel width until `eps_stop`.
pub fn hqpf_solve<F: Scalar>(
    obs: &ObservedMatrix<F>,
    rank: usize,
    config: &SolverConfig<F>,
) -> Result<(FactorPair<F>, ConvergenceTrace<F>)>
where
    rand_distr::StandardNormal: rand_distr::Distribution<F>,
{
    hqpf_solve_observed(obs, rank, config, &mut NoopObserver)
}

pub fn hqpf_solve_observed<F: Scalar>(
    obs: &ObservedMatrix<F>,
    rank: usize,
    config: &SolverConfig<F>,
    observer: &mut impl SolveObserver<F>,
) -> Result<(FactorPair<F>, ConvergenceTrace<F>)>
where
    rand_distr::StandardNormal: rand_distr::Distribution<F>,
{
    config.validate()?;
    obs.check_identifiable()?;
    let xi = config.kernel.resolve_xi(obs.max_abs_value());
    let mut f = init_factors(obs, rank, config.seed)?;
    let pool = build_pool(config.workers);
    let start = Instant::now();
    let mut trace = ConvergenceTrace::new();
    let warm = config.kernel.warm_sigma;

    // Phase 1: l2 warm-up.
    let mut prev_norm = F::zero();
    let mut t = 0;
    loop {
        update_rows(obs, &mut f, config, &HalfStep::L2, pool.as_ref())?;
        observer.on_half_step(t, Phase::L2Warmup, Side::U, &f);
        update_cols(obs, &mut f, config, &HalfStep::L2, pool.as_ref())?;
        observer.on_half_step(t, Phase::L2Warmup, Side::V, &f);
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
        let done = (norm - prev_norm).abs() < config.eps_switch;
        prev_norm = norm;
        t += 1;
        if done {
            break;
        }
        if t >= config.max_outer {
            trace.finish(StopReason::MaxIterations);
            return Ok((f, trace));
        }
    }

    // Phase 2: correntropy phase with non-increasing kernel width.
    let mut sigma_prev = warm;
    let mut residual = masked_residual(obs, &f)?;
    while t < config.max_outer {
        let sigma_raw = adaptive_sigma(&residual, config.kernel.eta, xi)?;
        let sigma_t = if sigma_raw < sigma_prev { sigma_raw } else { sigma_prev };
        let mode = HalfStep::Hq { sigma_outer: sigma_t, xi };
        update_rows(obs, &mut f, config, &mode, pool.as_ref())?;
        observer.on_half_step(t, Phase::Correntropy, Side::U, &f);
        update_cols(obs, &mut f, config, &mode, pool.as_ref())?;
        observer.on_half_step(t, Phase::Correntropy, Side::V, &f);
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

// Re-exported for the descent tests: the weights an HQ iteration would use.
pub fn iteration_weights<F: Scalar>(
    obs: &ObservedMatrix<F>,
    f: &FactorPair<F>,
    sigma: F,
) -> Result<Vec<F>> {
    let residual = masked_residual(obs, f)?;
    Ok(compute_weights(&residual, sigma)?.values().to_vec())
}
