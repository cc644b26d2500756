//! Robust low-rank matrix completion from partial observations.
//!
//! The recovered matrix is parameterized as a rank-r product `U * V` and fitted
//! to the observed entries under either a plain squared error or a
//! correntropy-induced loss. The correntropy loss saturates for large errors,
//! so gross outliers among the observations stop dominating the fit. Two
//! solver families are provided:
//!
//! * [`hqpf`] — alternating minimization: each row of `U` (and column of `V`)
//!   is the solution of a small reweighted least-squares problem.
//! * [`hqasd`] — alternating steepest descent with exact line search and
//!   Gram-scaled directions; one gradient step per factor per iteration.
//!
//! Both start from an l2 warm-up phase and then switch to the robust loss
//! with an interquartile-range driven kernel width. The plain l2 variants
//! (`PF`, `ASD`, `ScaledASD`) are available as baselines.
//!
//! All numeric code is generic over the scalar type via [`Scalar`];
//! `f64` aliases for the main types live at the crate root.

use std::fmt;
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, NumAssign};

pub mod correntropy;
pub mod error;
pub mod hqasd;
pub mod hqpf;
pub mod linalg;
pub mod lowrank;
pub mod metrics;
pub mod model;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    ConvergenceTrace, FactorPair, ObservedMatrix, Phase, SolverConfig, StopReason, Variant,
};
pub use solver::solve;

/// Floating-point scalar usable by every numeric routine in this crate.
pub trait Scalar:
    Float
    + NumAssign
    + Sum<Self>
    + for<'a> Sum<&'a Self>
    + LinalgScalar
    + ScalarOperand
    + Send
    + Sync
    + fmt::Debug
    + fmt::Display
{
    /// Lossless-enough conversion from `f64` for constants and counts.
    fn from_f64(x: f64) -> Self {
        Self::from(x).expect("f64 constant representable in scalar type")
    }

    /// Conversion from a count; exact for the sizes this crate handles.
    fn from_usize(x: usize) -> Self {
        Self::from(x).expect("usize representable in scalar type")
    }
}

impl<T> Scalar for T where
    T: Float
        + NumAssign
        + Sum<Self>
        + for<'a> Sum<&'a Self>
        + LinalgScalar
        + ScalarOperand
        + Send
        + Sync
        + fmt::Debug
        + fmt::Display
{
}

/// `f64` aliases for the main library types.
pub type ObservedMatrix64 = model::ObservedMatrix<f64>;
pub type FactorPair64 = model::FactorPair<f64>;
pub type SolverConfig64 = model::SolverConfig<f64>;
pub type ConvergenceTrace64 = model::ConvergenceTrace<f64>;
pub type KernelSchedule64 = correntropy::KernelSchedule<f64>;
