//! Problem representation shared by every solver: partially observed
//! matrices, rank-r factor pairs, masked residuals and solver configuration.

use std::io::{BufRead, Write};

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::correntropy::KernelSchedule;
use crate::error::{Error, Result};
use crate::Scalar;

/// A partially observed m x n matrix: the support set and the values on it.
///
/// Entries are stored in row-major sorted order so row slices are contiguous;
/// a column-sorted secondary index makes column slices cheap as well. The
/// structure is immutable after construction and safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedMatrix<F> {
    m: usize,
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    values: Vec<F>,
    col_ptr: Vec<usize>,
    col_rows: Vec<u32>,
    col_val_pos: Vec<u32>,
}

impl<F: Scalar> ObservedMatrix<F> {
    /// Builds an observed matrix from `(row, col, value)` triplets.
    ///
    /// Duplicate indices are rejected rather than merged: a repeated entry in
    /// a dataset is almost always a loader bug and silently keeping one value
    /// would hide it.
    pub fn from_triplets(m: usize, n: usize, triplets: &[(usize, usize, F)]) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::DimensionMismatch(format!(
                "matrix dimensions must be positive, got {m}x{n}"
            )));
        }
        if triplets.is_empty() {
            return Err(Error::EmptySupport);
        }
        for &(i, j, _) in triplets {
            if i >= m || j >= n {
                return Err(Error::IndexOutOfRange { i, j, m, n });
            }
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_unstable_by_key(|&k| (triplets[k].0, triplets[k].1));
        for w in order.windows(2) {
            let (a, b) = (triplets[w[0]], triplets[w[1]]);
            if a.0 == b.0 && a.1 == b.1 {
                return Err(Error::DuplicateEntry { i: a.0, j: a.1 });
            }
        }

        let nnz = triplets.len();
        let mut row_ptr = vec![0usize; m + 1];
        let mut cols = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for &k in &order {
            let (i, j, v) = triplets[k];
            row_ptr[i + 1] += 1;
            cols.push(j as u32);
            values.push(v);
        }
        for i in 0..m {
            row_ptr[i + 1] += row_ptr[i];
        }

        // Column-sorted secondary index; positions refer into `values`.
        let mut col_ptr = vec![0usize; n + 1];
        for &j in &cols {
            col_ptr[j as usize + 1] += 1;
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut next = col_ptr.clone();
        let mut col_rows = vec![0u32; nnz];
        let mut col_val_pos = vec![0u32; nnz];
        for i in 0..m {
            for pos in row_ptr[i]..row_ptr[i + 1] {
                let j = cols[pos] as usize;
                col_rows[next[j]] = i as u32;
                col_val_pos[next[j]] = pos as u32;
                next[j] += 1;
            }
        }

        Ok(Self { m, n, row_ptr, cols, values, col_ptr, col_rows, col_val_pos })
    }

    pub fn nrows(&self) -> usize {
        self.m
    }

    pub fn ncols(&self) -> usize {
        self.n
    }

    /// Number of observed entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Observation percentage `|support| / (m n)`.
    pub fn density(&self) -> f64 {
        self.nnz() as f64 / (self.m as f64 * self.n as f64)
    }

    /// Observed column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[F]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[span.clone()], &self.values[span])
    }

    /// Observed `(row, value)` pairs of column `j`, in increasing row order.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, F)> + '_ {
        let span = self.col_ptr[j]..self.col_ptr[j + 1];
        self.col_rows[span.clone()]
            .iter()
            .zip(&self.col_val_pos[span])
            .map(|(&i, &pos)| (i as usize, self.values[pos as usize]))
    }

    /// Number of observed entries in column `j`.
    pub fn column_nnz(&self, j: usize) -> usize {
        self.col_ptr[j + 1] - self.col_ptr[j]
    }

    /// All observed entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, F)> + '_ {
        (0..self.m).flat_map(move |i| {
            let span = self.row_ptr[i]..self.row_ptr[i + 1];
            self.cols[span.clone()]
                .iter()
                .zip(&self.values[span])
                .map(move |(&j, &v)| (i, j as usize, v))
        })
    }

    /// Values on the support in row-major order.
    pub fn values(&self) -> &[F] {
        &self.values
    }

    /// Position of `(i, j)` in the row-major support order, if observed.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.m || j >= self.n {
            return None;
        }
        let span = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        span.binary_search(&(j as u32))
            .ok()
            .map(|k| self.row_ptr[i] + k)
    }

    pub fn get(&self, i: usize, j: usize) -> Option<F> {
        self.position(i, j).map(|pos| self.values[pos])
    }

    /// Largest absolute observed value.
    pub fn max_abs_value(&self) -> F {
        self.values
            .iter()
            .fold(F::zero(), |acc, &v| if v.abs() > acc { v.abs() } else { acc })
    }

    /// Exports the support as `(row, col, value)` triplets in row-major order.
    pub fn to_triplets(&self) -> Vec<(usize, usize, F)> {
        self.entries().collect()
    }

    /// Returns a copy with the same support but new values, given in
    /// row-major support order.
    pub(crate) fn with_values(&self, values: Vec<F>) -> Self {
        assert_eq!(values.len(), self.nnz());
        let mut out = self.clone();
        out.values = values;
        out
    }

    /// Fails unless every row and every column contains an observation.
    pub fn check_identifiable(&self) -> Result<()> {
        for i in 0..self.m {
            if self.row_ptr[i + 1] == self.row_ptr[i] {
                return Err(Error::UnidentifiableRow(i));
            }
        }
        for j in 0..self.n {
            if self.col_ptr[j + 1] == self.col_ptr[j] {
                return Err(Error::UnidentifiableColumn(j));
            }
        }
        Ok(())
    }

    /// Reads triplets from tab-separated `i<TAB>j<TAB>value` lines.
    pub fn read_triplets<R: BufRead>(reader: R) -> Result<Vec<(usize, usize, F)>> {
        let mut out = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse { line: lineno + 1, msg: e.to_string() })?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let mut fields = trimmed.split('\t');
            let mut field = |what: &str| {
                fields.next().ok_or_else(|| Error::Parse {
                    line: lineno + 1,
                    msg: format!("missing {what} field"),
                })
            };
            let i: usize = field("row")?
                .parse()
                .map_err(|e| Error::Parse { line: lineno + 1, msg: format!("row index: {e}") })?;
            let j: usize = field("col")?
                .parse()
                .map_err(|e| Error::Parse { line: lineno + 1, msg: format!("col index: {e}") })?;
            let v: f64 = field("value")?
                .parse()
                .map_err(|e| Error::Parse { line: lineno + 1, msg: format!("value: {e}") })?;
            out.push((i, j, F::from_f64(v)));
        }
        Ok(out)
    }

    /// Writes the support as tab-separated triplet lines.
    pub fn write_triplets<W: Write>(&self, mut writer: W) -> std::io::Result<()> {
        for (i, j, v) in self.entries() {
            writeln!(writer, "{i}\t{j}\t{v}")?;
        }
        Ok(())
    }
}

/// Rank-r factorization `M = U V` with `U` m x r and `V` r x n.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair<F> {
    u: Array2<F>,
    v: Array2<F>,
}

impl<F: Scalar> FactorPair<F> {
    pub fn new(u: Array2<F>, v: Array2<F>) -> Result<Self> {
        let (m, ru) = u.dim();
        let (rv, n) = v.dim();
        if ru != rv {
            return Err(Error::DimensionMismatch(format!(
                "U is {m}x{ru} but V is {rv}x{n}"
            )));
        }
        if ru == 0 || ru > m.min(n) {
            return Err(Error::BadRank { r: ru, m, n });
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteFactor);
        }
        Ok(Self { u, v })
    }

    /// Random factors with i.i.d. normal entries scaled so that the product
    /// roughly matches the magnitude of the observed data.
    pub fn random<R: Rng>(m: usize, n: usize, r: usize, scale: F, rng: &mut R) -> Self
    where
        StandardNormal: Distribution<F>,
    {
        let u = Array2::from_shape_simple_fn((m, r), || {
            let z: F = StandardNormal.sample(rng);
            z * scale
        });
        let v = Array2::from_shape_simple_fn((r, n), || {
            let z: F = StandardNormal.sample(rng);
            z * scale
        });
        Self { u, v }
    }

    pub fn u(&self) -> &Array2<F> {
        &self.u
    }

    pub fn v(&self) -> &Array2<F> {
        &self.v
    }

    pub(crate) fn u_mut(&mut self) -> &mut Array2<F> {
        &mut self.u
    }

    pub(crate) fn v_mut(&mut self) -> &mut Array2<F> {
        &mut self.v
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.u.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.v.ncols()
    }

    /// Entry `(U V)_{ij}` without forming the dense product.
    #[inline]
    pub fn product_at(&self, i: usize, j: usize) -> F {
        self.u
            .row(i)
            .iter()
            .zip(self.v.column(j))
            .map(|(&a, &b)| a * b)
            .sum()
    }

    /// Dense recovered matrix `U V`.
    pub fn product(&self) -> Array2<F> {
        self.u.dot(&self.v)
    }
}

/// Residual `X - U V` restricted to the support of `obs`, in row-major
/// support order. Off-support entries of `X` are unknown and never enter.
pub fn masked_residual<F: Scalar>(obs: &ObservedMatrix<F>, f: &FactorPair<F>) -> Result<Vec<F>> {
    if f.nrows() != obs.nrows() || f.ncols() != obs.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "factors give a {}x{} product but observations are {}x{}",
            f.nrows(),
            f.ncols(),
            obs.nrows(),
            obs.ncols()
        )));
    }
    let mut out = Vec::with_capacity(obs.nnz());
    for i in 0..obs.nrows() {
        let (cols, vals) = obs.row(i);
        let u_row = f.u().row(i);
        for (&j, &x) in cols.iter().zip(vals) {
            let pred: F = u_row
                .iter()
                .zip(f.v().column(j as usize))
                .map(|(&a, &b)| a * b)
                .sum();
            out.push(x - pred);
        }
    }
    Ok(out)
}

/// Frobenius norm of a masked residual: sqrt of the sum of squared entries.
pub fn residual_fro_norm<F: Scalar>(residual: &[F]) -> F {
    residual.iter().map(|&e| e * e).sum::<F>().sqrt()
}

/// Solver selector: the two robust solvers and their l2 baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// PowerFactorization: alternating unweighted least squares.
    Pf,
    /// Robust alternating minimization with correntropy reweighting.
    HqPf,
    /// Alternating steepest descent, plain gradient directions.
    Asd,
    /// Alternating steepest descent with Gram-scaled directions.
    ScaledAsd,
    /// Robust alternating steepest descent (scaled directions).
    HqAsd,
}

impl Variant {
    pub fn is_robust(self) -> bool {
        matches!(self, Variant::HqPf | Variant::HqAsd)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Pf => "pf",
            Variant::HqPf => "hqpf",
            Variant::Asd => "asd",
            Variant::ScaledAsd => "scaled-asd",
            Variant::HqAsd => "hqasd",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pf" => Ok(Variant::Pf),
            "hqpf" | "hq-pf" => Ok(Variant::HqPf),
            "asd" => Ok(Variant::Asd),
            "scaled-asd" | "scaledasd" => Ok(Variant::ScaledAsd),
            "hqasd" | "hq-asd" => Ok(Variant::HqAsd),
            other => Err(Error::InvalidConfig(format!("unknown solver variant `{other}`"))),
        }
    }
}

/// Everything a solver run needs besides the data: variant, stopping
/// thresholds, iteration caps, ridge, seed and the kernel-width schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<F> {
    pub variant: Variant,
    /// Threshold on |change of ||E||_F| that ends the l2 warm-up phase.
    pub eps_switch: F,
    /// Threshold on |change of ||E||_F| that terminates the solver.
    pub eps_stop: F,
    /// Inner-iteration threshold on ||u_k - u_{k-1}||^2 (HQ-PF only).
    pub eps_inner: F,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Trace-scaled ridge for (near-)singular normal and Gram matrices.
    pub ridge: F,
    pub seed: u64,
    pub kernel: KernelSchedule<F>,
    /// Worker threads for the independent row/column subproblems of HQ-PF.
    pub workers: usize,
}

impl<F: Scalar> SolverConfig<F> {
    /// Defaults per variant. Stop thresholds follow the convention of using
    /// a looser threshold for alternating minimization (1e-3) than for
    /// gradient descent (1e-7), with warm-up switches at 1e-2 and 1e-4.
    pub fn new(variant: Variant) -> Self {
        let (eps_switch, eps_stop) = match variant {
            Variant::Pf | Variant::HqPf => (F::from_f64(1e-2), F::from_f64(1e-3)),
            Variant::Asd | Variant::ScaledAsd | Variant::HqAsd => {
                (F::from_f64(1e-4), F::from_f64(1e-7))
            }
        };
        Self {
            variant,
            eps_switch,
            eps_stop,
            eps_inner: F::from_f64(1e-8),
            max_outer: 1000,
            max_inner: 50,
            ridge: F::from_f64(1e-12),
            seed: 0,
            kernel: KernelSchedule::default(),
            workers: 1,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_stop > F::zero()) {
            return Err(Error::InvalidConfig("eps_stop must be positive".into()));
        }
        if self.variant.is_robust() && self.eps_stop > self.eps_switch {
            return Err(Error::InvalidConfig(
                "eps_stop must not exceed eps_switch: the phase switch must fire before termination"
                    .into(),
            ));
        }
        if !(self.eps_inner > F::zero()) {
            return Err(Error::InvalidConfig("eps_inner must be positive".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::InvalidConfig("iteration caps must be at least 1".into()));
        }
        if self.ridge < F::zero() {
            return Err(Error::InvalidConfig("ridge must be nonnegative".into()));
        }
        self.kernel.validate()
    }
}

/// Which loss drove an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    L2Warmup,
    Correntropy,
}

/// Why a solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// The residual-norm change dropped below the stop threshold.
    Converged,
    /// The iteration cap was reached; the last iterate is returned.
    MaxIterations,
    /// A zero-curvature direction was met; the observable part is fitted.
    Stalled,
}

/// One outer-iteration record.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord<F> {
    pub iter: usize,
    /// Kernel width that produced this iterate (warm width during warm-up).
    pub sigma: F,
    /// Correntropy objective of the iterate at `sigma`.
    pub objective: F,
    /// Frobenius norm of the masked residual.
    pub residual_norm: F,
    pub phase: Phase,
    /// Seconds since the solve started.
    pub elapsed: f64,
}

/// Per-iteration history of a solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace<F> {
    records: Vec<TraceRecord<F>>,
    stop: StopReason,
}

impl<F: Scalar> ConvergenceTrace<F> {
    pub(crate) fn new() -> Self {
        Self { records: Vec::new(), stop: StopReason::MaxIterations }
    }

    pub(crate) fn push(&mut self, record: TraceRecord<F>) {
        debug_assert!(self.records.last().map_or(record.iter == 0, |r| record.iter > r.iter));
        self.records.push(record);
    }

    pub(crate) fn finish(&mut self, stop: StopReason) {
        self.stop = stop;
    }

    pub fn records(&self) -> &[TraceRecord<F>] {
        &self.records
    }

    pub fn stop(&self) -> StopReason {
        self.stop
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last(&self) -> Option<&TraceRecord<F>> {
        self.records.last()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn obs_2x2_single() -> ObservedMatrix<f64> {
        ObservedMatrix::from_triplets(2, 2, &[(0, 0, 1.0)]).unwrap()
    }

    #[test]
    fn single_entry_construction() {
        let obs = obs_2x2_single();
        assert_eq!(obs.nnz(), 1);
        assert_eq!(obs.get(0, 0), Some(1.0));
        assert_eq!(obs.get(0, 1), None);
    }

    #[test]
    fn duplicate_entry_rejected() {
        let err = ObservedMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0)]).unwrap_err();
        assert_eq!(err, Error::DuplicateEntry { i: 0, j: 0 });
    }

    #[test]
    fn empty_support_rejected() {
        let err = ObservedMatrix::<f64>::from_triplets(2, 2, &[]).unwrap_err();
        assert_eq!(err, Error::EmptySupport);
    }

    #[test]
    fn out_of_range_rejected() {
        let err = ObservedMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).unwrap_err();
        assert!(matches!(err, Error::IndexOutOfRange { i: 2, j: 0, .. }));
    }

    #[test]
    fn movielens_sized_support_has_expected_density() {
        // 100k entries on a 943 x 1682 grid is about 6% observed.
        let m = 943;
        let n = 1682;
        let mut triplets = Vec::with_capacity(100_000);
        let mut k = 0usize;
        'outer: for i in 0..m {
            for j in 0..n {
                if (i * 7 + j * 13) % 16 == 0 {
                    triplets.push((i, j, 3.0));
                    k += 1;
                    if k == 100_000 {
                        break 'outer;
                    }
                }
            }
        }
        let obs = ObservedMatrix::from_triplets(m, n, &triplets).unwrap();
        assert!((obs.density() - 0.063).abs() < 2e-3, "density {}", obs.density());
    }

    #[test]
    fn residual_is_direct_subtraction() {
        let obs = ObservedMatrix::from_triplets(1, 1, &[(0, 0, 3.0)]).unwrap();
        let f = FactorPair::new(array![[1.0]], array![[1.0]]).unwrap();
        let r = masked_residual(&obs, &f).unwrap();
        assert_eq!(r, vec![2.0]);
    }

    #[test]
    fn exact_fit_gives_zero_residual() {
        // X = U V observed everywhere on a 3x3 grid.
        let u: Array2<f64> = array![[1.0, 0.5], [2.0, -1.0], [0.0, 1.0]];
        let v = array![[1.0, 2.0, 0.0], [0.5, 0.0, -1.0]];
        let f = FactorPair::new(u, v).unwrap();
        let x = f.product();
        let triplets: Vec<_> =
            x.indexed_iter().map(|((i, j), &val)| (i, j, val)).collect();
        let obs = ObservedMatrix::from_triplets(3, 3, &triplets).unwrap();
        let r = masked_residual(&obs, &f).unwrap();
        assert!(r.iter().all(|&e| e.abs() < 1e-14));
    }

    #[test]
    fn residual_matches_dense_oracle() {
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let f = FactorPair::<f64>::random(10, 10, 2, 1.0, &mut rng);
        let mut triplets = Vec::new();
        for i in 0..10 {
            for j in 0..10 {
                if (i + 3 * j) % 4 != 0 {
                    triplets.push((i, j, (i as f64) - 0.3 * (j as f64)));
                }
            }
        }
        let obs = ObservedMatrix::from_triplets(10, 10, &triplets).unwrap();
        let r = masked_residual(&obs, &f).unwrap();
        // Dense route: full product, subtract entrywise on the support.
        let dense = f.product();
        for (pos, (i, j, x)) in obs.entries().enumerate() {
            let expect = x - dense[(i, j)];
            assert!((r[pos] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_dimension_mismatch() {
        let obs = obs_2x2_single();
        let f = FactorPair::new(array![[1.0], [1.0], [1.0]], array![[1.0, 1.0, 1.0]]).unwrap();
        assert!(matches!(masked_residual(&obs, &f), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn fro_norm_basics() {
        assert_eq!(residual_fro_norm::<f64>(&[0.0, 0.0]), 0.0);
        assert_eq!(residual_fro_norm::<f64>(&[2.0]), 2.0);
        assert!((residual_fro_norm::<f64>(&[3.0, 4.0]) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn fro_norm_squared_equals_unweighted_objective() {
        // ||residual||^2 equals the sum of squared masked errors.
        use rand::SeedableRng;
        use rand_chacha::ChaCha8Rng;
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = FactorPair::<f64>::random(8, 8, 2, 1.0, &mut rng);
            let triplets: Vec<_> = (0..8)
                .flat_map(|i| (0..8).map(move |j| (i, j, ((i * 8 + j) as f64).sin())))
                .filter(|&(i, j, _)| (i + j) % 3 != 0)
                .collect();
            let obs = ObservedMatrix::from_triplets(8, 8, &triplets).unwrap();
            let r = masked_residual(&obs, &f).unwrap();
            let j2: f64 = obs
                .entries()
                .map(|(i, j, x)| {
                    let e = x - f.product_at(i, j);
                    e * e
                })
                .sum();
            let norm = residual_fro_norm(&r);
            assert!((norm * norm - j2).abs() < 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn triplet_round_trip_preserves_matrix() {
        let triplets = vec![(0, 1, 2.5), (1, 0, -1.0), (2, 3, 0.25)];
        let obs = ObservedMatrix::from_triplets(3, 4, &triplets).unwrap();
        let rebuilt = ObservedMatrix::from_triplets(3, 4, &obs.to_triplets()).unwrap();
        assert_eq!(obs, rebuilt);
    }

    #[test]
    fn tsv_round_trip() {
        let obs = ObservedMatrix::from_triplets(3, 4, &[(0, 1, 2.5), (2, 3, -0.5)]).unwrap();
        let mut buf = Vec::new();
        obs.write_triplets(&mut buf).unwrap();
        let parsed = ObservedMatrix::<f64>::read_triplets(&buf[..]).unwrap();
        let rebuilt = ObservedMatrix::from_triplets(3, 4, &parsed).unwrap();
        assert_eq!(obs, rebuilt);
    }

    #[test]
    fn column_index_agrees_with_rows() {
        let triplets = vec![(0, 1, 1.0), (1, 1, 2.0), (2, 0, 3.0), (1, 3, 4.0)];
        let obs = ObservedMatrix::from_triplets(3, 4, &triplets).unwrap();
        let col1: Vec<_> = obs.column(1).collect();
        assert_eq!(col1, vec![(0, 1.0), (1, 2.0)]);
        assert_eq!(obs.column_nnz(3), 1);
        assert_eq!(obs.column_nnz(2), 0);
    }

    #[test]
    fn identifiability_check() {
        let obs = ObservedMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        assert!(obs.check_identifiable().is_ok());
        let missing_row = ObservedMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 1.0)]).unwrap();
        assert_eq!(missing_row.check_identifiable(), Err(Error::UnidentifiableRow(1)));
        let missing_col = ObservedMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        assert_eq!(missing_col.check_identifiable(), Err(Error::UnidentifiableColumn(1)));
    }

    #[test]
    fn factor_pair_validates_rank_and_finiteness() {
        assert!(matches!(
            FactorPair::new(Array2::<f64>::zeros((2, 3)), Array2::zeros((3, 2))),
            Err(Error::BadRank { r: 3, .. })
        ));
        let mut u = Array2::<f64>::zeros((2, 1));
        u[(0, 0)] = f64::NAN;
        assert!(matches!(
            FactorPair::new(u, Array2::zeros((1, 2))),
            Err(Error::NonFiniteFactor)
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::<f64>::new(Variant::HqPf);
        assert!(cfg.validate().is_ok());
        cfg.eps_switch = 1e-9; // below eps_stop
        assert!(cfg.validate().is_err());
        let mut cfg = SolverConfig::<f64>::new(Variant::Pf);
        cfg.max_outer = 0;
        assert!(cfg.validate().is_err());
    }

    proptest! {
        // Residuals are linear: residual(X + X', f "+" f') on a shared
        // support equals the sum of residuals when the products add.
        #[test]
        fn residual_linear_in_values(vals1 in proptest::collection::vec(-10.0f64..10.0, 6),
                                     vals2 in proptest::collection::vec(-10.0f64..10.0, 6)) {
            let idx = [(0usize, 0usize), (0, 2), (1, 1), (2, 0), (2, 2), (1, 2)];
            let t1: Vec<_> = idx.iter().zip(&vals1).map(|(&(i, j), &v)| (i, j, v)).collect();
            let t2: Vec<_> = idx.iter().zip(&vals2).map(|(&(i, j), &v)| (i, j, v)).collect();
            let tsum: Vec<_> = idx
                .iter()
                .zip(vals1.iter().zip(&vals2))
                .map(|(&(i, j), (&a, &b))| (i, j, a + b))
                .collect();
            let f = FactorPair::new(
                array![[0.5, 1.0], [-1.0, 0.0], [2.0, 0.5]],
                array![[1.0, 0.0, -1.0], [0.5, 2.0, 0.0]],
            ).unwrap();
            let zero = FactorPair::new(Array2::zeros((3, 2)), Array2::zeros((2, 3))).unwrap();
            let o1 = ObservedMatrix::from_triplets(3, 3, &t1).unwrap();
            let o2 = ObservedMatrix::from_triplets(3, 3, &t2).unwrap();
            let osum = ObservedMatrix::from_triplets(3, 3, &tsum).unwrap();
            let r1 = masked_residual(&o1, &f).unwrap();
            let r2 = masked_residual(&o2, &zero).unwrap();
            let rsum = masked_residual(&osum, &f).unwrap();
            for k in 0..idx.len() {
                prop_assert!((r1[k] + r2[k] - rsum[k]).abs() < 1e-10);
            }
        }
    }
}
