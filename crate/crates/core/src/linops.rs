//! Vector/operator abstractions and the dense least-squares kernel.
//!
//! Vectors are plain `nalgebra::DVector<f64>`. Operators implement
//! [`LinearOperator`] and may be matrix-free; the window matrices used by
//! NGMRES are small and dense ([`TallMatrix`]).

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative pivot threshold for [`solve_lsq_min_norm`].
pub fn default_rank_tol() -> f64 {
    f64::EPSILON.sqrt()
}

/// A square real linear operator `x -> A x`.
///
/// Application must be deterministic: the same input produces bit-identical
/// output.
pub trait LinearOperator: Debug + Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `A x` into `y`. Callers guarantee `x.len() == y.len() == dim()`.
    fn apply_into(&self, x: &DVector<f64>, y: &mut DVector<f64>);

    /// Writes `Aᵀ x` into `y`, when the operator supports it.
    fn apply_transpose_into(&self, _x: &DVector<f64>, _y: &mut DVector<f64>) -> Result<()> {
        Err(Error::InvalidArgument(
            "operator does not support transpose application".into(),
        ))
    }

    /// Row-major list of stored nonzeros, if the operator has explicit storage.
    fn triplets(&self) -> Option<Vec<(usize, usize, f64)>> {
        None
    }

    /// Dense materialization, if available.
    fn to_dense(&self) -> Option<DMatrix<f64>> {
        let n = self.dim();
        let trips = self.triplets()?;
        let mut m = DMatrix::zeros(n, n);
        for (i, j, v) in trips {
            m[(i, j)] += v;
        }
        Some(m)
    }
}

/// Checked application `A v`.
pub fn apply(op: &dyn LinearOperator, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != op.dim() {
        return Err(Error::DimensionMismatch {
            expected: op.dim(),
            actual: v.len(),
        });
    }
    let mut y = DVector::zeros(op.dim());
    op.apply_into(v, &mut y);
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentityOperator {
    n: usize,
}

impl IdentityOperator {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

impl LinearOperator for IdentityOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_into(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        y.copy_from(x);
    }

    fn apply_transpose_into(&self, x: &DVector<f64>, y: &mut DVector<f64>) -> Result<()> {
        y.copy_from(x);
        Ok(())
    }

    fn triplets(&self) -> Option<Vec<(usize, usize, f64)>> {
        Some((0..self.n).map(|i| (i, i, 1.0)).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    matrix: DMatrix<f64>,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense operator"));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply_into(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        self.matrix.mul_to(x, y);
    }

    fn apply_transpose_into(&self, x: &DVector<f64>, y: &mut DVector<f64>) -> Result<()> {
        self.matrix.tr_mul_to(x, y);
        Ok(())
    }

    fn triplets(&self) -> Option<Vec<(usize, usize, f64)>> {
        let n = self.dim();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = self.matrix[(i, j)];
                if v != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        Some(out)
    }

    fn to_dense(&self) -> Option<DMatrix<f64>> {
        Some(self.matrix.clone())
    }
}

/// Compressed sparse row matrix (square).
#[derive(Debug, Clone, PartialEq)]
pub struct CsrOperator {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrOperator {
    /// Builds from unordered `(row, col, value)` triplets; duplicates are summed
    /// and explicit zeros dropped.
    pub fn from_triplets(n: usize, mut trips: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(i, j, v) in &trips {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!(
                    "entry ({i}, {j}) outside a {n}x{n} matrix"
                )));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("sparse operator"));
            }
        }
        trips.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(trips.len());
        let mut values: Vec<f64> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        let mut rows = Vec::with_capacity(trips.len());
        for (i, j, v) in trips {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                rows.push(i);
                last = Some((i, j));
            }
        }
        // drop entries that summed to zero
        let mut keep_cols = Vec::with_capacity(col_idx.len());
        let mut keep_vals = Vec::with_capacity(values.len());
        for ((i, j), v) in rows.into_iter().zip(col_idx).zip(values) {
            if v != 0.0 {
                row_ptr[i + 1] += 1;
                keep_cols.push(j);
                keep_vals.push(v);
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n,
            row_ptr,
            col_idx: keep_cols,
            values: keep_vals,
        })
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }
}

impl LinearOperator for CsrOperator {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_into(&self, x: &DVector<f64>, y: &mut DVector<f64>) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    fn apply_transpose_into(&self, x: &DVector<f64>, y: &mut DVector<f64>) -> Result<()> {
        y.fill(0.0);
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k]] += self.values[k] * x[i];
            }
        }
        Ok(())
    }

    fn triplets(&self) -> Option<Vec<(usize, usize, f64)>> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            out.extend(self.row(i).map(|(j, v)| (i, j, v)));
        }
        Some(out)
    }
}

/// Overflow-safe Euclidean norm.
pub fn two_norm(v: &DVector<f64>) -> f64 {
    two_norm_slice(v.as_slice())
}

pub(crate) fn two_norm_slice(v: &[f64]) -> f64 {
    let mut scale = 0.0f64;
    let mut ssq = 1.0f64;
    for &x in v {
        if x != 0.0 {
            let ax = x.abs();
            if scale < ax {
                ssq = 1.0 + ssq * (scale / ax) * (scale / ax);
                scale = ax;
            } else {
                ssq += (ax / scale) * (ax / scale);
            }
        }
    }
    if scale == 0.0 || scale.is_nan() {
        scale
    } else {
        scale * ssq.sqrt()
    }
}

/// `n x w` dense matrix with `w >= 1` finite columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TallMatrix {
    data: DMatrix<f64>,
}

impl TallMatrix {
    pub fn from_matrix(data: DMatrix<f64>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(Error::InvalidArgument("matrix needs at least one column".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tall matrix"));
        }
        Ok(Self { data })
    }

    pub fn from_columns(cols: &[DVector<f64>]) -> Result<Self> {
        let Some(first) = cols.first() else {
            return Err(Error::InvalidArgument("matrix needs at least one column".into()));
        };
        if let Some(bad) = cols.iter().find(|c| c.len() != first.len()) {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                actual: bad.len(),
            });
        }
        Self::from_matrix(DMatrix::from_columns(cols))
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsqSolution {
    pub coefficients: DVector<f64>,
    pub effective_rank: usize,
    pub residual_norm: f64,
}

/// Solves `min_c ‖rhs + D c‖₂` by Householder QR with column pivoting.
///
/// Columns are equilibrated to unit norm before factorization. A column whose
/// remaining pivot falls below `rank_tol` times the leading pivot is truncated
/// and its coefficient is zero. An all-zero `D` yields zero coefficients and
/// `effective_rank == 0`.
pub fn solve_lsq_min_norm(d: &TallMatrix, rhs: &DVector<f64>, rank_tol: f64) -> Result<LsqSolution> {
    let (n, w) = d.data.shape();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: rhs.len(),
        });
    }
    if !(rank_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rank_tol must be positive, got {rank_tol}"
        )));
    }

    let mut a = d.data.clone();
    let mut y = rhs.clone();
    let mut scale = vec![0.0; w];
    for (j, s) in scale.iter_mut().enumerate() {
        *s = two_norm_slice(a.column(j).as_slice());
        if *s > 0.0 {
            let inv = 1.0 / *s;
            a.column_mut(j).scale_mut(inv);
        }
    }

    let mut perm: Vec<usize> = (0..w).collect();
    let mut rank = 0;
    let mut lead = 0.0;
    for j in 0..n.min(w) {
        let (p, pivot) = (j..w)
            .map(|c| (c, two_norm_slice(&a.column(c).as_slice()[j..])))
            .fold((j, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if j == 0 {
            lead = pivot;
        }
        if pivot <= 0.0 || pivot <= rank_tol * lead {
            break;
        }
        if p != j {
            a.swap_columns(j, p);
            perm.swap(j, p);
        }
        householder_column(&mut a, &mut y, j, pivot);
        rank += 1;
    }

    // back substitution on the leading rank x rank triangle: R z = -(Qᵀ rhs)
    let mut z = vec![0.0; rank];
    for i in (0..rank).rev() {
        let mut acc = -y[i];
        for (k, zk) in z.iter().enumerate().skip(i + 1) {
            acc -= a[(i, k)] * zk;
        }
        z[i] = acc / a[(i, i)];
    }
    let mut coefficients = DVector::zeros(w);
    for (i, zi) in z.into_iter().enumerate() {
        let col = perm[i];
        coefficients[col] = zi / scale[col];
    }
    let residual_norm = two_norm_slice(&y.as_slice()[rank..]);
    Ok(LsqSolution {
        coefficients,
        effective_rank: rank,
        residual_norm,
    })
}

/// Applies the Householder reflector zeroing `a[j+1.., j]` to the trailing
/// columns of `a` and to `y`. `col_norm` is `‖a[j.., j]‖`.
fn householder_column(a: &mut DMatrix<f64>, y: &mut DVector<f64>, j: usize, col_norm: f64) {
    let n = a.nrows();
    let w = a.ncols();
    let x0 = a[(j, j)];
    let alpha = if x0 >= 0.0 { -col_norm } else { col_norm };
    let mut v: Vec<f64> = (j..n).map(|i| a[(i, j)]).collect();
    v[0] -= alpha;
    let vnorm2: f64 = v.iter().map(|x| x * x).sum();
    a[(j, j)] = alpha;
    for i in j + 1..n {
        a[(i, j)] = 0.0;
    }
    if vnorm2 == 0.0 {
        return;
    }
    let tau = 2.0 / vnorm2;
    for c in j + 1..w {
        let mut col = a.column_mut(c);
        let dot: f64 = v.iter().zip(&col.as_slice()[j..]).map(|(p, q)| p * q).sum();
        let f = tau * dot;
        for (x, vi) in col.as_mut_slice()[j..].iter_mut().zip(&v) {
            *x -= f * vi;
        }
    }
    let dot: f64 = v.iter().zip(&y.as_slice()[j..]).map(|(p, q)| p * q).sum();
    let f = tau * dot;
    for (x, vi) in y.as_mut_slice()[j..].iter_mut().zip(&v) {
        *x -= f * vi;
    }
}
