//! Dense two-phase simplex for small standard-form programs
//! `max cᵀx  s.t.  A x = b, x ≥ 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-9;

/// Optimal point and value of a standard-form program.
#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub value: f64,
}

struct Tableau {
    /// `rows` constraint rows followed by one objective row; last column is the rhs.
    t: DMatrix<f64>,
    basis: Vec<usize>,
    rows: usize,
    /// `[A | I | b]` with sign-normalized rows, never pivoted.
    orig: DMatrix<f64>,
    /// Minimization costs of the current phase, one per non-rhs column.
    cost: DVector<f64>,
}

impl Tableau {
    /// Rebuilds the tableau from the original data for the current basis,
    /// discarding rounding accumulated by elimination.
    fn refresh(&mut self) {
        let cols = self.orig.ncols();
        let b = DMatrix::from_fn(self.rows, self.rows, |i, j| self.orig[(i, self.basis[j])]);
        let Some(x) = b.lu().solve(&self.orig) else {
            return;
        };
        let cb = DVector::from_fn(self.rows, |i, _| self.cost[self.basis[i]]);
        for j in 0..cols {
            let z = (0..self.rows).map(|i| cb[i] * x[(i, j)]).sum::<f64>();
            for i in 0..self.rows {
                self.t[(i, j)] = x[(i, j)];
            }
            self.t[(self.rows, j)] = if j + 1 == cols { -z } else { self.cost[j] - z };
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[(row, col)];
        let ncols = self.t.ncols();
        for j in 0..ncols {
            self.t[(row, j)] /= p;
        }
        for i in 0..self.t.nrows() {
            if i == row {
                continue;
            }
            let f = self.t[(i, col)];
            if f != 0.0 {
                for j in 0..ncols {
                    let v = self.t[(row, j)];
                    self.t[(i, j)] -= f * v;
                }
            }
        }
        self.basis[row] = col;
        self.refresh();
    }

    /// Runs Bland-rule iterations on the objective row (stored as reduced
    /// costs of a minimization) restricted to columns `< allowed`.
    fn optimize(&mut self, allowed: usize) -> Result<()> {
        let obj = self.rows;
        let rhs = self.t.ncols() - 1;
        let max_iter = 50 * (self.t.ncols() + self.rows) + 1000;
        for _ in 0..max_iter {
            let Some(col) = (0..allowed).find(|&j| self.t[(obj, j)] < -PIVOT_TOL) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.t[(i, col)];
                if a > PIVOT_TOL {
                    let ratio = self.t[(i, rhs)] / a;
                    let better = match best {
                        None => true,
                        Some((bi, br)) => ratio < br - 1e-14 || (ratio <= br + 1e-14 && self.basis[i] < self.basis[bi]),
                    };
                    if better {
                        best = Some((i, ratio));
                    }
                }
            }
            let Some((row, _)) = best else {
                return Err(Error::LinearProgram("objective is unbounded"));
            };
            self.pivot(row, col);
        }
        Err(Error::LinearProgram("iteration limit reached"))
    }
}

/// Maximizes `cᵀx` subject to `A x = b`, `x ≥ 0`.
pub fn maximize(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> Result<LpSolution> {
    let (rows, n) = a.shape();
    if b.len() != rows {
        return Err(Error::DimensionMismatch {
            expected: rows,
            actual: b.len(),
        });
    }
    if c.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: c.len(),
        });
    }
    if a.iter().chain(b.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("linear program data"));
    }
    // columns: n structural, rows artificial, rhs
    let mut orig = DMatrix::zeros(rows, n + rows + 1);
    for i in 0..rows {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            orig[(i, j)] = sign * a[(i, j)];
        }
        orig[(i, n + i)] = 1.0;
        orig[(i, n + rows)] = sign * b[i];
    }
    // phase one: minimize the sum of artificials
    let cost = DVector::from_fn(n + rows, |j, _| if j < n { 0.0 } else { 1.0 });
    let mut tab = Tableau {
        t: DMatrix::zeros(rows + 1, n + rows + 1),
        basis: (n..n + rows).collect(),
        rows,
        orig,
        cost,
    };
    tab.refresh();
    tab.optimize(n)?;
    let infeasibility = -tab.t[(rows, n + rows)];
    let scale = 1.0 + b.amax();
    if infeasibility > FEAS_TOL * scale {
        return Err(Error::LinearProgram("infeasible"));
    }
    // drive remaining artificials out of the basis where possible
    for i in 0..rows {
        if tab.basis[i] >= n {
            if let Some(col) = (0..n).find(|&j| tab.t[(i, j)].abs() > PIVOT_TOL) {
                tab.pivot(i, col);
            }
        }
    }
    // phase two: minimize −cᵀx
    tab.cost = DVector::from_fn(n + rows, |j, _| if j < n { -c[j] } else { 0.0 });
    tab.refresh();
    tab.optimize(n)?;
    let mut x = DVector::zeros(n);
    for i in 0..rows {
        if tab.basis[i] < n {
            x[tab.basis[i]] = tab.t[(i, n + rows)];
        }
    }
    let value = c.dot(&x);
    Ok(LpSolution { x, value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 (slacks added) → 36 at (2, 6)
        let a = DMatrix::from_row_slice(
            3,
            5,
            &[
                1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 1.0, 0.0, 3.0, 2.0, 0.0, 0.0, 1.0,
            ],
        );
        let b = DVector::from_vec(vec![4.0, 12.0, 18.0]);
        let c = DVector::from_vec(vec![3.0, 5.0, 0.0, 0.0, 0.0]);
        let s = maximize(&a, &b, &c).unwrap();
        assert_relative_eq!(s.value, 36.0, epsilon = 1e-12);
        assert_relative_eq!(s.x[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(s.x[1], 6.0, epsilon = 1e-12);
    }

    #[test]
    fn equality_with_negative_rhs() {
        // x - y = -1, x + y = 3 → x = 1, y = 2; max x
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]);
        let s = maximize(
            &a,
            &DVector::from_vec(vec![-1.0, 3.0]),
            &DVector::from_vec(vec![1.0, 0.0]),
        )
        .unwrap();
        assert_relative_eq!(s.value, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        assert!(maximize(&a, &DVector::from_vec(vec![-1.0]), &DVector::from_vec(vec![1.0, 0.0])).is_err());
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        assert!(maximize(&a, &DVector::from_vec(vec![1.0]), &DVector::from_vec(vec![1.0, 0.0])).is_err());
    }

    #[test]
    fn redundant_rows() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let s = maximize(
            &a,
            &DVector::from_vec(vec![1.0, 2.0]),
            &DVector::from_vec(vec![2.0, 1.0]),
        )
        .unwrap();
        assert_relative_eq!(s.value, 2.0, epsilon = 1e-12);
    }
}
