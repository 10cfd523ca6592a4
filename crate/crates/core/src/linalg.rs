//! Small dense helpers around a pivot-reporting Cholesky factorization.
//!
//! nalgebra's own `Cholesky` only reports success or failure; the sampler
//! needs the offending leading minor and the smallest pivot for its
//! positive-definiteness bookkeeping.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: DMatrix<f64>,
    min_pivot: f64,
}

impl CholeskyFactor {
    /// Factorizes a symmetric matrix, reading only its lower triangle.
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "cholesky of non-square {}x{} matrix",
                n,
                a.ncols()
            )));
        }
        let mut l = DMatrix::<f64>::zeros(n, n);
        let mut min_pivot = f64::INFINITY;
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !d.is_finite() || d <= 0.0 {
                return Err(Error::NotPositiveDefinite { minor: j, pivot: d });
            }
            min_pivot = min_pivot.min(d);
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self {
            lower: l,
            min_pivot,
        })
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Smallest squared diagonal entry of `L`, i.e. the smallest pivot.
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Solves `L y = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut DVector<f64>) {
        let l = &self.lower;
        let n = self.dim();
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[(i, k)] * b[k];
            }
            b[i] = s / l[(i, i)];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn solve_upper_in_place(&self, y: &mut DVector<f64>) {
        let l = &self.lower;
        let n = self.dim();
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = DMatrix::<f64>::zeros(n, n);
        let mut e = DVector::<f64>::zeros(n);
        for j in 0..n {
            e.fill(0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            inv.set_column(j, &col);
        }
        symmetrize(&mut inv);
        inv
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim())
            .map(|i| self.lower[(i, i)].ln())
            .sum::<f64>()
    }
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    let n = m.nrows();
    m.ncols() == n && (0..n).all(|i| (i + 1..n).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}
