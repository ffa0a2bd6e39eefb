//! Minimal dense linear algebra: row-major matrices, Cholesky factorization,
//! triangular solves, and sample moments.
//!
//! The dimensions in this crate are tiny (target dimensions of at most a few
//! dozen), so a small hand-rolled kernel keeps the serialized representation
//! exactly the documented row-major flat array.

use crate::error::{Result, TrjError};
use crate::numeric::LN_TWO_PI;
use serde::{Deserialize, Serialize};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major storage, `data[r * cols + c]`.
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Matrix { rows: r, cols: c, data }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    /// self * other.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows);
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// Lower Cholesky factor L with A = L L^T. Fails with the offending
    /// pivot index when A is not positive definite.
    pub fn cholesky_lower(&self) -> Result<Matrix> {
        assert_eq!(self.rows, self.cols, "cholesky needs a square matrix");
        let n = self.rows;
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self[(i, j)];
                for k in 0..j {
                    sum -= l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    // A pivot this far below the diagonal scale is numerically
                    // singular even when roundoff keeps it barely positive.
                    let tol = 1e-12 * self[(i, i)].abs();
                    if sum <= tol || !sum.is_finite() {
                        return Err(TrjError::NotPositiveDefinite { pivot: i, value: sum });
                    }
                    l[(i, i)] = sum.sqrt();
                } else {
                    l[(i, j)] = sum / l[(j, j)];
                }
            }
        }
        Ok(l)
    }

    /// Solve L x = b for lower-triangular L (forward substitution).
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let n = self.rows;
        assert_eq!(b.len(), n);
        let mut x = vec![0.0; n];
        for i in 0..n {
            let mut sum = b[i];
            for j in 0..i {
                sum -= self[(i, j)] * x[j];
            }
            x[i] = sum / self[(i, i)];
        }
        x
    }

    /// Solve L^T x = b for lower-triangular L (back substitution on the
    /// transpose without forming it).
    pub fn solve_lower_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.rows;
        assert_eq!(b.len(), n);
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut sum = b[i];
            for j in (i + 1)..n {
                sum -= self[(j, i)] * x[j];
            }
            x[i] = sum / self[(i, i)];
        }
        x
    }

    /// Sum of log diagonal entries; for a Cholesky factor this is
    /// 0.5 * log det of the factored matrix.
    pub fn log_diag_sum(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)].ln()).sum()
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Column means of a sample matrix (rows = observations).
pub fn column_means(samples: &Matrix) -> Vec<f64> {
    let n = samples.rows as f64;
    let mut m = vec![0.0; samples.cols];
    for r in 0..samples.rows {
        for (mi, v) in m.iter_mut().zip(samples.row(r)) {
            *mi += v;
        }
    }
    for mi in &mut m {
        *mi /= n;
    }
    m
}

/// Unbiased sample covariance of a sample matrix (rows = observations).
pub fn sample_covariance(samples: &Matrix) -> Matrix {
    let n = samples.rows;
    let d = samples.cols;
    assert!(n >= 2, "need at least two samples for a covariance");
    let means = column_means(samples);
    let mut cov = Matrix::zeros(d, d);
    for r in 0..n {
        let row = samples.row(r);
        for i in 0..d {
            let di = row[i] - means[i];
            for j in 0..=i {
                cov[(i, j)] += di * (row[j] - means[j]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in 0..=i {
            cov[(i, j)] /= denom;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    cov
}

/// Log-density of N(mean, L L^T) at x, given the lower Cholesky factor L.
pub fn mvn_log_density(x: &[f64], mean: &[f64], chol: &Matrix) -> f64 {
    let d = x.len();
    let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
    let z = chol.solve_lower(&diff);
    let quad: f64 = z.iter().map(|v| v * v).sum();
    -0.5 * d as f64 * LN_TWO_PI - chol.log_diag_sum() - 0.5 * quad
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cholesky_recovers_known_factor() {
        // A = L L^T with L = [[2,0],[1,3]].
        let a = Matrix::from_rows(&[vec![4.0, 2.0], vec![2.0, 10.0]]);
        let l = a.cholesky_lower().unwrap();
        assert_relative_eq!(l[(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(l[(1, 0)], 1.0, epsilon = 1e-14);
        assert_relative_eq!(l[(1, 1)], 3.0, epsilon = 1e-14);
        assert_eq!(l[(0, 1)], 0.0);
    }

    #[test]
    fn cholesky_reports_offending_pivot() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -2.0]]);
        match a.cholesky_lower() {
            Err(TrjError::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn triangular_solves_invert() {
        let l = Matrix::from_rows(&[vec![2.0, 0.0, 0.0], vec![1.0, 3.0, 0.0], vec![-1.0, 0.5, 1.5]]);
        let x = vec![0.3, -1.0, 2.0];
        let b = l.matvec(&x);
        let x2 = l.solve_lower(&b);
        for (a, b) in x.iter().zip(&x2) {
            assert_relative_eq!(a, b, epsilon = 1e-13);
        }
        let bt = l.transpose().matvec(&x);
        let x3 = l.solve_lower_transpose(&bt);
        for (a, b) in x.iter().zip(&x3) {
            assert_relative_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn mvn_log_density_standard_normal() {
        let chol = Matrix::identity(6);
        let v = mvn_log_density(&[0.0; 6], &[0.0; 6], &chol);
        assert_relative_eq!(v, -3.0 * LN_TWO_PI, epsilon = 1e-12);
    }

    #[test]
    fn sample_moments_two_points() {
        // Samples {0, 2}: mean 1, unbiased variance 2.
        let s = Matrix::from_rows(&[vec![0.0], vec![2.0]]);
        assert_eq!(column_means(&s), vec![1.0]);
        let cov = sample_covariance(&s);
        assert_relative_eq!(cov[(0, 0)], 2.0, epsilon = 1e-14);
    }
}
