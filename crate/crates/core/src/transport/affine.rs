//! Affine whitening transport maps.

use crate::error::{Result, TrjError};
use crate::linalg::{column_means, sample_covariance, Matrix};
use serde::{Deserialize, Serialize};

/// Affine map `theta -> L^{-1}(theta - a)` in the target-to-reference
/// direction, with `a` a center vector and `L` lower-triangular with
/// positive diagonal (typically the Cholesky factor of a covariance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub n: usize,
    pub center: Vec<f64>,
    pub chol: Matrix,
}

impl AffineMap {
    pub fn new(center: Vec<f64>, chol: Matrix) -> Result<Self> {
        let n = center.len();
        if chol.rows != n || chol.cols != n {
            return Err(TrjError::DimensionMismatch { expected: n, got: chol.rows });
        }
        for i in 0..n {
            if !(chol[(i, i)] > 0.0) {
                return Err(TrjError::InvalidParameter(format!(
                    "scale diagonal L[{i},{i}] = {} must be positive",
                    chol[(i, i)]
                )));
            }
        }
        Ok(AffineMap { n, center, chol })
    }

    /// Whitening map fitted to the first two sample moments: `a` is the
    /// sample mean and `L` the lower Cholesky factor of the unbiased sample
    /// covariance.
    pub fn fit(samples: &Matrix) -> Result<Self> {
        let n = samples.cols;
        if samples.rows < n + 1 {
            return Err(TrjError::InvalidParameter(format!(
                "need at least {} samples to whiten dimension {n}, got {}",
                n + 1,
                samples.rows
            )));
        }
        let center = column_means(samples);
        let cov = sample_covariance(samples);
        let chol = cov.cholesky_lower()?;
        AffineMap::new(center, chol)
    }

    pub fn forward(&self, theta: &[f64]) -> Result<(Vec<f64>, f64)> {
        let diff: Vec<f64> = theta.iter().zip(&self.center).map(|(t, a)| t - a).collect();
        let z = self.chol.solve_lower(&diff);
        Ok((z, -self.chol.log_diag_sum()))
    }

    pub fn inverse(&self, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        let y = self.chol.matvec(z);
        let theta: Vec<f64> = y.iter().zip(&self.center).map(|(v, a)| v + a).collect();
        Ok((theta, self.chol.log_diag_sum()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn two_point_fit_by_hand() {
        // Samples {0, 2}: a = 1, unbiased variance 2, L = sqrt(2), so
        // forward(3) = (3 - 1)/sqrt(2) = sqrt(2).
        let samples = Matrix::from_rows(&[vec![0.0], vec![2.0]]);
        let map = AffineMap::fit(&samples).unwrap();
        assert_relative_eq!(map.center[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(map.chol[(0, 0)], 2.0_f64.sqrt(), epsilon = 1e-15);
        let (z, ld) = map.forward(&[3.0]).unwrap();
        assert_relative_eq!(z[0], 2.0_f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(ld, -0.5 * 2.0_f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn scalar_inverse_example() {
        // a = 0, L = 2: inverse takes z = 1 to theta = 2 with logdet log 2.
        let map = AffineMap::new(vec![0.0], Matrix::from_rows(&[vec![2.0]])).unwrap();
        let (theta, ld) = map.inverse(&[1.0]).unwrap();
        assert_eq!(theta, vec![2.0]);
        assert_relative_eq!(ld, 2.0_f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn whitening_white_data_is_near_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..100_000)
            .map(|_| (0..2).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let samples = Matrix::from_rows(&rows);
        let map = AffineMap::fit(&samples).unwrap();
        for a in &map.center {
            assert!(a.abs() < 0.02, "center {a}");
        }
        for i in 0..2 {
            for j in 0..2 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((map.chol[(i, j)] - expect).abs() < 0.02);
            }
        }
    }

    #[test]
    fn whitened_training_samples_have_exact_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..500)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                let c: f64 = StandardNormal.sample(&mut rng);
                vec![2.0 * a + 1.0, a + 0.5 * b - 3.0, b - a + 0.7 * c]
            })
            .collect();
        let samples = Matrix::from_rows(&rows);
        let map = AffineMap::fit(&samples).unwrap();
        let pushed: Vec<Vec<f64>> = rows.iter().map(|r| map.forward(r).unwrap().0).collect();
        let pushed = Matrix::from_rows(&pushed);
        for m in column_means(&pushed) {
            assert!(m.abs() < 1e-10, "pushed mean {m}");
        }
        let cov = sample_covariance(&pushed);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((cov[(i, j)] - expect).abs() < 1e-8, "cov[{i}{j}] = {}", cov[(i, j)]);
            }
        }
    }

    #[test]
    fn degenerate_covariance_names_pivot() {
        // Second coordinate is a copy of the first: singular covariance.
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let samples = Matrix::from_rows(&rows);
        match AffineMap::fit(&samples) {
            Err(TrjError::NotPositiveDefinite { pivot, .. }) => assert_eq!(pivot, 1),
            other => panic!("expected NotPositiveDefinite, got {other:?}"),
        }
    }

    #[test]
    fn too_few_samples_rejected() {
        let samples = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(AffineMap::fit(&samples).is_err());
    }
}
