//! The two-model sinh-arcsinh benchmark target with known exact transports.
//!
//! Model 0 (weight 1/4) is one-dimensional with skew -2 and unit tail
//! weight; model 1 (weight 3/4) is two-dimensional with skew (1.5, -2),
//! tail weight (1, 1.5), and scale L with L L^T = [[1, 0.99], [0.99, 1]].
//! Both conditional densities have the closed form
//! `phi_{LL^T}(Sinv(theta)) |J_{Sinv}(theta)|`, so the exact transport to a
//! standard normal reference is `L^{-1} Sinv(theta)`.

use super::{TransPoint, TransdimensionalTarget};
use crate::linalg::{mvn_log_density, Matrix};
use crate::transport::{sas, sas_inv, sas_inv_log_deriv, TransportMap};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

pub struct SasTarget {
    weights: [f64; 2],
    skew: [Vec<f64>; 2],
    tail: [Vec<f64>; 2],
    chol: [Matrix; 2],
}

impl Default for SasTarget {
    fn default() -> Self {
        Self::new()
    }
}

impl SasTarget {
    pub fn new() -> Self {
        let chol1 = Matrix::identity(1);
        let chol2 = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.99, (1.0_f64 - 0.99 * 0.99).sqrt()],
        ]);
        SasTarget {
            weights: [0.25, 0.75],
            skew: [vec![-2.0], vec![1.5, -2.0]],
            tail: [vec![1.0], vec![1.0, 1.5]],
            chol: [chol1, chol2],
        }
    }

    /// The exact target-to-reference transport maps, one per model.
    pub fn exact_maps(&self) -> Vec<TransportMap> {
        (0..2)
            .map(|k| {
                TransportMap::exact_sas(
                    self.skew[k].clone(),
                    self.tail[k].clone(),
                    self.chol[k].clone(),
                )
                .expect("valid sinh-arcsinh parameters")
            })
            .collect()
    }

    /// Conditional log-density of model `k` (no mixture weight).
    pub fn conditional_log_density(&self, k: usize, theta: &[f64]) -> f64 {
        let n = theta.len();
        let mut y = vec![0.0; n];
        let mut jac = 0.0;
        for i in 0..n {
            y[i] = sas_inv(theta[i], self.skew[k][i], self.tail[k][i]);
            jac += sas_inv_log_deriv(theta[i], self.skew[k][i], self.tail[k][i]);
        }
        mvn_log_density(&y, &vec![0.0; n], &self.chol[k]) + jac
    }
}

impl TransdimensionalTarget for SasTarget {
    fn model_count(&self) -> usize {
        2
    }

    fn dim(&self, k: usize) -> usize {
        k + 1
    }

    fn log_density(&self, point: &TransPoint) -> f64 {
        assert_eq!(point.theta.len(), self.dim(point.k));
        self.weights[point.k].ln() + self.conditional_log_density(point.k, &point.theta)
    }

    fn true_marginals(&self) -> Option<Vec<f64>> {
        Some(self.weights.to_vec())
    }

    fn sample_conditional_exact(&self, k: usize, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let n = self.dim(k);
        let z: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let y = self.chol[k].matvec(&z);
        Some((0..n).map(|i| sas(y[i], self.skew[k][i], self.tail[k][i])).collect())
    }

    fn initial_point(&self, k: usize) -> TransPoint {
        // The conditional medians: S(0) per coordinate.
        let theta =
            (0..self.dim(k)).map(|i| sas(0.0, self.skew[k][i], self.tail[k][i])).collect();
        TransPoint::new(k, theta)
    }
}
