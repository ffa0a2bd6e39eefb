//! Conjugate Gaussian two-model toy with closed-form posteriors, marginal
//! likelihoods, and exact whitening transports.
//!
//! Model 0: `y_i = theta_0 + e`; model 1: `y_i = theta_0 + theta_1 x_i + e`
//! with `e ~ N(0, sigma^2)` and independent `N(0, tau^2)` priors on the
//! coefficients. Both conditional posteriors are Gaussian and the marginal
//! likelihoods are Gaussian integrals, so every quantity the samplers and
//! estimators need has an analytic value to test against.

use super::{TransPoint, TransdimensionalTarget};
use crate::linalg::{mvn_log_density, Matrix};
use crate::numeric::log_normal;
use crate::transport::{AffineMap, TransportMap};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

pub struct GaussianToy {
    x: Vec<f64>,
    y: Vec<f64>,
    sigma: f64,
    tau: f64,
    post_mean: [Vec<f64>; 2],
    post_chol: [Matrix; 2],
    marginals: [f64; 2],
    log_evidence: [f64; 2],
}

impl GaussianToy {
    /// Simulate `n` observations from the slope model with coefficients
    /// `(intercept, slope)` and build the target.
    pub fn simulate(n: usize, intercept: f64, slope: f64, sigma: f64, tau: f64, seed: u64) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&xi| intercept + slope * xi + sigma * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self::from_data(x, y, sigma, tau)
    }

    pub fn from_data(x: Vec<f64>, y: Vec<f64>, sigma: f64, tau: f64) -> Self {
        assert_eq!(x.len(), y.len());
        let n = y.len();
        let design = |k: usize| -> Matrix {
            let cols = k + 1;
            let mut m = Matrix::zeros(n, cols);
            for r in 0..n {
                m[(r, 0)] = 1.0;
                if k == 1 {
                    m[(r, 1)] = x[r];
                }
            }
            m
        };
        let mut post_mean: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        let mut post_chol = [Matrix::identity(1), Matrix::identity(2)];
        let mut log_evidence = [0.0; 2];
        for k in 0..2 {
            let xk = design(k);
            let p = k + 1;
            // Posterior precision: X'X / sigma^2 + I / tau^2.
            let mut prec = Matrix::zeros(p, p);
            for i in 0..p {
                for j in 0..p {
                    let mut s = 0.0;
                    for r in 0..n {
                        s += xk[(r, i)] * xk[(r, j)];
                    }
                    prec[(i, j)] = s / (sigma * sigma);
                }
                prec[(i, i)] += 1.0 / (tau * tau);
            }
            let lp = prec.cholesky_lower().expect("posterior precision is PD");
            // Posterior covariance = prec^{-1}, column by column.
            let mut cov = Matrix::zeros(p, p);
            for j in 0..p {
                let mut e = vec![0.0; p];
                e[j] = 1.0;
                let w = lp.solve_lower(&e);
                let col = lp.solve_lower_transpose(&w);
                for i in 0..p {
                    cov[(i, j)] = col[i];
                }
            }
            // Symmetrize roundoff before factoring.
            for i in 0..p {
                for j in 0..i {
                    let avg = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                    cov[(i, j)] = avg;
                    cov[(j, i)] = avg;
                }
            }
            let mut xty = vec![0.0; p];
            for i in 0..p {
                for r in 0..n {
                    xty[i] += xk[(r, i)] * y[r];
                }
                xty[i] /= sigma * sigma;
            }
            let mean = {
                let w = lp.solve_lower(&xty);
                lp.solve_lower_transpose(&w)
            };
            post_mean[k] = mean;
            post_chol[k] = cov.cholesky_lower().expect("posterior covariance is PD");
            // Evidence: y ~ N(0, sigma^2 I + tau^2 X X').
            let mut c = Matrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for q in 0..p {
                        s += xk[(i, q)] * xk[(j, q)];
                    }
                    c[(i, j)] = tau * tau * s;
                }
                c[(i, i)] += sigma * sigma;
            }
            let lc = c.cholesky_lower().expect("evidence covariance is PD");
            log_evidence[k] = mvn_log_density(&y, &vec![0.0; n], &lc);
        }
        // Uniform model prior: pi(k) proportional to the evidence.
        let max = log_evidence[0].max(log_evidence[1]);
        let w0 = (log_evidence[0] - max).exp();
        let w1 = (log_evidence[1] - max).exp();
        let marginals = [w0 / (w0 + w1), w1 / (w0 + w1)];
        GaussianToy { x, y, sigma, tau, post_mean, post_chol, marginals, log_evidence }
    }

    pub fn log_evidence(&self, k: usize) -> f64 {
        self.log_evidence[k]
    }

    pub fn posterior_mean(&self, k: usize) -> &[f64] {
        &self.post_mean[k]
    }

    /// Exact whitening transports: `theta -> L_k^{-1}(theta - mu_k)`.
    pub fn exact_maps(&self) -> Vec<TransportMap> {
        (0..2)
            .map(|k| {
                TransportMap::Affine(
                    AffineMap::new(self.post_mean[k].clone(), self.post_chol[k].clone()).unwrap(),
                )
            })
            .collect()
    }

    /// Exact conditional transports on the saturated 2-d space under a
    /// standard normal reference: model 0 whitens its parameter slot and
    /// passes the auxiliary through, model 1 whitens both coordinates.
    pub fn exact_conditional_maps(&self) -> Vec<TransportMap> {
        let mut maps = Vec::new();
        let mut chol0 = Matrix::identity(2);
        chol0[(0, 0)] = self.post_chol[0][(0, 0)];
        let center0 = vec![self.post_mean[0][0], 0.0];
        maps.push(TransportMap::Affine(AffineMap::new(center0, chol0).unwrap()));
        maps.push(TransportMap::Affine(
            AffineMap::new(self.post_mean[1].clone(), self.post_chol[1].clone()).unwrap(),
        ));
        maps
    }
}

impl TransdimensionalTarget for GaussianToy {
    fn model_count(&self) -> usize {
        2
    }

    fn dim(&self, k: usize) -> usize {
        k + 1
    }

    fn log_density(&self, point: &TransPoint) -> f64 {
        assert_eq!(point.theta.len(), self.dim(point.k));
        // Uniform model prior (1/2 each) times prior times likelihood.
        let mut ld = 0.5_f64.ln();
        for &t in &point.theta {
            ld += log_normal(t, 0.0, self.tau);
        }
        let slope = if point.k == 1 { point.theta[1] } else { 0.0 };
        for (xi, yi) in self.x.iter().zip(&self.y) {
            ld += log_normal(*yi, point.theta[0] + slope * xi, self.sigma);
        }
        ld
    }

    fn true_marginals(&self) -> Option<Vec<f64>> {
        Some(self.marginals.to_vec())
    }

    fn sample_conditional_exact(&self, k: usize, rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        let p = k + 1;
        let z: Vec<f64> = (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let shift = self.post_chol[k].matvec(&z);
        Some(self.post_mean[k].iter().zip(&shift).map(|(m, s)| m + s).collect())
    }

    fn initial_point(&self, k: usize) -> TransPoint {
        TransPoint::new(k, self.post_mean[k].clone())
    }
}
