//! Bayesian factor analysis posterior over the number of factors.
//!
//! Observations are centered d-variate Gaussians with covariance
//! `beta beta^T + Lambda`, where `beta` is d x k lower-triangular with a
//! positive diagonal and `Lambda` is positive diagonal. Priors: strictly
//! lower-triangular loadings standard normal, diagonal loadings half-normal,
//! idiosyncratic variances inverse gamma (1.1, 0.05), uniform over the
//! candidate factor counts.
//!
//! Parameter layout per model: the loading columns stacked in order (each
//! column's diagonal entry first, then the entries below it), followed by
//! the d diagonal entries of Lambda.

use super::{Dataset, DataSource, TransPoint, TransdimensionalTarget};
use crate::linalg::Matrix;
use crate::numeric::{log_inv_gamma, log_std_normal, LN_TWO_PI};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const LAMBDA_SHAPE: f64 = 1.1;
const LAMBDA_SCALE: f64 = 0.05;

pub struct FaTarget {
    d: usize,
    k_set: Vec<usize>,
    n_obs: usize,
    /// Scatter matrix sum_i y_i y_i^T, cached for the likelihood trace.
    scatter: Matrix,
}

impl FaTarget {
    pub fn new(data: &Dataset, k_set: Vec<usize>) -> Self {
        let d = data.observations.cols;
        assert!(!k_set.is_empty());
        assert!(
            k_set.iter().all(|&k| k >= 1 && k < d),
            "factor counts must lie in 1..d"
        );
        let n = data.observations.rows;
        let mut scatter = Matrix::zeros(d, d);
        for r in 0..n {
            let row = data.observations.row(r);
            for i in 0..d {
                for j in 0..d {
                    scatter[(i, j)] += row[i] * row[j];
                }
            }
        }
        FaTarget { d, k_set, n_obs: n, scatter }
    }

    pub fn data_dim(&self) -> usize {
        self.d
    }

    pub fn factor_count(&self, k: usize) -> usize {
        self.k_set[k]
    }

    /// Number of loading parameters of model index `k`.
    pub fn beta_len(&self, k: usize) -> usize {
        let f = self.k_set[k];
        self.d * f - f * (f - 1) / 2
    }

    /// Unpack the flat parameter vector into (beta, lambda). Returns None
    /// when a constrained coordinate is out of support.
    fn unpack(&self, k: usize, theta: &[f64]) -> Option<(Matrix, Vec<f64>)> {
        let f = self.k_set[k];
        let mut beta = Matrix::zeros(self.d, f);
        let mut idx = 0;
        for j in 0..f {
            for i in j..self.d {
                beta[(i, j)] = theta[idx];
                idx += 1;
            }
            if beta[(j, j)] <= 0.0 {
                return None;
            }
        }
        let lambda = theta[idx..].to_vec();
        if lambda.iter().any(|&v| v <= 0.0) {
            return None;
        }
        Some((beta, lambda))
    }

    fn log_prior(&self, k: usize, beta: &Matrix, lambda: &[f64]) -> f64 {
        let f = self.k_set[k];
        let mut lp = 0.0;
        for j in 0..f {
            // Half-normal diagonal: 2 phi(x) on x > 0.
            lp += std::f64::consts::LN_2 + log_std_normal(beta[(j, j)]);
            for i in (j + 1)..self.d {
                lp += log_std_normal(beta[(i, j)]);
            }
        }
        for &v in lambda {
            lp += log_inv_gamma(v, LAMBDA_SHAPE, LAMBDA_SCALE);
        }
        lp
    }

    fn log_likelihood(&self, beta: &Matrix, lambda: &[f64]) -> f64 {
        // Sigma = beta beta^T + Lambda, likelihood via Cholesky with the
        // cached scatter: -N/2 (d ln 2pi + ln|Sigma|) - tr(Sigma^{-1} S)/2.
        let d = self.d;
        let mut sigma = Matrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for q in 0..beta.cols {
                    s += beta[(i, q)] * beta[(j, q)];
                }
                sigma[(i, j)] = s;
            }
            sigma[(i, i)] += lambda[i];
        }
        let chol = match sigma.cholesky_lower() {
            Ok(c) => c,
            Err(_) => return f64::NEG_INFINITY,
        };
        let mut trace = 0.0;
        for j in 0..d {
            let col: Vec<f64> = (0..d).map(|i| self.scatter[(i, j)]).collect();
            let w = chol.solve_lower(&col);
            let inv_col = chol.solve_lower_transpose(&w);
            trace += inv_col[j];
        }
        let n = self.n_obs as f64;
        -0.5 * n * (d as f64 * LN_TWO_PI) - n * chol.log_diag_sum() - 0.5 * trace
    }
}

impl TransdimensionalTarget for FaTarget {
    fn model_count(&self) -> usize {
        self.k_set.len()
    }

    fn dim(&self, k: usize) -> usize {
        let f = self.k_set[k];
        self.d * (f + 1) - f * (f - 1) / 2
    }

    fn log_density(&self, point: &TransPoint) -> f64 {
        assert_eq!(point.theta.len(), self.dim(point.k));
        let Some((beta, lambda)) = self.unpack(point.k, &point.theta) else {
            return f64::NEG_INFINITY;
        };
        -(self.k_set.len() as f64).ln()
            + self.log_prior(point.k, &beta, &lambda)
            + self.log_likelihood(&beta, &lambda)
    }

    fn model_label(&self, k: usize) -> String {
        format!("{}f", self.k_set[k])
    }

    fn positive_coords(&self, k: usize) -> Vec<bool> {
        let f = self.k_set[k];
        let mut mask = vec![false; self.dim(k)];
        let mut idx = 0;
        for j in 0..f {
            mask[idx] = true; // the diagonal loading leads its column block
            idx += self.d - j;
        }
        for m in mask.iter_mut().skip(self.beta_len(k)) {
            *m = true;
        }
        mask
    }

    fn initial_point(&self, k: usize) -> TransPoint {
        let f = self.k_set[k];
        let mut theta = Vec::with_capacity(self.dim(k));
        for j in 0..f {
            theta.push(0.5); // diagonal loading
            theta.extend(std::iter::repeat_n(0.1, self.d - j - 1));
        }
        theta.extend(std::iter::repeat_n(0.2, self.d));
        TransPoint::new(k, theta)
    }
}

/// Draw N observations from the factor model `N(0, beta beta^T + Lambda)`.
pub fn simulate_fa_data(beta: &Matrix, lambda: &[f64], n: usize, seed: u64) -> Dataset {
    let d = beta.rows;
    assert_eq!(lambda.len(), d);
    assert!(lambda.iter().all(|&v| v > 0.0), "Lambda must be positive");
    for j in 0..beta.cols {
        assert!(beta[(j, j)] > 0.0, "loading diagonal must be positive");
        for i in 0..j {
            assert_eq!(beta[(i, j)], 0.0, "loadings must be lower-triangular");
        }
    }
    let mut sigma = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut s = 0.0;
            for q in 0..beta.cols {
                s += beta[(i, q)] * beta[(j, q)];
            }
            sigma[(i, j)] = s;
        }
        sigma[(i, i)] += lambda[i];
    }
    let chol = sigma.cholesky_lower().expect("simulated covariance is PD");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            chol.matvec(&z)
        })
        .collect();
    Dataset {
        observations: Matrix::from_rows(&rows),
        covariates: None,
        source: DataSource::Synthetic { seed },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn empty_data(d: usize) -> Dataset {
        Dataset {
            observations: Matrix { rows: 0, cols: d, data: vec![] },
            covariates: None,
            source: DataSource::Synthetic { seed: 0 },
        }
    }

    #[test]
    fn dimensions_match_factor_counts() {
        // d=6: 17 parameters for 2 factors, 21 for 3.
        let t = FaTarget::new(&empty_data(6), vec![2, 3]);
        assert_eq!(t.dim(0), 17);
        assert_eq!(t.dim(1), 21);
        assert_eq!(t.beta_len(0), 11);
        assert_eq!(t.beta_len(1), 15);
    }

    #[test]
    fn zero_data_gives_pure_prior() {
        let t = FaTarget::new(&empty_data(2), vec![1]);
        // theta = (b00, b10, l0, l1)
        let theta = vec![0.8, -0.3, 0.4, 0.9];
        let got = t.log_density(&TransPoint::new(0, theta.clone()));
        let expect = 0.0 // ln(1/1) model prior
            + std::f64::consts::LN_2 + log_std_normal(0.8)
            + log_std_normal(-0.3)
            + log_inv_gamma(0.4, 1.1, 0.05)
            + log_inv_gamma(0.9, 1.1, 0.05);
        assert_relative_eq!(got, expect, epsilon = 1e-12);
    }

    #[test]
    fn single_origin_observation_identity_covariance() {
        // One observation at the origin with beta -> 0, Lambda = I gives the
        // likelihood term -d/2 ln(2 pi).
        let data = Dataset {
            observations: Matrix::from_rows(&[vec![0.0; 6]]),
            covariates: None,
            source: DataSource::Synthetic { seed: 0 },
        };
        let t = FaTarget::new(&data, vec![2]);
        let beta = Matrix::zeros(6, 2);
        let lik = t.log_likelihood(&beta, &[1.0; 6]);
        assert_relative_eq!(lik, -3.0 * LN_TWO_PI, epsilon = 1e-12);
    }

    #[test]
    fn out_of_support_is_negative_infinity() {
        let t = FaTarget::new(&empty_data(2), vec![1]);
        // Negative diagonal loading.
        assert_eq!(
            t.log_density(&TransPoint::new(0, vec![-0.1, 0.3, 0.5, 0.5])),
            f64::NEG_INFINITY
        );
        // Negative idiosyncratic variance.
        assert_eq!(
            t.log_density(&TransPoint::new(0, vec![0.1, 0.3, -0.5, 0.5])),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn cholesky_likelihood_matches_direct_inverse() {
        // Random PD covariances at d=6: compare the Cholesky route with an
        // explicit Gauss-Jordan inverse and determinant.
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n_obs = 3;
        let rows: Vec<Vec<f64>> =
            (0..n_obs).map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let data = Dataset {
            observations: Matrix::from_rows(&rows),
            covariates: None,
            source: DataSource::Synthetic { seed: 0 },
        };
        let t = FaTarget::new(&data, vec![2]);
        for _ in 0..10 {
            let mut beta = Matrix::zeros(6, 2);
            for j in 0..2 {
                beta[(j, j)] = rng.random_range(0.2..1.5);
                for i in (j + 1)..6 {
                    beta[(i, j)] = rng.random_range(-1.0..1.0);
                }
            }
            let lambda: Vec<f64> = (0..6).map(|_| rng.random_range(0.2..2.0)).collect();
            let fast = t.log_likelihood(&beta, &lambda);
            // Naive: explicit Sigma, inverse, determinant.
            let mut sigma = [[0.0; 6]; 6];
            for i in 0..6 {
                for j in 0..6 {
                    for q in 0..2 {
                        sigma[i][j] += beta[(i, q)] * beta[(j, q)];
                    }
                }
                sigma[i][i] += lambda[i];
            }
            let (inv, logdet) = invert_6x6(&sigma);
            let mut naive = 0.0;
            for r in 0..n_obs {
                let y = data.observations.row(r);
                let mut quad = 0.0;
                for i in 0..6 {
                    for j in 0..6 {
                        quad += y[i] * inv[i][j] * y[j];
                    }
                }
                naive += -3.0 * LN_TWO_PI - 0.5 * logdet - 0.5 * quad;
            }
            assert!((fast - naive).abs() < 1e-10, "{fast} vs {naive}");
        }
    }

    fn invert_6x6(a: &[[f64; 6]; 6]) -> ([[f64; 6]; 6], f64) {
        let mut aug = [[0.0; 12]; 6];
        for i in 0..6 {
            for j in 0..6 {
                aug[i][j] = a[i][j];
            }
            aug[i][6 + i] = 1.0;
        }
        let mut logdet = 0.0;
        for col in 0..6 {
            let pivot = (col..6).max_by(|&i, &j| {
                aug[i][col].abs().partial_cmp(&aug[j][col].abs()).unwrap()
            }).unwrap();
            aug.swap(col, pivot);
            if pivot != col {
                logdet += 0.0; // row swap flips sign; PD determinant stays positive
            }
            let d = aug[col][col];
            logdet += d.abs().ln();
            for j in 0..12 {
                aug[col][j] /= d;
            }
            for i in 0..6 {
                if i != col {
                    let f = aug[i][col];
                    for j in 0..12 {
                        aug[i][j] -= f * aug[col][j];
                    }
                }
            }
        }
        let mut inv = [[0.0; 6]; 6];
        for i in 0..6 {
            for j in 0..6 {
                inv[i][j] = aug[i][6 + j];
            }
        }
        (inv, logdet)
    }

    #[test]
    fn simulated_covariance_converges() {
        let mut beta = Matrix::zeros(4, 1);
        beta[(0, 0)] = 1.0;
        beta[(1, 0)] = 0.6;
        beta[(2, 0)] = -0.4;
        beta[(3, 0)] = 0.2;
        let lambda = vec![0.5, 0.8, 0.3, 1.1];
        let data = simulate_fa_data(&beta, &lambda, 100_000, 5);
        let cov = crate::linalg::sample_covariance(&data.observations);
        for i in 0..4 {
            for j in 0..4 {
                let expect = beta[(i, 0)] * beta[(j, 0)] + if i == j { lambda[i] } else { 0.0 };
                assert!(
                    (cov[(i, j)] - expect).abs() < 0.05,
                    "cov[{i}{j}] {} vs {expect}",
                    cov[(i, j)]
                );
            }
        }
        // Determinism.
        let again = simulate_fa_data(&beta, &lambda, 100, 5);
        let first = simulate_fa_data(&beta, &lambda, 100, 5);
        assert_eq!(again, first);
    }

    #[test]
    fn positive_mask_marks_diagonals_and_variances() {
        let t = FaTarget::new(&empty_data(4), vec![2]);
        let mask = t.positive_coords(0);
        // Layout: (b00, b10, b20, b30, b11, b21, b31, l0..l3).
        assert_eq!(
            mask,
            vec![true, false, false, false, true, false, false, true, true, true, true]
        );
    }
}
