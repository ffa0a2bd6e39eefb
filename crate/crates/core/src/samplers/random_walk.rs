//! Within-model Gaussian random-walk Metropolis kernels.

use crate::error::{Result, TrjError};
use crate::targets::{TransPoint, TransdimensionalTarget};
use rand::Rng;
use rand_distr::StandardNormal;

/// A reversible within-model kernel: an isotropic-per-coordinate Gaussian
/// step, optionally mixed over scale multipliers so chains can hop between
/// well-separated conditional modes.
#[derive(Debug, Clone)]
pub struct RandomWalkKernel {
    /// Per-model, per-coordinate step scales.
    pub scales: Vec<Vec<f64>>,
    /// (probability, scale multiplier) pairs; probabilities sum to one.
    pub mixture: Vec<(f64, f64)>,
}

impl RandomWalkKernel {
    pub fn new(scales: Vec<Vec<f64>>) -> Self {
        RandomWalkKernel { scales, mixture: vec![(1.0, 1.0)] }
    }

    /// A kernel that occasionally takes much larger steps; the mixture of
    /// symmetric proposals stays symmetric, hence still reversible.
    pub fn with_mixture(scales: Vec<Vec<f64>>, mixture: Vec<(f64, f64)>) -> Result<Self> {
        let total: f64 = mixture.iter().map(|(p, _)| p).sum();
        if (total - 1.0).abs() > 1e-12 || mixture.iter().any(|&(p, m)| p < 0.0 || m <= 0.0) {
            return Err(TrjError::InvalidParameter(
                "mixture probabilities must be nonnegative and sum to 1, multipliers positive"
                    .into(),
            ));
        }
        Ok(RandomWalkKernel { scales, mixture })
    }

    fn draw_multiplier<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.mixture.len() == 1 {
            return self.mixture[0].1;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(p, m) in &self.mixture {
            acc += p;
            if u < acc {
                return m;
            }
        }
        self.mixture.last().unwrap().1
    }

    /// One Metropolis step for model `point.k` of the target. Returns
    /// (acceptance probability, accepted).
    pub fn step<R: Rng + ?Sized>(
        &self,
        target: &dyn TransdimensionalTarget,
        point: &mut TransPoint,
        rng: &mut R,
    ) -> (f64, bool) {
        let k = point.k;
        let scales = &self.scales[k];
        self.step_with(
            |theta| target.log_density(&TransPoint::new(k, theta.to_vec())),
            &mut point.theta,
            scales,
            rng,
        )
    }

    /// Metropolis step against an arbitrary conditional log-density, used
    /// for the parameter block of saturated chains.
    pub fn step_with<R: Rng + ?Sized, F: Fn(&[f64]) -> f64>(
        &self,
        log_density: F,
        theta: &mut Vec<f64>,
        scales: &[f64],
        rng: &mut R,
    ) -> (f64, bool) {
        let mult = self.draw_multiplier(rng);
        let proposal: Vec<f64> = theta
            .iter()
            .zip(scales)
            .map(|(&t, &s)| t + mult * s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let log_alpha = log_density(&proposal) - log_density(theta);
        let alpha = log_alpha.exp().min(1.0);
        let accepted = rng.random::<f64>().ln() < log_alpha;
        if accepted {
            *theta = proposal;
        }
        (alpha, accepted)
    }
}

/// Free-function form of the within-model move.
pub fn random_walk_step<R: Rng + ?Sized>(
    target: &dyn TransdimensionalTarget,
    kernel: &RandomWalkKernel,
    point: &mut TransPoint,
    rng: &mut R,
) -> (f64, bool) {
    kernel.step(target, point, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::log_normal;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct Gauss1 {
        mean: f64,
    }

    impl TransdimensionalTarget for Gauss1 {
        fn model_count(&self) -> usize {
            1
        }
        fn dim(&self, _k: usize) -> usize {
            1
        }
        fn log_density(&self, p: &TransPoint) -> f64 {
            log_normal(p.theta[0], self.mean, 1.0)
        }
    }

    #[test]
    fn zero_scale_always_accepts_and_stays() {
        let t = Gauss1 { mean: 0.0 };
        let kernel = RandomWalkKernel::new(vec![vec![0.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = TransPoint::new(0, vec![0.7]);
        for _ in 0..100 {
            let (alpha, accepted) = kernel.step(&t, &mut p, &mut rng);
            assert_eq!(alpha, 1.0);
            assert!(accepted);
            assert_eq!(p.theta[0], 0.7);
        }
    }

    #[test]
    fn acceptance_rate_in_healthy_band() {
        let t = Gauss1 { mean: 0.0 };
        let kernel = RandomWalkKernel::new(vec![vec![2.4]]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = TransPoint::new(0, vec![0.0]);
        let mut accepts = 0usize;
        let n = 100_000;
        for _ in 0..n {
            if kernel.step(&t, &mut p, &mut rng).1 {
                accepts += 1;
            }
        }
        let rate = accepts as f64 / n as f64;
        assert!(rate > 0.3 && rate < 0.6, "acceptance rate {rate}");
    }

    #[test]
    fn ergodic_mean_matches_target() {
        let t = Gauss1 { mean: 3.0 };
        let kernel = RandomWalkKernel::new(vec![vec![2.4]]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = TransPoint::new(0, vec![3.0]);
        let mut sum = 0.0;
        let n = 100_000;
        for _ in 0..n {
            kernel.step(&t, &mut p, &mut rng);
            sum += p.theta[0];
        }
        let mean = sum / n as f64;
        assert!((mean - 3.0).abs() < 0.05, "chain mean {mean}");
    }

    #[test]
    fn mixture_validation() {
        assert!(RandomWalkKernel::with_mixture(vec![vec![1.0]], vec![(0.6, 1.0), (0.5, 5.0)])
            .is_err());
        assert!(RandomWalkKernel::with_mixture(vec![vec![1.0]], vec![(0.8, 1.0), (0.2, 5.0)])
            .is_ok());
    }
}
