//! Chain diagnostics.

/// Effective sample size of a scalar chain via the initial positive
/// sequence estimator: autocovariances are summed in lag pairs until a pair
/// sum turns nonpositive.
pub fn effective_sample_size(chain: &[f64]) -> f64 {
    let n = chain.len();
    if n < 4 {
        return n as f64;
    }
    let mean = crate::numeric::mean(chain);
    let autocov = |lag: usize| -> f64 {
        (0..n - lag).map(|i| (chain[i] - mean) * (chain[i + lag] - mean)).sum::<f64>() / n as f64
    };
    let c0 = autocov(0);
    if c0 <= 0.0 {
        return n as f64;
    }
    let mut sum = 0.0;
    let mut lag = 1;
    while lag + 1 < n {
        let pair = autocov(lag) + autocov(lag + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        lag += 2;
    }
    let tau = 1.0 + 2.0 * sum / c0;
    (n as f64 / tau).min(n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn iid_chain_has_near_full_ess() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let chain: Vec<f64> = (0..20_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let ess = effective_sample_size(&chain);
        assert!(ess > 15_000.0, "iid ess {ess}");
    }

    #[test]
    fn ar1_chain_ess_matches_theory() {
        // AR(1) with coefficient rho has integrated autocorrelation time
        // (1+rho)/(1-rho).
        let rho: f64 = 0.9;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut x = 0.0;
        let n = 200_000;
        let mut chain = Vec::with_capacity(n);
        for _ in 0..n {
            x = rho * x + (1.0 - rho * rho).sqrt() * rng.sample::<f64, _>(StandardNormal);
            chain.push(x);
        }
        let ess = effective_sample_size(&chain);
        let expect = n as f64 * (1.0 - rho) / (1.0 + rho);
        assert!(
            (ess - expect).abs() / expect < 0.25,
            "ess {ess} vs theoretical {expect}"
        );
    }
}
