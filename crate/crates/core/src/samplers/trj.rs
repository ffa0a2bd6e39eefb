//! Transport reversible jump proposals.
//!
//! An across-model move from `(k, theta)` to model `k'` pushes the current
//! parameters to reference space with the source map, matches dimensions by
//! drawing (ascending) or splitting off (descending) auxiliary reference
//! coordinates, and pulls back through the destination map's inverse. The
//! acceptance probability is the reversible jump ratio with the two
//! transport Jacobians; the dimension matcher contributes exactly zero
//! because it is volume-preserving and reference-invariant.

use super::{JumpDistribution, ProposalRecord, StepOutcome};
use crate::error::{Result, TrjError};
use crate::reference::Reference;
use crate::samplers::random_walk::RandomWalkKernel;
use crate::targets::{TransPoint, TransdimensionalTarget};
use crate::transport::TransportMap;
use rand::Rng;
use std::collections::BTreeMap;

/// The reference-invariant, volume-preserving dimension matcher. The
/// identity simply concatenates (ascending) or truncates (descending);
/// permutations are keyed by the larger of the two dimensions and applied
/// forward when ascending, inverted when descending, so a jump followed by
/// its reverse is the exact identity.
#[derive(Debug, Clone, Default)]
pub enum DimensionMatcher {
    #[default]
    Identity,
    /// Permutations of `0..m` keyed by `m = max(n_k, n_k')`; missing sizes
    /// fall back to the identity. Equal-dimension jumps always use the
    /// identity (a fixed permutation has no orientation for them).
    Permutation(BTreeMap<usize, Vec<usize>>),
}

impl DimensionMatcher {
    pub fn permutation(perms: BTreeMap<usize, Vec<usize>>) -> Result<Self> {
        for (m, p) in &perms {
            let mut seen = vec![false; *m];
            if p.len() != *m {
                return Err(TrjError::InvalidParameter(format!(
                    "permutation for size {m} has length {}",
                    p.len()
                )));
            }
            for &i in p {
                if i >= *m || seen[i] {
                    return Err(TrjError::InvalidParameter(format!(
                        "invalid permutation for size {m}"
                    )));
                }
                seen[i] = true;
            }
        }
        Ok(DimensionMatcher::Permutation(perms))
    }

    /// Ascending: concatenate `z` and `u`, then permute.
    pub fn ascend(&self, z: &[f64], u: &[f64]) -> Vec<f64> {
        let mut joined: Vec<f64> = z.iter().chain(u.iter()).copied().collect();
        if let DimensionMatcher::Permutation(perms) = self {
            if let Some(p) = perms.get(&joined.len()) {
                let src = joined.clone();
                for (out_idx, &in_idx) in p.iter().enumerate() {
                    joined[out_idx] = src[in_idx];
                }
            }
        }
        joined
    }

    /// Descending: invert the permutation, keep the first `keep`
    /// coordinates, return the split-off remainder.
    pub fn descend(&self, z: &[f64], keep: usize) -> (Vec<f64>, Vec<f64>) {
        let mut buf = z.to_vec();
        if let DimensionMatcher::Permutation(perms) = self {
            if let Some(p) = perms.get(&z.len()) {
                for (out_idx, &in_idx) in p.iter().enumerate() {
                    buf[in_idx] = z[out_idx];
                }
            }
        }
        let rest = buf.split_off(keep);
        (buf, rest)
    }
}

/// The per-model transport maps, reference distribution, and dimension
/// matcher of a TRJ proposal.
pub struct TrjProposalSet {
    pub maps: Vec<TransportMap>,
    pub reference: Reference,
    pub matcher: DimensionMatcher,
}

impl TrjProposalSet {
    pub fn new(maps: Vec<TransportMap>, reference: Reference) -> Self {
        TrjProposalSet { maps, reference, matcher: DimensionMatcher::Identity }
    }

    /// Check that every model of the target has a map of matching dimension.
    pub fn validate_for(&self, target: &dyn TransdimensionalTarget) -> Result<()> {
        if self.maps.len() != target.model_count() {
            return Err(TrjError::DimensionMismatch {
                expected: target.model_count(),
                got: self.maps.len(),
            });
        }
        for k in 0..self.maps.len() {
            if self.maps[k].dim() != target.dim(k) {
                return Err(TrjError::DimensionMismatch {
                    expected: target.dim(k),
                    got: self.maps[k].dim(),
                });
            }
        }
        Ok(())
    }
}

/// Execute the deterministic part of a TRJ move from `point` to model `to`,
/// with the ascending auxiliary block supplied explicitly (empty unless
/// `dim(to) > dim(from)`). Returns the proposed point (None when the
/// transports reject the move as out of domain) and the full record.
pub fn trj_propose(
    target: &dyn TransdimensionalTarget,
    proposals: &TrjProposalSet,
    jump: &JumpDistribution,
    point: &TransPoint,
    to: usize,
    aux: &[f64],
) -> (Option<TransPoint>, ProposalRecord) {
    let from = point.k;
    debug_assert_ne!(from, to);
    let n_from = target.dim(from);
    let n_to = target.dim(to);
    debug_assert_eq!(
        aux.len(),
        n_to.saturating_sub(n_from),
        "ascending moves need dim(to) - dim(from) auxiliary draws"
    );

    let (z, log_jac_forward) = match proposals.maps[from].forward(&point.theta) {
        Ok(v) => v,
        Err(_) => return (None, ProposalRecord::rejected_domain(from, to)),
    };

    // Dimension matching: g_u is the density of the drawn block, g'_u of
    // the block the reverse move would draw.
    let (z_to, log_aux_ratio) = if n_to > n_from {
        let g_u = proposals.reference.log_density_sum(aux);
        (proposals.matcher.ascend(&z, aux), -g_u)
    } else if n_to < n_from {
        let (kept, dropped) = proposals.matcher.descend(&z, n_to);
        let g_u_rev = proposals.reference.log_density_sum(&dropped);
        (kept, g_u_rev)
    } else {
        let (kept, _) = proposals.matcher.descend(&z, n_to);
        (kept, 0.0)
    };

    let (theta_to, log_jac_reverse) = match proposals.maps[to].inverse(&z_to) {
        Ok(v) => v,
        Err(_) => return (None, ProposalRecord::rejected_domain(from, to)),
    };
    let proposed = TransPoint::new(to, theta_to);

    let log_target_ratio = target.log_density(&proposed) - target.log_density(point);
    let record = ProposalRecord::from_components(
        from,
        to,
        log_target_ratio,
        jump.log_ratio(from, to),
        log_aux_ratio,
        log_jac_forward,
        log_jac_reverse,
    );
    (Some(proposed), record)
}

/// One full TRJ kernel step: draw the destination from the jump
/// distribution, delegate to the within-model kernel when it equals the
/// current model, otherwise attempt the transport jump.
pub fn trj_step<R: Rng + ?Sized>(
    target: &dyn TransdimensionalTarget,
    proposals: &TrjProposalSet,
    jump: &JumpDistribution,
    within: &RandomWalkKernel,
    point: &mut TransPoint,
    rng: &mut R,
) -> StepOutcome {
    let to = jump.sample(point.k, rng);
    if to == point.k {
        let (alpha, accepted) = within.step(target, point, rng);
        return StepOutcome::Within { alpha, accepted };
    }
    let w = target.dim(to).saturating_sub(target.dim(point.k));
    let aux = proposals.reference.sample_vec(w, rng);
    let (proposed, mut record) = trj_propose(target, proposals, jump, point, to, &aux);
    if let Some(next) = proposed {
        if rng.random::<f64>().ln() < record.log_alpha {
            record.accepted = true;
            *point = next;
        }
    }
    StepOutcome::Across(record)
}

/// The reduced acceptance probability that exact transports attain:
/// `1 ∧ (pi(k')/pi(k)) (j_{k'}(k)/j_k(k'))`. Requires known marginals.
pub fn acceptance_reduced(
    target: &dyn TransdimensionalTarget,
    from: usize,
    to: usize,
    jump: &JumpDistribution,
) -> Result<f64> {
    let marginals = target.true_marginals().ok_or_else(|| {
        TrjError::InvalidParameter("target has no known marginal model probabilities".into())
    })?;
    if from == to {
        return Ok(1.0);
    }
    let log = (marginals[to].ln() - marginals[from].ln()) + jump.log_ratio(from, to);
    Ok(log.exp().min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::samplers::JumpDistribution;
    use crate::targets::SasTarget;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sas_setup() -> (SasTarget, TrjProposalSet, JumpDistribution) {
        let target = SasTarget::new();
        let maps = target.exact_maps();
        let props = TrjProposalSet::new(maps, Reference::standard_normal());
        let jump = JumpDistribution::from_marginals(&[0.25, 0.75]).unwrap();
        (target, props, jump)
    }

    #[test]
    fn exact_maps_with_marginal_jumps_are_rejection_free() {
        let (target, props, jump) = sas_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let point = target.sample_exact(&mut rng).unwrap();
            let to = 1 - point.k;
            let w = target.dim(to).saturating_sub(target.dim(point.k));
            let aux = props.reference.sample_vec(w, &mut rng);
            let (_, record) = trj_propose(&target, &props, &jump, &point, to, &aux);
            assert!(
                (record.alpha - 1.0).abs() < 1e-10,
                "alpha {} for {} -> {to}",
                record.alpha,
                point.k
            );
        }
    }

    #[test]
    fn alpha_matches_reduced_form_with_uniform_jumps() {
        let (target, props, _) = sas_setup();
        let jump = JumpDistribution::uniform(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let point = target.sample_exact(&mut rng).unwrap();
            let to = 1 - point.k;
            let w = target.dim(to).saturating_sub(target.dim(point.k));
            let aux = props.reference.sample_vec(w, &mut rng);
            let (_, record) = trj_propose(&target, &props, &jump, &point, to, &aux);
            let reduced = acceptance_reduced(&target, point.k, to, &jump).unwrap();
            assert!(
                (record.alpha - reduced).abs() < 1e-8,
                "alpha {} vs reduced {reduced}",
                record.alpha
            );
        }
    }

    #[test]
    fn reduced_values_by_hand() {
        let (target, _, _) = sas_setup();
        let marg = JumpDistribution::from_marginals(&[0.25, 0.75]).unwrap();
        let unif = JumpDistribution::uniform(2);
        assert!((acceptance_reduced(&target, 0, 1, &marg).unwrap() - 1.0).abs() < 1e-14);
        assert!(
            (acceptance_reduced(&target, 1, 0, &unif).unwrap() - 1.0 / 3.0).abs() < 1e-14
        );
        assert_eq!(acceptance_reduced(&target, 1, 1, &unif).unwrap(), 1.0);
    }

    #[test]
    fn involution_returns_exactly_and_log_ratios_negate() {
        let (target, props, jump) = sas_setup();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let mut point = target.sample_exact(&mut rng).unwrap();
            if point.k != 0 {
                point = TransPoint::new(0, vec![point.theta[0]]);
            }
            let aux = [rng.random::<f64>() * 2.0 - 1.0];
            let (up, rec_up) = trj_propose(&target, &props, &jump, &point, 1, &aux);
            let up = up.unwrap();
            let (down, rec_down) = trj_propose(&target, &props, &jump, &up, 0, &[]);
            let down = down.unwrap();
            assert!(
                (down.theta[0] - point.theta[0]).abs() < 1e-12,
                "involution failed: {} vs {}",
                down.theta[0],
                point.theta[0]
            );
            assert!(
                (rec_up.log_alpha + rec_down.log_alpha).abs() < 1e-10,
                "log ratios do not negate: {} vs {}",
                rec_up.log_alpha,
                rec_down.log_alpha
            );
        }
    }

    #[test]
    fn permutation_matcher_preserves_acceptance_and_involution() {
        let (target, mut props, jump) = sas_setup();
        let mut perms = BTreeMap::new();
        perms.insert(2usize, vec![1usize, 0]);
        props.matcher = DimensionMatcher::permutation(perms).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let point = target.sample_exact(&mut rng).unwrap();
            let to = 1 - point.k;
            let w = target.dim(to).saturating_sub(target.dim(point.k));
            let aux = props.reference.sample_vec(w, &mut rng);
            let (next, record) = trj_propose(&target, &props, &jump, &point, to, &aux);
            // Exact transports: still rejection-free under a permutation.
            assert!((record.alpha - 1.0).abs() < 1e-10);
            // Round trip through the permuted matcher.
            let next = next.unwrap();
            if point.k == 0 {
                let (back, _) = trj_propose(&target, &props, &jump, &next, 0, &[]);
                assert!((back.unwrap().theta[0] - point.theta[0]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn equal_dimension_jump_draws_no_auxiliary() {
        use crate::numeric::log_normal;
        // Two models of the same dimension with shifted Gaussian targets.
        struct Shifted;
        impl TransdimensionalTarget for Shifted {
            fn model_count(&self) -> usize {
                2
            }
            fn dim(&self, _k: usize) -> usize {
                1
            }
            fn log_density(&self, p: &TransPoint) -> f64 {
                let mean = if p.k == 0 { 0.0 } else { 5.0 };
                0.5_f64.ln() + log_normal(p.theta[0], mean, 1.0)
            }
            fn true_marginals(&self) -> Option<Vec<f64>> {
                Some(vec![0.5, 0.5])
            }
        }
        let target = Shifted;
        let maps = vec![
            TransportMap::Affine(
                crate::transport::AffineMap::new(vec![0.0], crate::linalg::Matrix::identity(1))
                    .unwrap(),
            ),
            TransportMap::Affine(
                crate::transport::AffineMap::new(vec![5.0], crate::linalg::Matrix::identity(1))
                    .unwrap(),
            ),
        ];
        let props = TrjProposalSet::new(maps, Reference::standard_normal());
        let jump = JumpDistribution::uniform(2);
        let (next, record) = trj_propose(&target, &props, &jump, &TransPoint::new(0, vec![0.3]), 1, &[]);
        assert_eq!(record.log_aux_ratio, 0.0);
        // Exact shift maps make the move rejection-free.
        assert!((record.alpha - 1.0).abs() < 1e-12);
        assert!((next.unwrap().theta[0] - 5.3).abs() < 1e-12);
    }

    #[test]
    fn domain_error_is_zero_alpha_flagged() {
        // A spline flow saturates for far-out inputs; the proposal must be
        // recorded as a rejected domain error, not NaN.
        let (target, _, jump) = sas_setup();
        let flow0 = crate::transport::SplineFlow::new(1, 5, 1, 8, vec![0.0], vec![1.0], 0).unwrap();
        let flow1 = crate::transport::SplineFlow::new(2, 5, 1, 8, vec![0.0, 0.0], vec![1.0, 1.0], 1).unwrap();
        let props = TrjProposalSet::new(
            vec![TransportMap::SplineFlow(flow0), TransportMap::SplineFlow(flow1)],
            Reference::standard_normal(),
        );
        let far = TransPoint::new(0, vec![1.0e3]);
        let (next, record) = trj_propose(&target, &props, &jump, &far, 1, &[0.2]);
        assert!(next.is_none());
        assert!(record.domain_error);
        assert_eq!(record.alpha, 0.0);
    }
}
