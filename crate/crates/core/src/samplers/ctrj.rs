//! Conditional transport reversible jump on the saturated space.
//!
//! The chain state carries the full saturated vector; an across-model move
//! pushes it through the conditional map given the current model and pulls
//! it back given the proposed one. Within-model moves update only the
//! parameter slots and leave the auxiliary block untouched.

use super::{JumpDistribution, ProposalRecord, StepOutcome};
use crate::samplers::random_walk::RandomWalkKernel;
use crate::targets::AugmentedTarget;
use crate::transport::ConditionalTransport;
use rand::Rng;

/// State of a saturated-space chain: model index plus the full vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturatedState {
    pub k: usize,
    pub xi: Vec<f64>,
}

impl SaturatedState {
    pub fn new(k: usize, xi: Vec<f64>) -> Self {
        SaturatedState { k, xi }
    }
}

/// Deterministic part of a conditional-transport move to model `to`.
pub fn ctrj_propose(
    aug: &AugmentedTarget,
    map: &dyn ConditionalTransport,
    jump: &JumpDistribution,
    state: &SaturatedState,
    to: usize,
) -> (Option<SaturatedState>, ProposalRecord) {
    let from = state.k;
    debug_assert_ne!(from, to);
    let (z, log_jac_forward) = match map.forward_given(from, &state.xi) {
        Ok(v) => v,
        Err(_) => return (None, ProposalRecord::rejected_domain(from, to)),
    };
    let (xi_to, log_jac_reverse) = match map.inverse_given(to, &z) {
        Ok(v) => v,
        Err(_) => return (None, ProposalRecord::rejected_domain(from, to)),
    };
    let log_target_ratio = aug.log_density(to, &xi_to) - aug.log_density(from, &state.xi);
    let record = ProposalRecord::from_components(
        from,
        to,
        log_target_ratio,
        jump.log_ratio(from, to),
        0.0,
        log_jac_forward,
        log_jac_reverse,
    );
    (Some(SaturatedState::new(to, xi_to)), record)
}

/// One conditional-transport kernel step on the saturated chain.
pub fn ctrj_step<R: Rng + ?Sized>(
    aug: &AugmentedTarget,
    map: &dyn ConditionalTransport,
    jump: &JumpDistribution,
    within: &RandomWalkKernel,
    state: &mut SaturatedState,
    rng: &mut R,
) -> StepOutcome {
    let to = jump.sample(state.k, rng);
    if to == state.k {
        // Within-model move on the parameter slots; auxiliaries unchanged.
        let k = state.k;
        let slots = aug.slots[k].clone();
        let mut theta: Vec<f64> = slots.iter().map(|&s| state.xi[s]).collect();
        let scales = &within.scales[k];
        let xi_fixed = state.xi.clone();
        let (alpha, accepted) = within.step_with(
            |th| {
                let mut xi = xi_fixed.clone();
                for (&s, &v) in slots.iter().zip(th) {
                    xi[s] = v;
                }
                aug.log_density(k, &xi)
            },
            &mut theta,
            scales,
            rng,
        );
        if accepted {
            for (&s, &v) in slots.iter().zip(&theta) {
                state.xi[s] = v;
            }
        }
        return StepOutcome::Within { alpha, accepted };
    }
    let (proposed, mut record) = ctrj_propose(aug, map, jump, state, to);
    if let Some(next) = proposed {
        if rng.random::<f64>().ln() < record.log_alpha {
            record.accepted = true;
            *state = next;
        }
    }
    StepOutcome::Across(record)
}
