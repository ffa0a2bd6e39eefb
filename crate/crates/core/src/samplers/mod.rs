//! Reversible jump MCMC: across-model proposals routed through transport
//! maps, within-model random walks, and chain orchestration.

mod chain;
mod ctrj;
mod independence;
mod random_walk;
mod trj;

pub use chain::{
    pilot_scales, run_chain, run_saturated_chain, sample_within_model, tune_scales, AcrossKernel,
    ChainConfig, ChainOutput, MoveKind, StepRecord,
};
pub use ctrj::{ctrj_propose, ctrj_step, SaturatedState};
pub use independence::{independence_propose, independence_step, IndependenceProposal, ModelProposal};
pub use random_walk::{random_walk_step, RandomWalkKernel};
pub use trj::{acceptance_reduced, trj_propose, trj_step, DimensionMatcher, TrjProposalSet};

use crate::error::{Result, TrjError};
use crate::linalg::Matrix;
use rand::Rng;

/// Discrete proposal over destination models: row `k` gives the probability
/// of proposing each `k'` from model `k`.
#[derive(Debug, Clone)]
pub struct JumpDistribution {
    probs: Matrix,
}

impl JumpDistribution {
    /// Validate and wrap an explicit matrix of jump probabilities.
    pub fn new(probs: Matrix) -> Result<Self> {
        if probs.rows != probs.cols {
            return Err(TrjError::DimensionMismatch { expected: probs.rows, got: probs.cols });
        }
        for k in 0..probs.rows {
            let row = probs.row(k);
            if row.iter().any(|&p| !(p >= 0.0)) {
                return Err(TrjError::InvalidParameter(format!(
                    "jump probabilities from model {k} contain negatives"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(TrjError::InvalidParameter(format!(
                    "jump probabilities from model {k} sum to {sum}, not 1"
                )));
            }
        }
        Ok(JumpDistribution { probs })
    }

    /// Uniform over the other models (zero probability of staying).
    pub fn uniform(n_models: usize) -> Self {
        assert!(n_models >= 2);
        let p = 1.0 / (n_models - 1) as f64;
        let mut m = Matrix::zeros(n_models, n_models);
        for k in 0..n_models {
            for j in 0..n_models {
                if j != k {
                    m[(k, j)] = p;
                }
            }
        }
        JumpDistribution { probs: m }
    }

    /// Every row proposes according to the given marginal probabilities
    /// (including staying put), the detailed-balance choice when marginals
    /// are known.
    pub fn from_marginals(marginals: &[f64]) -> Result<Self> {
        let n = marginals.len();
        let mut m = Matrix::zeros(n, n);
        for k in 0..n {
            for j in 0..n {
                m[(k, j)] = marginals[j];
            }
        }
        JumpDistribution::new(m)
    }

    pub fn n_models(&self) -> usize {
        self.probs.rows
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.probs[(from, to)]
    }

    /// log j_{k'}(k) - log j_k(k').
    pub fn log_ratio(&self, from: usize, to: usize) -> f64 {
        self.prob(to, from).ln() - self.prob(from, to).ln()
    }

    pub fn sample<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        let row = self.probs.row(from);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        row.len() - 1
    }
}

/// Full record of one attempted across-model move. The acceptance
/// probability is reassembled from its log components, which the
/// model-probability estimators consume.
#[derive(Debug, Clone)]
pub struct ProposalRecord {
    pub from: usize,
    pub to: usize,
    /// log pi(x') - log pi(x) (augmented density for saturated moves).
    pub log_target_ratio: f64,
    /// log j_{k'}(k) - log j_k(k').
    pub log_jump_ratio: f64,
    /// log g'_u - log g_u: auxiliary densities (reverse minus forward).
    pub log_aux_ratio: f64,
    /// log |J_{T_k}(theta_k)|.
    pub log_jac_forward: f64,
    /// log |J_{T_{k'}}(theta'_{k'})|^{-1}.
    pub log_jac_reverse: f64,
    pub log_alpha: f64,
    pub alpha: f64,
    pub accepted: bool,
    /// The proposal left the transport's domain and was auto-rejected.
    pub domain_error: bool,
}

impl ProposalRecord {
    pub(crate) fn from_components(
        from: usize,
        to: usize,
        log_target_ratio: f64,
        log_jump_ratio: f64,
        log_aux_ratio: f64,
        log_jac_forward: f64,
        log_jac_reverse: f64,
    ) -> Self {
        let mut log_alpha = log_target_ratio
            + log_jump_ratio
            + log_aux_ratio
            + log_jac_forward
            + log_jac_reverse;
        let mut domain_error = false;
        if log_alpha.is_nan() {
            log_alpha = f64::NEG_INFINITY;
            domain_error = true;
        }
        let alpha = log_alpha.exp().min(1.0);
        ProposalRecord {
            from,
            to,
            log_target_ratio,
            log_jump_ratio,
            log_aux_ratio,
            log_jac_forward,
            log_jac_reverse,
            log_alpha,
            alpha,
            accepted: false,
            domain_error,
        }
    }

    /// A zero-probability record for proposals that failed inside the
    /// transport's domain.
    pub(crate) fn rejected_domain(from: usize, to: usize) -> Self {
        ProposalRecord {
            from,
            to,
            log_target_ratio: f64::NEG_INFINITY,
            log_jump_ratio: 0.0,
            log_aux_ratio: 0.0,
            log_jac_forward: 0.0,
            log_jac_reverse: 0.0,
            log_alpha: f64::NEG_INFINITY,
            alpha: 0.0,
            accepted: false,
            domain_error: true,
        }
    }
}

/// Outcome of one sampler step.
#[derive(Debug, Clone)]
pub enum StepOutcome {
    Within { alpha: f64, accepted: bool },
    Across(ProposalRecord),
}
