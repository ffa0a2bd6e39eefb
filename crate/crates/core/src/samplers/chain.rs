//! Chain drivers: alternate across-model and within-model kernels, record
//! every attempted move, and export traces.

use super::ctrj::{ctrj_step, SaturatedState};
use super::independence::{independence_step, IndependenceProposal};
use super::random_walk::RandomWalkKernel;
use super::trj::{trj_step, TrjProposalSet};
use super::{JumpDistribution, ProposalRecord, StepOutcome};
use crate::error::Result;
use crate::linalg::Matrix;
use crate::targets::{AugmentedTarget, TransPoint, TransdimensionalTarget};
use crate::transport::ConditionalTransport;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::io::Write as _;
use std::path::Path;

/// Chain driver settings.
#[derive(Debug, Clone, Copy)]
pub struct ChainConfig {
    pub n_steps: usize,
    pub seed: u64,
    /// Within-model steps interleaved after each across-model step.
    pub within_per_across: usize,
    pub record_theta: bool,
}

impl ChainConfig {
    pub fn new(n_steps: usize, seed: u64) -> Self {
        ChainConfig { n_steps, seed, within_per_across: 1, record_theta: false }
    }
}

/// Compact per-step record (both move kinds).
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: usize,
    pub move_type: MoveKind,
    pub alpha: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveKind {
    Within,
    Across,
}

impl MoveKind {
    fn label(self) -> &'static str {
        match self {
            MoveKind::Within => "within",
            MoveKind::Across => "across",
        }
    }
}

/// Everything a chain run produces: the model-index trajectory, compact
/// per-step records, every full across-model proposal record, and the
/// optional parameter trace.
pub struct ChainOutput {
    pub ks: Vec<usize>,
    pub steps: Vec<StepRecord>,
    pub proposals: Vec<ProposalRecord>,
    pub theta_trace: Option<Vec<Vec<f64>>>,
}

impl ChainOutput {
    fn with_capacity(n: usize, record_theta: bool) -> Self {
        ChainOutput {
            ks: Vec::with_capacity(n),
            steps: Vec::with_capacity(n),
            proposals: Vec::new(),
            theta_trace: if record_theta { Some(Vec::with_capacity(n)) } else { None },
        }
    }

    fn push(&mut self, step: usize, k: usize, outcome: StepOutcome, theta: Option<Vec<f64>>) {
        match outcome {
            StepOutcome::Within { alpha, accepted } => {
                self.steps.push(StepRecord { step, move_type: MoveKind::Within, alpha, accepted });
            }
            StepOutcome::Across(record) => {
                self.steps.push(StepRecord {
                    step,
                    move_type: MoveKind::Across,
                    alpha: record.alpha,
                    accepted: record.accepted,
                });
                self.proposals.push(record);
            }
        }
        self.ks.push(k);
        if let (Some(trace), Some(th)) = (&mut self.theta_trace, theta) {
            trace.push(th);
        }
    }

    /// Fraction of across-model proposals that were accepted.
    pub fn across_acceptance_rate(&self) -> f64 {
        if self.proposals.is_empty() {
            return 0.0;
        }
        self.proposals.iter().filter(|p| p.accepted).count() as f64 / self.proposals.len() as f64
    }

    /// CSV with columns (step, k, accepted, alpha, move_type).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "step,k,accepted,alpha,move_type")?;
        for (rec, &k) in self.steps.iter().zip(&self.ks) {
            writeln!(
                f,
                "{},{},{},{},{}",
                rec.step,
                k,
                rec.accepted as u8,
                rec.alpha,
                rec.move_type.label()
            )?;
        }
        Ok(())
    }

    /// Optional parameter trace, one row per step, columns padded per the
    /// current model's dimension.
    pub fn write_theta_csv(&self, path: &Path) -> Result<()> {
        let trace = match &self.theta_trace {
            Some(t) => t,
            None => return Ok(()),
        };
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "step,k,theta")?;
        for (i, (th, &k)) in trace.iter().zip(&self.ks).enumerate() {
            let joined: Vec<String> = th.iter().map(|v| format!("{v}")).collect();
            writeln!(f, "{},{},{}", i, k, joined.join(";"))?;
        }
        Ok(())
    }
}

/// Across-model kernel selector for union-space chains.
pub enum AcrossKernel<'a> {
    Transport(&'a TrjProposalSet),
    Independence(&'a IndependenceProposal),
}

/// Run a union-space chain from `init`, alternating across-model proposals
/// with within-model random-walk sweeps. Deterministic given the seed.
pub fn run_chain(
    target: &dyn TransdimensionalTarget,
    across: &AcrossKernel,
    jump: &JumpDistribution,
    within: &RandomWalkKernel,
    init: TransPoint,
    config: &ChainConfig,
) -> ChainOutput {
    assert!(config.n_steps >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut point = init;
    let mut out = ChainOutput::with_capacity(config.n_steps, config.record_theta);
    let cycle = 1 + config.within_per_across;
    for step in 0..config.n_steps {
        let outcome = if step % cycle == 0 {
            match across {
                AcrossKernel::Transport(props) => {
                    trj_step(target, props, jump, within, &mut point, &mut rng)
                }
                AcrossKernel::Independence(prop) => {
                    independence_step(target, prop, jump, within, &mut point, &mut rng)
                }
            }
        } else {
            let (alpha, accepted) = within.step(target, &mut point, &mut rng);
            StepOutcome::Within { alpha, accepted }
        };
        let theta = config.record_theta.then(|| point.theta.clone());
        out.push(step, point.k, outcome, theta);
    }
    out
}

/// Run a saturated-space chain with a conditional transport.
pub fn run_saturated_chain(
    aug: &AugmentedTarget,
    map: &dyn ConditionalTransport,
    jump: &JumpDistribution,
    within: &RandomWalkKernel,
    init: SaturatedState,
    config: &ChainConfig,
) -> ChainOutput {
    assert!(config.n_steps >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = init;
    let mut out = ChainOutput::with_capacity(config.n_steps, config.record_theta);
    let cycle = 1 + config.within_per_across;
    for step in 0..config.n_steps {
        let outcome = if step % cycle == 0 {
            ctrj_step(aug, map, jump, within, &mut state, &mut rng)
        } else {
            // Forced within-model move.
            let k = state.k;
            let slots = aug.slots[k].clone();
            let mut theta: Vec<f64> = slots.iter().map(|&s| state.xi[s]).collect();
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
                &within.scales[k],
                &mut rng,
            );
            if accepted {
                for (&s, &v) in slots.iter().zip(&theta) {
                    state.xi[s] = v;
                }
            }
            StepOutcome::Within { alpha, accepted }
        };
        let theta = config.record_theta.then(|| state.xi.clone());
        out.push(step, state.k, outcome, theta);
    }
    out
}

/// Draw `n_samples` approximately independent samples from the conditional
/// target of model `k` by a thinned random-walk chain.
pub fn sample_within_model(
    target: &dyn TransdimensionalTarget,
    k: usize,
    kernel: &RandomWalkKernel,
    n_samples: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut point = target.initial_point(k);
    for _ in 0..burn_in {
        kernel.step(target, &mut point, &mut rng);
    }
    let mut rows = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        for _ in 0..thin.max(1) {
            kernel.step(target, &mut point, &mut rng);
        }
        rows.push(point.theta.clone());
    }
    Matrix::from_rows(&rows)
}

/// Per-coordinate random-walk scales from pilot samples: `2.4 sd / sqrt(n)`.
pub fn tune_scales(samples: &Matrix) -> Vec<f64> {
    let n = samples.cols as f64;
    let means = crate::linalg::column_means(samples);
    (0..samples.cols)
        .map(|c| {
            let var = (0..samples.rows)
                .map(|r| {
                    let d = samples.row(r)[c] - means[c];
                    d * d
                })
                .sum::<f64>()
                / (samples.rows - 1) as f64;
            2.4 * var.sqrt() / n.sqrt()
        })
        .collect()
}

/// Pilot-tune within-model scales for every model of a target: short
/// random-walk chains with unit scales feed the scale rule.
pub fn pilot_scales(
    target: &dyn TransdimensionalTarget,
    pilot_steps: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    (0..target.model_count())
        .map(|k| {
            let unit = RandomWalkKernel::new(
                (0..target.model_count())
                    .map(|m| vec![0.5; target.dim(m)])
                    .collect(),
            );
            let pilot =
                sample_within_model(target, k, &unit, pilot_steps, pilot_steps / 4, 1, seed ^ (k as u64).wrapping_mul(0x9e37));
            tune_scales(&pilot)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::Reference;
    use crate::targets::{GaussianToy, SasTarget};

    #[test]
    fn single_step_chain_has_length_one() {
        let target = SasTarget::new();
        let props = TrjProposalSet::new(target.exact_maps(), Reference::standard_normal());
        let jump = JumpDistribution::from_marginals(&[0.25, 0.75]).unwrap();
        let within = RandomWalkKernel::new(vec![vec![4.0], vec![4.0, 4.0]]);
        let out = run_chain(
            &target,
            &AcrossKernel::Transport(&props),
            &jump,
            &within,
            target.initial_point(0),
            &ChainConfig::new(1, 0),
        );
        assert_eq!(out.ks.len(), 1);
        assert_eq!(out.steps.len(), 1);
    }

    #[test]
    fn identical_seeds_identical_trajectories() {
        let target = SasTarget::new();
        let props = TrjProposalSet::new(target.exact_maps(), Reference::standard_normal());
        let jump = JumpDistribution::from_marginals(&[0.25, 0.75]).unwrap();
        let within = RandomWalkKernel::new(vec![vec![4.0], vec![4.0, 4.0]]);
        let cfg = ChainConfig::new(2000, 42);
        let a = run_chain(
            &target,
            &AcrossKernel::Transport(&props),
            &jump,
            &within,
            target.initial_point(0),
            &cfg,
        );
        let b = run_chain(
            &target,
            &AcrossKernel::Transport(&props),
            &jump,
            &within,
            target.initial_point(0),
            &cfg,
        );
        assert_eq!(a.ks, b.ks);
    }

    #[test]
    fn sas_occupancy_converges_to_weights() {
        let target = SasTarget::new();
        let props = TrjProposalSet::new(target.exact_maps(), Reference::standard_normal());
        let jump = JumpDistribution::from_marginals(&[0.25, 0.75]).unwrap();
        let within = RandomWalkKernel::new(vec![vec![4.0], vec![4.0, 4.0]]);
        let out = run_chain(
            &target,
            &AcrossKernel::Transport(&props),
            &jump,
            &within,
            target.initial_point(0),
            &ChainConfig::new(100_000, 7),
        );
        let frac = out.ks.iter().filter(|&&k| k == 1).count() as f64 / out.ks.len() as f64;
        assert!((frac - 0.75).abs() < 0.01, "occupancy {frac}");
        // Exact maps with the detailed-balance jump choice never reject.
        let rejected = out.proposals.iter().filter(|p| !p.accepted).count();
        assert_eq!(rejected, 0, "rejected {rejected} of {}", out.proposals.len());
    }

    #[test]
    fn toy_saturated_chain_matches_marginals() {
        let toy = GaussianToy::simulate(15, 0.4, 0.35, 1.0, 3.0, 99);
        let aug = AugmentedTarget::new(&toy, Reference::standard_normal());
        let maps = crate::transport::PerModelConditional { maps: toy.exact_conditional_maps() };
        let jump = JumpDistribution::uniform(2);
        let within = RandomWalkKernel::new(vec![vec![0.5], vec![0.5, 0.5]]);
        let init = SaturatedState::new(0, aug.embed(0, &toy.initial_point(0).theta, &[0.0]));
        let out = run_saturated_chain(
            &aug,
            &maps,
            &jump,
            &within,
            init,
            &ChainConfig::new(100_000, 3),
        );
        let frac = out.ks.iter().filter(|&&k| k == 1).count() as f64 / out.ks.len() as f64;
        let expect = toy.true_marginals().unwrap()[1];
        assert!((frac - expect).abs() < 0.02, "occupancy {frac} vs {expect}");
    }

    #[test]
    fn csv_export_schema() {
        let target = SasTarget::new();
        let props = TrjProposalSet::new(target.exact_maps(), Reference::standard_normal());
        let jump = JumpDistribution::uniform(2);
        let within = RandomWalkKernel::new(vec![vec![4.0], vec![4.0, 4.0]]);
        let mut cfg = ChainConfig::new(50, 1);
        cfg.record_theta = true;
        let out = run_chain(
            &target,
            &AcrossKernel::Transport(&props),
            &jump,
            &within,
            target.initial_point(0),
            &cfg,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.csv");
        out.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("step,k,accepted,alpha,move_type"));
        assert_eq!(text.lines().count(), 51);
        let tpath = dir.path().join("theta.csv");
        out.write_theta_csv(&tpath).unwrap();
        assert_eq!(std::fs::read_to_string(&tpath).unwrap().lines().count(), 51);
    }

    #[test]
    fn within_model_sampler_recovers_toy_posterior_moments() {
        let toy = GaussianToy::simulate(15, 0.4, 0.35, 1.0, 3.0, 99);
        let scales = pilot_scales(&toy, 2000, 11);
        let kernel = RandomWalkKernel::new(scales);
        let samples = sample_within_model(&toy, 1, &kernel, 20_000, 2000, 5, 13);
        let means = crate::linalg::column_means(&samples);
        for (got, expect) in means.iter().zip(toy.posterior_mean(1)) {
            assert!((got - expect).abs() < 0.05, "mean {got} vs {expect}");
        }
    }
}
