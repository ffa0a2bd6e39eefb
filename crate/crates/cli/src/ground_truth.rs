//! Ground-truth model probabilities with Monte Carlo standard errors.
//!
//! Targets with analytic marginals report them exactly (zero error). When
//! every model dimension is at most two, tensor-grid quadrature of the
//! unnormalized density is reported alongside. Otherwise long saturated or
//! independence-proposal chains provide the estimate, with the
//! between-chain spread as the standard error.

use crate::config::{ExperimentConfig, ExperimentId, ProposalKind};
use crate::experiment::{
    build_proposal, build_target, sample_models, subseed, BuiltProposal, TargetKind,
};
use crate::manifest::ManifestBuilder;
use anyhow::{anyhow, bail, Result};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rayon::prelude::*;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use trj_core::reference::Reference;
use trj_core::samplers::{
    pilot_scales, run_chain, run_saturated_chain, AcrossKernel, ChainConfig, JumpDistribution,
    RandomWalkKernel, SaturatedState,
};
use trj_core::targets::TransdimensionalTarget;
use trj_core::transport::IdentityConditional;
use trj_core::AugmentedTarget;

pub struct GroundTruthRow {
    pub k: usize,
    pub label: String,
    pub pi: f64,
    pub se: f64,
    pub method: String,
}

/// Tensor-grid quadrature of the marginal model probabilities; valid for
/// targets whose every dimension is at most 2. Integration boxes are set
/// from pilot random-walk samples (mean plus/minus 10 sd).
pub fn quadrature_marginals(
    target: &dyn TransdimensionalTarget,
    seed: u64,
) -> Result<Vec<f64>> {
    let n_models = target.model_count();
    if (0..n_models).any(|k| target.dim(k) > 2) {
        bail!("quadrature ground truth needs every model dimension at most 2");
    }
    let scales = pilot_scales(target, 4000, seed);
    let kernel = RandomWalkKernel::new(scales);
    let mut masses = Vec::with_capacity(n_models);
    for k in 0..n_models {
        let pilot = trj_core::samplers::sample_within_model(
            target,
            k,
            &kernel,
            4000,
            2000,
            2,
            subseed(seed, &[k as u64]),
        );
        let means = trj_core::linalg::column_means(&pilot);
        let cov = trj_core::linalg::sample_covariance(&pilot);
        let dim = target.dim(k);
        let lo: Vec<f64> =
            (0..dim).map(|c| means[c] - 10.0 * cov[(c, c)].sqrt()).collect();
        let hi: Vec<f64> =
            (0..dim).map(|c| means[c] + 10.0 * cov[(c, c)].sqrt()).collect();
        let steps = if dim == 1 { 20_000 } else { 600 };
        let mass = match dim {
            1 => {
                let h = (hi[0] - lo[0]) / steps as f64;
                let mut acc = 0.0;
                for i in 0..=steps {
                    let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                    let x = lo[0] + i as f64 * h;
                    acc += w
                        * target
                            .log_density(&trj_core::TransPoint::new(k, vec![x]))
                            .exp();
                }
                acc * h
            }
            2 => {
                let hx = (hi[0] - lo[0]) / steps as f64;
                let hy = (hi[1] - lo[1]) / steps as f64;
                let mut acc = 0.0;
                for i in 0..=steps {
                    let wx = if i == 0 || i == steps { 0.5 } else { 1.0 };
                    let x = lo[0] + i as f64 * hx;
                    for j in 0..=steps {
                        let wy = if j == 0 || j == steps { 0.5 } else { 1.0 };
                        let y = lo[1] + j as f64 * hy;
                        acc += wx
                            * wy
                            * target
                                .log_density(&trj_core::TransPoint::new(k, vec![x, y]))
                                .exp();
                    }
                }
                acc * hx * hy
            }
            _ => unreachable!(),
        };
        masses.push(mass);
    }
    let total: f64 = masses.iter().sum();
    Ok(masses.into_iter().map(|m| m / total).collect())
}

/// Occupancy-based estimate from several long chains; the standard error is
/// the between-chain standard deviation over sqrt(chains).
fn long_chain_rows(
    config: &ExperimentConfig,
    target: &TargetKind,
    built: &BuiltProposal,
    kernel: &RandomWalkKernel,
    start: Vec<(usize, Vec<f64>)>,
    method: &str,
) -> Result<Vec<GroundTruthRow>> {
    let dyn_target = target.as_dyn();
    let n_models = dyn_target.model_count();
    let n_chains = config.ground_truth.chains.max(2);
    let steps = (config.ground_truth.budget / n_chains).max(1);
    let jump = JumpDistribution::uniform(n_models);
    let occupancies: Vec<Vec<f64>> = (0..n_chains)
        .into_par_iter()
        .map(|i| {
            let seed = subseed(config.seed, &[60, i as u64]);
            let cfg = ChainConfig {
                n_steps: steps,
                seed,
                within_per_across: config.chain.within_per_across,
                record_theta: false,
            };
            let (k0, theta0) = &start[i % start.len()];
            let out = match built {
                BuiltProposal::Trj(props) => run_chain(
                    dyn_target,
                    &AcrossKernel::Transport(props),
                    &jump,
                    kernel,
                    trj_core::TransPoint::new(*k0, theta0.clone()),
                    &cfg,
                ),
                BuiltProposal::Independence(prop) => run_chain(
                    dyn_target,
                    &AcrossKernel::Independence(prop),
                    &jump,
                    kernel,
                    trj_core::TransPoint::new(*k0, theta0.clone()),
                    &cfg,
                ),
                BuiltProposal::ConditionalFlow(flow) => {
                    let aug = AugmentedTarget::new(dyn_target, Reference::standard_normal());
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x77);
                    let aux = aug.reference.sample_vec(aug.n_max - theta0.len(), &mut rng);
                    let init = SaturatedState::new(*k0, aug.embed(*k0, theta0, &aux));
                    run_saturated_chain(&aug, flow, &jump, kernel, init, &cfg)
                }
                BuiltProposal::StandardSaturated => {
                    let reference = match config.experiment {
                        ExperimentId::Vs => {
                            Reference::Normal { mean: 0.0, sd: trj_core::targets::VS_PRIOR_SD }
                        }
                        _ => Reference::standard_normal(),
                    };
                    let aug = AugmentedTarget::new(dyn_target, reference);
                    let map = IdentityConditional { n: aug.n_max, n_models };
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x77);
                    let aux = aug.reference.sample_vec(aug.n_max - theta0.len(), &mut rng);
                    let init = SaturatedState::new(*k0, aug.embed(*k0, theta0, &aux));
                    run_saturated_chain(&aug, &map, &jump, kernel, init, &cfg)
                }
            };
            (0..n_models)
                .map(|k| out.ks.iter().filter(|&&s| s == k).count() as f64 / out.ks.len() as f64)
                .collect()
        })
        .collect();
    Ok((0..n_models)
        .map(|k| {
            let vals: Vec<f64> = occupancies.iter().map(|o| o[k]).collect();
            let mean = trj_core::numeric::mean(&vals);
            let se = (trj_core::numeric::sample_variance(&vals) / vals.len() as f64).sqrt();
            GroundTruthRow {
                k,
                label: dyn_target.model_label(k),
                pi: mean,
                se,
                method: method.to_string(),
            }
        })
        .collect())
}

/// Compute ground truth for the configured experiment and write
/// `ground_truth.csv`.
pub fn ground_truth(
    config: &ExperimentConfig,
    config_text: &str,
    out_dir: &Path,
) -> Result<PathBuf> {
    if config.ground_truth.budget < 100_000 {
        bail!(
            "ground_truth.budget must be at least 100000 density evaluations, got {}",
            config.ground_truth.budget
        );
    }
    std::fs::create_dir_all(out_dir)?;
    let mut mb = ManifestBuilder::new(out_dir, config_text);
    let target = mb.stage("data", |mb| build_target(config, mb, out_dir))?;
    let dyn_target = target.as_dyn();
    let mut rows: Vec<GroundTruthRow> = Vec::new();
    if let Some(marginals) = dyn_target.true_marginals() {
        for (k, &pi) in marginals.iter().enumerate() {
            rows.push(GroundTruthRow {
                k,
                label: dyn_target.model_label(k),
                pi,
                se: 0.0,
                method: "analytic".into(),
            });
        }
        if (0..dyn_target.model_count()).all(|k| dyn_target.dim(k) <= 2) {
            let quad = mb.stage("quadrature", |_| {
                quadrature_marginals(dyn_target, subseed(config.seed, &[61]))
            })?;
            for (k, &pi) in quad.iter().enumerate() {
                rows.push(GroundTruthRow {
                    k,
                    label: dyn_target.model_label(k),
                    pi,
                    se: 0.0,
                    method: "quadrature".into(),
                });
            }
        }
    } else {
        // Long chains with the best training-free (or cheapest reliable)
        // in-repo proposal per experiment.
        let samples =
            mb.stage("sampling", |mb| sample_models(config, dyn_target, mb, out_dir))?;
        let kind = match config.experiment {
            ExperimentId::Vs => ProposalKind::StandardSaturated,
            ExperimentId::Fa => ProposalKind::Independence,
            _ => unreachable!("analytic targets handled above"),
        };
        let built = mb.stage("training", |mb| {
            build_proposal(kind, config, &target, &samples, mb, out_dir)
        })?;
        let start: Vec<(usize, Vec<f64>)> = (0..dyn_target.model_count())
            .map(|k| (k, samples.test[k].row(0).to_vec()))
            .collect();
        let chain_rows = mb.stage("chains", |_| {
            long_chain_rows(config, &target, &built, &samples.kernel, start, "long-chain")
        })?;
        rows.extend(chain_rows);
    }
    let path = out_dir.join("ground_truth.csv");
    let mut f = std::fs::File::create(&path)?;
    writeln!(f, "k,label,pi,se,method")?;
    for r in &rows {
        writeln!(f, "{},{},{},{},{}", r.k, r.label, r.pi, r.se, r.method)?;
    }
    drop(f);
    mb.register(&path).map_err(|e| anyhow!(e))?;
    mb.write()
}
