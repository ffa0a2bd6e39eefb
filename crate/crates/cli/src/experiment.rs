//! The experiment pipeline: data, per-model sampling, map training, chains,
//! and sample-based replicate estimates, with every artifact checksummed
//! into the run manifest.

use crate::config::{ExperimentConfig, ExperimentId, JumpKind, ProposalKind};
use crate::manifest::ManifestBuilder;
use anyhow::{anyhow, bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use trj_core::estimators::{
    mbe_from_samples, running_occupancy_of, write_replicates_csv, MbeProposal, ReplicateRow,
};
use trj_core::linalg::Matrix;
use trj_core::reference::Reference;
use trj_core::samplers::{
    pilot_scales, run_chain, run_saturated_chain, sample_within_model, AcrossKernel, ChainConfig,
    ChainOutput, IndependenceProposal, JumpDistribution, RandomWalkKernel, SaturatedState,
    TrjProposalSet,
};
use trj_core::targets::{
    simulate_fa_data, simulate_vs_data, Dataset, FaTarget, GaussianToy, ResidualMixture,
    SasTarget, TransdimensionalTarget, VsTarget,
};
use trj_core::training::{fit_conditional_flow, fit_flow};
use trj_core::transport::{
    ConditionalSplineFlow, IdentityConditional, TransportMap,
};
use trj_core::AugmentedTarget;

/// Deterministic seed derivation (splitmix-style avalanche over tags).
pub fn subseed(base: u64, tags: &[u64]) -> u64 {
    let mut x = base;
    for &t in tags {
        x = x.wrapping_add(0x9e3779b97f4a7c15).wrapping_add(t.wrapping_mul(0xbf58476d1ce4e5b9));
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
        x ^= x >> 31;
    }
    x
}

/// The concrete benchmark target of a run.
pub enum TargetKind {
    Sas(SasTarget),
    Toy(GaussianToy),
    Vs(VsTarget),
    Fa(FaTarget),
}

impl TargetKind {
    pub fn as_dyn(&self) -> &dyn TransdimensionalTarget {
        match self {
            TargetKind::Sas(t) => t,
            TargetKind::Toy(t) => t,
            TargetKind::Vs(t) => t,
            TargetKind::Fa(t) => t,
        }
    }

    pub fn exact_maps(&self) -> Option<Vec<TransportMap>> {
        match self {
            TargetKind::Sas(t) => Some(t.exact_maps()),
            TargetKind::Toy(t) => Some(t.exact_maps()),
            _ => None,
        }
    }
}

/// Stage 1: build the target (generating or ingesting data as needed).
pub fn build_target(
    config: &ExperimentConfig,
    mb: &mut ManifestBuilder,
    out_dir: &Path,
) -> Result<TargetKind> {
    match config.experiment {
        ExperimentId::Sas => Ok(TargetKind::Sas(SasTarget::new())),
        ExperimentId::Toy => {
            let t = &config.toy;
            Ok(TargetKind::Toy(GaussianToy::simulate(
                t.n_obs,
                t.intercept,
                t.slope,
                t.sigma,
                t.tau,
                subseed(config.seed, &[1]),
            )))
        }
        ExperimentId::Vs => {
            let data = match &config.vs.data_csv {
                Some(path) => {
                    // Expect columns (y, x0, x1, x2).
                    let raw = Dataset::load_csv(path, Some(4))?;
                    let rows = raw.observations.rows;
                    let y: Vec<Vec<f64>> =
                        (0..rows).map(|r| vec![raw.observations.row(r)[0]]).collect();
                    let x: Vec<Vec<f64>> =
                        (0..rows).map(|r| raw.observations.row(r)[1..4].to_vec()).collect();
                    Dataset {
                        observations: Matrix::from_rows(&y),
                        covariates: Some(Matrix::from_rows(&x)),
                        source: raw.source,
                    }
                }
                None => simulate_vs_data(subseed(config.seed, &[2])),
            };
            let path = out_dir.join("data.csv");
            data.save_csv(&path)?;
            mb.register(&path)?;
            let mixture = ResidualMixture {
                narrow_weight: config.vs.mixture_weight,
                wide_sd: config.vs.wide_sd,
            };
            Ok(TargetKind::Vs(VsTarget::new(&data, mixture)))
        }
        ExperimentId::Fa => {
            let d = config.fa.d;
            let data = match &config.fa.data_csv {
                Some(path) => Dataset::load_csv(path, Some(d))?,
                None => {
                    // A deterministic generating model with one fixed loading
                    // pattern per factor.
                    let kt = config.fa.k_true;
                    let mut beta = Matrix::zeros(d, kt);
                    let mut rng = ChaCha8Rng::seed_from_u64(subseed(config.seed, &[3]));
                    for j in 0..kt {
                        beta[(j, j)] = 1.0;
                        for i in (j + 1)..d {
                            use rand::Rng;
                            beta[(i, j)] = rng.random_range(-0.8..0.8);
                        }
                    }
                    let lambda: Vec<f64> = (0..d)
                        .map(|_| {
                            use rand::Rng;
                            rng.random_range(0.3..0.8)
                        })
                        .collect();
                    simulate_fa_data(&beta, &lambda, config.fa.n_obs, subseed(config.seed, &[4]))
                }
            };
            let path = out_dir.join("data.csv");
            data.save_csv(&path)?;
            mb.register(&path)?;
            Ok(TargetKind::Fa(FaTarget::new(&data, config.fa.k_set.clone())))
        }
    }
}

/// Per-model sample sets plus the tuned within-model kernel.
pub struct ModelSamples {
    pub train: Vec<Matrix>,
    pub test: Vec<Matrix>,
    pub kernel: RandomWalkKernel,
}

/// Stage 2: independent training and test samples of every conditional
/// target, exact where available, by thinned random-walk chains otherwise
/// (with effective-sample-size diagnostics written out).
pub fn sample_models(
    config: &ExperimentConfig,
    target: &dyn TransdimensionalTarget,
    mb: &mut ManifestBuilder,
    out_dir: &Path,
) -> Result<ModelSamples> {
    let n_models = target.model_count();
    let scales = pilot_scales(target, 3000, subseed(config.seed, &[10]));
    let kernel = match config.experiment {
        // The variable selection posteriors are multimodal; mix in
        // occasional wide steps so chains cross between modes.
        ExperimentId::Vs => {
            RandomWalkKernel::with_mixture(scales, vec![(0.8, 1.0), (0.2, 6.0)])
                .map_err(|e| anyhow!(e.to_string()))?
        }
        _ => RandomWalkKernel::new(scales),
    };
    let exact = target.sample_conditional_exact(0, &mut ChaCha8Rng::seed_from_u64(0)).is_some();
    let mut train = Vec::with_capacity(n_models);
    let mut test = Vec::with_capacity(n_models);
    let mut diag_rows: Vec<String> = Vec::new();
    for k in 0..n_models {
        for (purpose, n, out) in [
            (0u64, config.samples.n_train, &mut train),
            (1u64, config.samples.n_test, &mut test),
        ] {
            let seed = subseed(config.seed, &[20, k as u64, purpose]);
            let m = if exact {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rows: Vec<Vec<f64>> = (0..n)
                    .map(|_| target.sample_conditional_exact(k, &mut rng).expect("exact sampler"))
                    .collect();
                Matrix::from_rows(&rows)
            } else {
                let m = sample_within_model(
                    target,
                    k,
                    &kernel,
                    n,
                    config.samples.burn_in,
                    config.samples.thin,
                    seed,
                );
                for c in 0..m.cols {
                    let col: Vec<f64> = (0..m.rows).map(|r| m.row(r)[c]).collect();
                    let ess = trj_core::diagnostics::effective_sample_size(&col);
                    diag_rows.push(format!("{k},{purpose},{c},{n},{ess}"));
                }
                m
            };
            out.push(m);
        }
    }
    if !diag_rows.is_empty() {
        let path = out_dir.join("sampling_diagnostics.csv");
        let mut f = std::fs::File::create(&path)?;
        writeln!(f, "model,purpose,coordinate,n_samples,ess")?;
        for row in diag_rows {
            writeln!(f, "{row}")?;
        }
        drop(f);
        mb.register(&path)?;
    }
    Ok(ModelSamples { train, test, kernel })
}

/// A ready-to-run across-model proposal.
pub enum BuiltProposal {
    Trj(TrjProposalSet),
    Independence(IndependenceProposal),
    /// Trained conditional flow over the saturated space (standard normal
    /// reference).
    ConditionalFlow(ConditionalSplineFlow),
    /// Identity maps on the saturated space with the prior as reference.
    StandardSaturated,
}

/// Log-transform the masked (positive) coordinates of a sample matrix.
fn log_transform(samples: &Matrix, mask: &[bool]) -> Matrix {
    let mut out = samples.clone();
    for r in 0..out.rows {
        let base = r * out.cols;
        for c in 0..out.cols {
            if mask[c] {
                out.data[base + c] = out.data[base + c].ln();
            }
        }
    }
    out
}

/// Wrap a fitted map with the positive-coordinate log transform when the
/// model has constrained coordinates.
fn with_positivity(map: TransportMap, mask: Vec<bool>) -> Result<TransportMap> {
    if mask.iter().any(|&m| m) {
        TransportMap::composition(vec![TransportMap::LogPositive { mask }, map])
            .map_err(|e| anyhow!(e.to_string()))
    } else {
        Ok(map)
    }
}

/// Stage 3 worker: construct (training as needed) the proposal for one
/// requested kind. Trained maps are cached in `maps/` keyed by the config
/// hash, so reruns of an identical config reload instead of refitting.
pub fn build_proposal(
    kind: ProposalKind,
    config: &ExperimentConfig,
    target: &TargetKind,
    samples: &ModelSamples,
    mb: &mut ManifestBuilder,
    out_dir: &Path,
) -> Result<BuiltProposal> {
    let dyn_target = target.as_dyn();
    let n_models = dyn_target.model_count();
    let maps_dir = out_dir.join("maps");
    std::fs::create_dir_all(&maps_dir)?;
    let hash = mb.hash_prefix();
    match kind {
        ProposalKind::Exact => {
            let maps = target
                .exact_maps()
                .ok_or_else(|| anyhow!("target has no exact transports"))?;
            Ok(BuiltProposal::Trj(TrjProposalSet::new(maps, Reference::standard_normal())))
        }
        ProposalKind::Affine => {
            let mut maps = Vec::with_capacity(n_models);
            for k in 0..n_models {
                let mask = dyn_target.positive_coords(k);
                let transformed = log_transform(&samples.train[k], &mask);
                let fitted =
                    TransportMap::fit_affine(&transformed).map_err(|e| anyhow!(e.to_string()))?;
                maps.push(with_positivity(fitted, mask)?);
            }
            Ok(BuiltProposal::Trj(TrjProposalSet::new(maps, Reference::standard_normal())))
        }
        ProposalKind::Flow => {
            let mut maps = Vec::with_capacity(n_models);
            for k in 0..n_models {
                let cache = maps_dir.join(format!("flow-{k}-{hash}.json"));
                let mask = dyn_target.positive_coords(k);
                let map = if cache.exists() {
                    TransportMap::load(&cache).map_err(|e| anyhow!(e.to_string()))?
                } else {
                    let transformed = log_transform(&samples.train[k], &mask);
                    let tc = config.train.to_train_config(subseed(config.seed, &[30, k as u64]));
                    let (flow, report) =
                        fit_flow(&transformed, &tc).map_err(|e| anyhow!(e.to_string()))?;
                    let report_path = out_dir.join(format!("train-flow-{k}.csv"));
                    report.write_csv(&report_path).map_err(|e| anyhow!(e.to_string()))?;
                    mb.register(&report_path)?;
                    let map = with_positivity(TransportMap::SplineFlow(flow), mask.clone())?;
                    map.save(&cache).map_err(|e| anyhow!(e.to_string()))?;
                    map
                };
                mb.register(&cache)?;
                maps.push(map);
            }
            Ok(BuiltProposal::Trj(TrjProposalSet::new(maps, Reference::standard_normal())))
        }
        ProposalKind::Independence => {
            let fa = match target {
                TargetKind::Fa(t) => t,
                _ => bail!("independence proposals are implemented for the factor analysis target"),
            };
            let prop = IndependenceProposal::fit_factor_analysis(fa, &samples.train)
                .map_err(|e| anyhow!(e.to_string()))?;
            Ok(BuiltProposal::Independence(prop))
        }
        ProposalKind::ConditionalFlow => {
            let reference = Reference::standard_normal();
            let aug = AugmentedTarget::new(dyn_target, reference);
            let cache = maps_dir.join(format!("conditional-flow-{hash}.json"));
            let flow = if cache.exists() {
                let text = std::fs::read_to_string(&cache)?;
                serde_json::from_str(&text)?
            } else {
                // Saturated training rows: embed each model's samples with
                // fresh reference auxiliaries.
                let mut rng = ChaCha8Rng::seed_from_u64(subseed(config.seed, &[31]));
                let mut rows = Vec::new();
                let mut context = Vec::new();
                for k in 0..n_models {
                    let aux_len = aug.n_max - dyn_target.dim(k);
                    for r in 0..samples.train[k].rows {
                        let aux = reference.sample_vec(aux_len, &mut rng);
                        rows.push(aug.embed(k, samples.train[k].row(r), &aux));
                        context.push(k);
                    }
                }
                let saturated = Matrix::from_rows(&rows);
                let tc = config.train.to_train_config(subseed(config.seed, &[32]));
                let (flow, report) = fit_conditional_flow(
                    &saturated,
                    &context,
                    n_models,
                    aug.aux_mask(),
                    reference,
                    &tc,
                )
                .map_err(|e| anyhow!(e.to_string()))?;
                let report_path = out_dir.join("train-conditional-flow.csv");
                report.write_csv(&report_path).map_err(|e| anyhow!(e.to_string()))?;
                mb.register(&report_path)?;
                std::fs::write(&cache, serde_json::to_string_pretty(&flow)?)?;
                flow
            };
            mb.register(&cache)?;
            Ok(BuiltProposal::ConditionalFlow(flow))
        }
        ProposalKind::StandardSaturated => Ok(BuiltProposal::StandardSaturated),
    }
}

/// The saturated reference of the classic fixed-auxiliary proposal: the
/// coefficient prior.
fn standard_saturated_reference(config: &ExperimentConfig) -> Reference {
    match config.experiment {
        ExperimentId::Vs => Reference::Normal { mean: 0.0, sd: trj_core::targets::VS_PRIOR_SD },
        _ => Reference::standard_normal(),
    }
}

fn jump_for(
    config: &ExperimentConfig,
    target: &dyn TransdimensionalTarget,
) -> Result<JumpDistribution> {
    match config.jump.kind {
        JumpKind::Uniform => Ok(JumpDistribution::uniform(target.model_count())),
        JumpKind::Marginals => {
            let m = target
                .true_marginals()
                .ok_or_else(|| anyhow!("jump.kind = marginals needs known model probabilities"))?;
            JumpDistribution::from_marginals(&m).map_err(|e| anyhow!(e.to_string()))
        }
    }
}

/// Stage 4: run the configured chains for one proposal kind, writing the
/// per-chain trace and running-occupancy files. Returns the chain outputs.
pub fn run_chains_stage(
    kind: ProposalKind,
    config: &ExperimentConfig,
    target: &TargetKind,
    built: &BuiltProposal,
    samples: &ModelSamples,
    mb: &mut ManifestBuilder,
    out_dir: &Path,
) -> Result<Vec<ChainOutput>> {
    let dyn_target = target.as_dyn();
    let jump = jump_for(config, dyn_target)?;
    let n_models = dyn_target.model_count();
    let chain_seeds: Vec<u64> = (0..config.chain.count)
        .map(|i| subseed(config.seed, &[40, kind_tag(kind), i as u64]))
        .collect();
    let outputs: Vec<ChainOutput> = chain_seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| {
            let cfg = ChainConfig {
                n_steps: config.chain.steps,
                seed,
                within_per_across: config.chain.within_per_across,
                record_theta: false,
            };
            let start_model = i % n_models;
            let start_theta = samples.test[start_model]
                .row(i / n_models % samples.test[start_model].rows)
                .to_vec();
            match built {
                BuiltProposal::Trj(props) => run_chain(
                    dyn_target,
                    &AcrossKernel::Transport(props),
                    &jump,
                    &samples.kernel,
                    trj_core::TransPoint::new(start_model, start_theta),
                    &cfg,
                ),
                BuiltProposal::Independence(prop) => run_chain(
                    dyn_target,
                    &AcrossKernel::Independence(prop),
                    &jump,
                    &samples.kernel,
                    trj_core::TransPoint::new(start_model, start_theta),
                    &cfg,
                ),
                BuiltProposal::ConditionalFlow(flow) => {
                    let aug = AugmentedTarget::new(dyn_target, Reference::standard_normal());
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
                    let aux =
                        aug.reference.sample_vec(aug.n_max - dyn_target.dim(start_model), &mut rng);
                    let init =
                        SaturatedState::new(start_model, aug.embed(start_model, &start_theta, &aux));
                    run_saturated_chain(&aug, flow, &jump, &samples.kernel, init, &cfg)
                }
                BuiltProposal::StandardSaturated => {
                    let reference = standard_saturated_reference(config);
                    let aug = AugmentedTarget::new(dyn_target, reference);
                    let map = IdentityConditional { n: aug.n_max, n_models };
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
                    let aux =
                        aug.reference.sample_vec(aug.n_max - dyn_target.dim(start_model), &mut rng);
                    let init =
                        SaturatedState::new(start_model, aug.embed(start_model, &start_theta, &aux));
                    run_saturated_chain(&aug, &map, &jump, &samples.kernel, init, &cfg)
                }
            }
        })
        .collect();
    for (i, out) in outputs.iter().enumerate() {
        let chain_path = out_dir.join(format!("chain-{kind}-{i}.csv"));
        out.write_csv(&chain_path).map_err(|e| anyhow!(e.to_string()))?;
        mb.register(&chain_path)?;
        let occ_path = out_dir.join(format!("occupancy-{kind}-{i}.csv"));
        write_occupancy_csv(&occ_path, dyn_target, out)?;
        mb.register(&occ_path)?;
    }
    Ok(outputs)
}

fn kind_tag(kind: ProposalKind) -> u64 {
    match kind {
        ProposalKind::Exact => 0,
        ProposalKind::Affine => 1,
        ProposalKind::Flow => 2,
        ProposalKind::ConditionalFlow => 3,
        ProposalKind::Independence => 4,
        ProposalKind::StandardSaturated => 5,
    }
}

fn write_occupancy_csv(
    path: &Path,
    target: &dyn TransdimensionalTarget,
    out: &ChainOutput,
) -> Result<()> {
    let n_models = target.model_count();
    let per_model: Vec<Vec<f64>> =
        (0..n_models).map(|k| running_occupancy_of(&out.ks, k)).collect();
    let mut f = std::fs::File::create(path)?;
    let labels: Vec<String> = (0..n_models).map(|k| format!("occ_{}", target.model_label(k))).collect();
    writeln!(f, "step,{}", labels.join(","))?;
    for t in 0..out.ks.len() {
        let vals: Vec<String> = per_model.iter().map(|o| format!("{}", o[t])).collect();
        writeln!(f, "{},{}", t, vals.join(","))?;
    }
    Ok(())
}

/// Stage 5: sample-based replicate estimates for every requested kind, all
/// pooled into one violin CSV plus a summary with flag counts.
pub fn run_mbe_stage(
    config: &ExperimentConfig,
    target: &TargetKind,
    built: &[(ProposalKind, BuiltProposal)],
    samples: &ModelSamples,
    mb: &mut ManifestBuilder,
    out_dir: &Path,
) -> Result<()> {
    let dyn_target = target.as_dyn();
    let jump = jump_for(config, dyn_target)?;
    let n_models = dyn_target.model_count();
    let mut rows: Vec<ReplicateRow> = Vec::new();
    let mut summary: Vec<String> = Vec::new();
    for (kind, proposal) in built {
        let estimates: Vec<_> = (0..config.mbe.replicates)
            .into_par_iter()
            .map(|r| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(subseed(config.seed, &[50, kind_tag(*kind), r as u64]));
                match proposal {
                    BuiltProposal::Trj(props) => mbe_from_samples(
                        dyn_target,
                        &samples.test,
                        &MbeProposal::Transport(props),
                        &jump,
                        config.mbe.pivot,
                        r,
                        &mut rng,
                    )
                    .0,
                    BuiltProposal::Independence(prop) => mbe_from_samples(
                        dyn_target,
                        &samples.test,
                        &MbeProposal::Independence(prop),
                        &jump,
                        config.mbe.pivot,
                        r,
                        &mut rng,
                    )
                    .0,
                    BuiltProposal::ConditionalFlow(flow) => {
                        let aug = AugmentedTarget::new(dyn_target, Reference::standard_normal());
                        mbe_from_samples(
                            dyn_target,
                            &samples.test,
                            &MbeProposal::Conditional { map: flow, aug: &aug },
                            &jump,
                            config.mbe.pivot,
                            r,
                            &mut rng,
                        )
                        .0
                    }
                    BuiltProposal::StandardSaturated => {
                        let reference = standard_saturated_reference(config);
                        let aug = AugmentedTarget::new(dyn_target, reference);
                        let map = IdentityConditional { n: aug.n_max, n_models };
                        mbe_from_samples(
                            dyn_target,
                            &samples.test,
                            &MbeProposal::Conditional { map: &map, aug: &aug },
                            &jump,
                            config.mbe.pivot,
                            r,
                            &mut rng,
                        )
                        .0
                    }
                }
            })
            .collect();
        let flagged = estimates.iter().filter(|e| !e.is_usable()).count();
        for est in &estimates {
            let flags =
                est.flags.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(";");
            for k in 0..n_models {
                rows.push(ReplicateRow {
                    replicate: est.replicate,
                    proposal_kind: kind.to_string(),
                    model_label: dyn_target.model_label(k),
                    pi_hat: est.probs[k],
                    n_train: config.samples.n_train,
                    flags: flags.clone(),
                });
            }
        }
        for k in 0..n_models {
            let usable: Vec<f64> = estimates
                .iter()
                .filter(|e| e.is_usable())
                .map(|e| e.probs[k])
                .collect();
            let (mean, sd) = if usable.len() >= 2 {
                (
                    trj_core::numeric::mean(&usable),
                    trj_core::numeric::sample_variance(&usable).sqrt(),
                )
            } else if usable.len() == 1 {
                (usable[0], 0.0)
            } else {
                (f64::NAN, f64::NAN)
            };
            summary.push(format!(
                "{kind},{},{},{},{},{}",
                dyn_target.model_label(k),
                mean,
                sd,
                usable.len(),
                flagged
            ));
        }
    }
    let violin_path = out_dir.join("mbe_replicates.csv");
    write_replicates_csv(&violin_path, &rows).map_err(|e| anyhow!(e.to_string()))?;
    mb.register(&violin_path)?;
    let summary_path = out_dir.join("mbe_summary.csv");
    let mut f = std::fs::File::create(&summary_path)?;
    writeln!(f, "proposal_kind,k,mean,sd,n_usable,n_flagged")?;
    for line in summary {
        writeln!(f, "{line}")?;
    }
    drop(f);
    mb.register(&summary_path)?;
    Ok(())
}

/// Run the whole experiment; returns the manifest path.
pub fn run_experiment(
    config: &ExperimentConfig,
    config_text: &str,
    out_dir: &Path,
    dry_run: bool,
) -> Result<PathBuf> {
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let mut mb = ManifestBuilder::new(out_dir, config_text);
    if dry_run {
        config.validate()?;
        return mb.write();
    }
    let target = mb.stage("data", |mb| build_target(config, mb, out_dir))?;
    let samples = mb.stage("sampling", |mb| sample_models(config, target.as_dyn(), mb, out_dir))?;
    let built = mb.stage("training", |mb| {
        config
            .proposals
            .iter()
            .map(|&kind| {
                build_proposal(kind, config, &target, &samples, mb, out_dir).map(|b| (kind, b))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    mb.stage("chains", |mb| {
        for (kind, proposal) in &built {
            run_chains_stage(*kind, config, &target, proposal, &samples, mb, out_dir)?;
        }
        Ok(())
    })?;
    mb.stage("mbe", |mb| run_mbe_stage(config, &target, &built, &samples, mb, out_dir))?;
    mb.write()
}
