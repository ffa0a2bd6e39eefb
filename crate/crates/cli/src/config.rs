//! Experiment configuration: a strict TOML schema. Unknown keys are
//! rejected so a typo cannot silently change an experiment.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use trj_core::training::{FlowShape, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    Sas,
    Toy,
    Vs,
    Fa,
}

impl std::fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ExperimentId::Sas => "sas",
            ExperimentId::Toy => "toy",
            ExperimentId::Vs => "vs",
            ExperimentId::Fa => "fa",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalKind {
    Exact,
    Affine,
    Flow,
    ConditionalFlow,
    Independence,
    StandardSaturated,
}

impl std::fmt::Display for ProposalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ProposalKind::Exact => "exact",
            ProposalKind::Affine => "affine",
            ProposalKind::Flow => "flow",
            ProposalKind::ConditionalFlow => "conditional-flow",
            ProposalKind::Independence => "independence",
            ProposalKind::StandardSaturated => "standard-saturated",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    #[serde(default = "default_chain_count")]
    pub count: usize,
    #[serde(default = "default_chain_steps")]
    pub steps: usize,
    #[serde(default = "default_one")]
    pub within_per_across: usize,
}

fn default_chain_count() -> usize {
    4
}
fn default_chain_steps() -> usize {
    20_000
}
fn default_one() -> usize {
    1
}

impl Default for ChainSection {
    fn default() -> Self {
        ChainSection {
            count: default_chain_count(),
            steps: default_chain_steps(),
            within_per_across: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MbeSection {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub pivot: usize,
}

fn default_replicates() -> usize {
    50
}

impl Default for MbeSection {
    fn default() -> Self {
        MbeSection { replicates: default_replicates(), pivot: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplesSection {
    /// Training-set size per model.
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    /// Test-set size per model (feeds chains starts and the sample-based
    /// estimator).
    #[serde(default = "default_n_train")]
    pub n_test: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
}

fn default_n_train() -> usize {
    2000
}
fn default_burn_in() -> usize {
    4000
}
fn default_thin() -> usize {
    5
}

impl Default for SamplesSection {
    fn default() -> Self {
        SamplesSection {
            n_train: default_n_train(),
            n_test: default_n_train(),
            burn_in: default_burn_in(),
            thin: default_thin(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_val_frac")]
    pub validation_fraction: f64,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_layers")]
    pub layers: usize,
    /// Hidden width of the conditioner layers; omitted means 32 * n.
    #[serde(default)]
    pub hidden_width: Option<usize>,
}

fn default_epochs() -> usize {
    60
}
fn default_batch() -> usize {
    256
}
fn default_lr() -> f64 {
    1e-3
}
fn default_val_frac() -> f64 {
    0.1
}
fn default_patience() -> usize {
    20
}
fn default_bins() -> usize {
    10
}
fn default_layers() -> usize {
    3
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            validation_fraction: default_val_frac(),
            patience: default_patience(),
            bins: default_bins(),
            layers: default_layers(),
            hidden_width: None,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            validation_fraction: self.validation_fraction,
            patience: self.patience,
            seed,
            shape: FlowShape { bins: self.bins, layers: self.layers, hidden: self.hidden_width },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum JumpKind {
    #[default]
    Uniform,
    Marginals,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct JumpSection {
    #[serde(default)]
    pub kind: JumpKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthSection {
    /// Total density-evaluation budget across chains.
    #[serde(default = "default_gt_budget")]
    pub budget: usize,
    #[serde(default = "default_gt_chains")]
    pub chains: usize,
}

fn default_gt_budget() -> usize {
    400_000
}
fn default_gt_chains() -> usize {
    8
}

impl Default for GroundTruthSection {
    fn default() -> Self {
        GroundTruthSection { budget: default_gt_budget(), chains: default_gt_chains() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySection {
    #[serde(default = "default_toy_n")]
    pub n_obs: usize,
    #[serde(default = "default_toy_sigma")]
    pub sigma: f64,
    #[serde(default = "default_toy_tau")]
    pub tau: f64,
    #[serde(default = "default_toy_intercept")]
    pub intercept: f64,
    #[serde(default = "default_toy_slope")]
    pub slope: f64,
}

fn default_toy_n() -> usize {
    15
}
fn default_toy_sigma() -> f64 {
    1.0
}
fn default_toy_tau() -> f64 {
    3.0
}
fn default_toy_intercept() -> f64 {
    0.4
}
fn default_toy_slope() -> f64 {
    0.35
}

impl Default for ToySection {
    fn default() -> Self {
        ToySection {
            n_obs: default_toy_n(),
            sigma: default_toy_sigma(),
            tau: default_toy_tau(),
            intercept: default_toy_intercept(),
            slope: default_toy_slope(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VsSection {
    /// Optional CSV with columns (y, x0, x1, x2); omitted means synthetic.
    #[serde(default)]
    pub data_csv: Option<PathBuf>,
    #[serde(default = "default_mix_weight")]
    pub mixture_weight: f64,
    #[serde(default = "default_wide_sd")]
    pub wide_sd: f64,
}

fn default_mix_weight() -> f64 {
    0.9
}
fn default_wide_sd() -> f64 {
    5.0
}

impl Default for VsSection {
    fn default() -> Self {
        VsSection { data_csv: None, mixture_weight: default_mix_weight(), wide_sd: default_wide_sd() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaSection {
    #[serde(default = "default_fa_d")]
    pub d: usize,
    #[serde(default = "default_fa_kset")]
    pub k_set: Vec<usize>,
    #[serde(default = "default_fa_nobs")]
    pub n_obs: usize,
    /// Number of factors of the synthetic generating model.
    #[serde(default = "default_fa_ktrue")]
    pub k_true: usize,
    /// Optional CSV with d numeric observation columns.
    #[serde(default)]
    pub data_csv: Option<PathBuf>,
}

fn default_fa_d() -> usize {
    4
}
fn default_fa_kset() -> Vec<usize> {
    vec![1, 2]
}
fn default_fa_nobs() -> usize {
    200
}
fn default_fa_ktrue() -> usize {
    1
}

impl Default for FaSection {
    fn default() -> Self {
        FaSection {
            d: default_fa_d(),
            k_set: default_fa_kset(),
            n_obs: default_fa_nobs(),
            k_true: default_fa_ktrue(),
            data_csv: None,
        }
    }
}

/// The whole experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    pub proposals: Vec<ProposalKind>,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub mbe: MbeSection,
    #[serde(default)]
    pub samples: SamplesSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub jump: JumpSection,
    #[serde(default)]
    pub ground_truth: GroundTruthSection,
    #[serde(default)]
    pub toy: ToySection,
    #[serde(default)]
    pub vs: VsSection,
    #[serde(default)]
    pub fa: FaSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok((config, text))
    }

    pub fn validate(&self) -> Result<()> {
        if self.proposals.is_empty() {
            bail!("at least one proposal kind is required");
        }
        let valid: &[ProposalKind] = match self.experiment {
            ExperimentId::Sas => {
                &[ProposalKind::Exact, ProposalKind::Affine, ProposalKind::Flow]
            }
            ExperimentId::Toy => {
                &[ProposalKind::Exact, ProposalKind::Affine, ProposalKind::Flow]
            }
            ExperimentId::Vs => &[
                ProposalKind::Affine,
                ProposalKind::Flow,
                ProposalKind::ConditionalFlow,
                ProposalKind::StandardSaturated,
            ],
            ExperimentId::Fa => {
                &[ProposalKind::Affine, ProposalKind::Flow, ProposalKind::Independence]
            }
        };
        for p in &self.proposals {
            if !valid.contains(p) {
                bail!("proposal kind `{p}` is not valid for experiment `{}`", self.experiment);
            }
        }
        if self.chain.steps == 0 || self.chain.count == 0 {
            bail!("chain count and steps must be positive");
        }
        if self.samples.n_train < 50 {
            bail!("samples.n_train must be at least 50 (flow training needs it)");
        }
        if !(self.train.validation_fraction > 0.0 && self.train.validation_fraction <= 0.5) {
            bail!("train.validation_fraction must lie in (0, 0.5]");
        }
        if let Some(path) = &self.vs.data_csv {
            if self.experiment == ExperimentId::Vs && !path.exists() {
                bail!("vs.data_csv `{}` does not exist", path.display());
            }
        }
        if let Some(path) = &self.fa.data_csv {
            if self.experiment == ExperimentId::Fa && !path.exists() {
                bail!("fa.data_csv `{}` does not exist", path.display());
            }
        }
        if self.experiment == ExperimentId::Fa {
            if self.fa.k_set.is_empty() {
                bail!("fa.k_set must not be empty");
            }
            for &k in &self.fa.k_set {
                if k == 0 || k >= self.fa.d {
                    bail!("fa.k_set entries must lie in 1..d");
                }
            }
            if !self.fa.k_set.contains(&self.fa.k_true) && self.fa.data_csv.is_none() {
                bail!("fa.k_true should be one of fa.k_set for synthetic data");
            }
        }
        if self.experiment == ExperimentId::Vs {
            if !(self.vs.mixture_weight > 0.0 && self.vs.mixture_weight < 1.0) {
                bail!("vs.mixture_weight must lie in (0, 1)");
            }
            if self.vs.wide_sd <= 0.0 {
                bail!("vs.wide_sd must be positive");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let text = r#"
experiment = "sas"
seed = 7
proposals = ["exact"]
"#;
        let c: ExperimentConfig = toml::from_str(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.chain.within_per_across, 1);
        assert_eq!(c.train.bins, 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"
experiment = "sas"
seed = 7
proposals = ["exact"]
chian = { steps = 10 }
"#;
        assert!(toml::from_str::<ExperimentConfig>(text).is_err());
        let nested = r#"
experiment = "sas"
seed = 7
proposals = ["exact"]
[chain]
stps = 10
"#;
        assert!(toml::from_str::<ExperimentConfig>(nested).is_err());
    }

    #[test]
    fn wrong_proposal_for_experiment_rejected() {
        let text = r#"
experiment = "sas"
seed = 7
proposals = ["independence"]
"#;
        let c: ExperimentConfig = toml::from_str(text).unwrap();
        assert!(c.validate().is_err());
    }
}
