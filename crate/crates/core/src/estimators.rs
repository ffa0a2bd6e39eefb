//! Model-probability estimation from acceptance probabilities.
//!
//! The Bayes factor between two models is estimated as the ratio of the
//! mean acceptance probability of proposed reverse moves to that of
//! proposed forward moves; a full probability vector follows by normalizing
//! against a pivot model under a uniform model prior. The sample-based
//! variant makes exactly one across-model proposal per stored per-model
//! sample instead of reading the ledger off a chain run.

use crate::error::EstimatorError;
use crate::linalg::Matrix;
use crate::numeric::f_sf;
use crate::samplers::{
    ctrj_propose, independence_propose, trj_propose, ChainOutput, IndependenceProposal,
    JumpDistribution, ProposalRecord, SaturatedState, TrjProposalSet,
};
use crate::targets::{AugmentedTarget, TransPoint, TransdimensionalTarget};
use crate::transport::ConditionalTransport;
use rand::Rng;
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

/// Acceptance probabilities of attempted across-model moves, grouped by
/// ordered (from, to) pair.
#[derive(Debug, Clone, Default)]
pub struct AlphaLedger {
    alphas: BTreeMap<(usize, usize), Vec<f64>>,
}

impl AlphaLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, from: usize, to: usize, alpha: f64) {
        debug_assert!((0.0..=1.0).contains(&alpha));
        self.alphas.entry((from, to)).or_default().push(alpha);
    }

    /// Collect the across-model records of a chain run.
    pub fn from_proposals(proposals: &[ProposalRecord]) -> Self {
        let mut ledger = AlphaLedger::new();
        for p in proposals {
            ledger.add(p.from, p.to, p.alpha);
        }
        ledger
    }

    pub fn count(&self, from: usize, to: usize) -> usize {
        self.alphas.get(&(from, to)).map_or(0, |v| v.len())
    }

    pub fn alphas(&self, from: usize, to: usize) -> &[f64] {
        self.alphas.get(&(from, to)).map_or(&[], |v| v.as_slice())
    }

    fn mean(&self, from: usize, to: usize) -> Result<f64, EstimatorError> {
        let v = self
            .alphas
            .get(&(from, to))
            .filter(|v| !v.is_empty())
            .ok_or(EstimatorError::MissingPair { from, to })?;
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Acceptance-ratio Bayes factor estimate `B(k, k')`, the evidence ratio of
/// model `k` over model `k'`: mean acceptance of proposed `k' -> k` moves
/// over mean acceptance of proposed `k -> k'` moves.
pub fn bartolucci_bf(ledger: &AlphaLedger, k: usize, kp: usize) -> Result<f64, EstimatorError> {
    let numerator = ledger.mean(kp, k)?;
    let denominator = ledger.mean(k, kp)?;
    if denominator == 0.0 {
        return Err(EstimatorError::ZeroAcceptance { from: k, to: kp });
    }
    let b = numerator / denominator;
    if !b.is_finite() || b <= 0.0 {
        return Err(EstimatorError::NonFiniteEstimate { from: k, to: kp });
    }
    Ok(b)
}

/// Convert pairwise Bayes factors into model probabilities against a pivot,
/// valid under a uniform model prior:
/// `pi(k) = B(j,k)^{-1} (1 + sum_{i != j} B(i,j))^{-1}`.
///
/// The map must contain `B(i, j)` (evidence of model i over the pivot j)
/// for every non-pivot i; `B(j, k)^{-1}` is taken as `B(k, j)`, which is
/// the numerically identical flip of the same two means.
pub fn model_probs(
    pairwise: &BTreeMap<(usize, usize), f64>,
    pivot: usize,
    n_models: usize,
) -> Result<Vec<f64>, EstimatorError> {
    if pivot >= n_models {
        return Err(EstimatorError::InvalidPivot(pivot));
    }
    let lookup = |k: usize| -> Result<f64, EstimatorError> {
        if k == pivot {
            return Ok(1.0);
        }
        if let Some(&b) = pairwise.get(&(k, pivot)) {
            return Ok(b);
        }
        if let Some(&b) = pairwise.get(&(pivot, k)) {
            return Ok(1.0 / b);
        }
        Err(EstimatorError::MissingPair { from: k, to: pivot })
    };
    let mut column = Vec::with_capacity(n_models);
    for k in 0..n_models {
        let b = lookup(k)?;
        if !b.is_finite() || b <= 0.0 {
            return Err(EstimatorError::NonFiniteEstimate { from: k, to: pivot });
        }
        column.push(b);
    }
    let total: f64 = column.iter().sum();
    Ok(column.into_iter().map(|b| b / total).collect())
}

/// Model probabilities straight from a ledger.
pub fn model_probs_from_ledger(
    ledger: &AlphaLedger,
    pivot: usize,
    n_models: usize,
) -> Result<Vec<f64>, EstimatorError> {
    let mut pairwise = BTreeMap::new();
    for k in 0..n_models {
        if k != pivot {
            pairwise.insert((k, pivot), bartolucci_bf(ledger, k, pivot)?);
        }
    }
    model_probs(&pairwise, pivot, n_models)
}

/// Running occupancy of model `k`: element `t` is the fraction of the first
/// `t+1` states equal to `k`.
pub fn running_occupancy(chain: &ChainOutput, k: usize) -> Vec<f64> {
    running_occupancy_of(&chain.ks, k)
}

pub fn running_occupancy_of(ks: &[usize], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(ks.len());
    let mut hits = 0usize;
    for (t, &s) in ks.iter().enumerate() {
        if s == k {
            hits += 1;
        }
        out.push(hits as f64 / (t + 1) as f64);
    }
    out
}

/// Why a sample-based estimate is unusable or partially usable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EstimateFlag {
    MissingPair { from: usize, to: usize },
    ZeroAcceptance { from: usize, to: usize },
    NonFinite { from: usize, to: usize },
}

impl std::fmt::Display for EstimateFlag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimateFlag::MissingPair { from, to } => write!(f, "missing-pair-{from}-{to}"),
            EstimateFlag::ZeroAcceptance { from, to } => write!(f, "zero-acceptance-{from}-{to}"),
            EstimateFlag::NonFinite { from, to } => write!(f, "non-finite-{from}-{to}"),
        }
    }
}

/// Where an estimate's acceptance probabilities came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Chain,
    SampleBased,
}

/// One model-probability estimate. Flagged estimates carry NaN entries and
/// are excluded from summary statistics downstream (with a reported count).
#[derive(Debug, Clone)]
pub struct ModelProbEstimate {
    pub probs: Vec<f64>,
    pub replicate: usize,
    pub provenance: Provenance,
    pub flags: Vec<EstimateFlag>,
}

impl ModelProbEstimate {
    pub fn is_usable(&self) -> bool {
        self.flags.is_empty() && self.probs.iter().all(|p| p.is_finite())
    }
}

/// The across-model proposal machinery available to the sample-based
/// estimator.
pub enum MbeProposal<'a> {
    Transport(&'a TrjProposalSet),
    Conditional { map: &'a dyn ConditionalTransport, aug: &'a AugmentedTarget<'a> },
    Independence(&'a IndependenceProposal),
}

/// The sample-based estimator: one across-model proposal per stored sample
/// (the destination drawn from the jump distribution; same-model draws are
/// discarded), acceptance probabilities pooled into a ledger, converted to
/// probabilities against the pivot. No chain is run.
pub fn mbe_from_samples<R: Rng + ?Sized>(
    target: &dyn TransdimensionalTarget,
    samples: &[Matrix],
    proposal: &MbeProposal,
    jump: &JumpDistribution,
    pivot: usize,
    replicate: usize,
    rng: &mut R,
) -> (ModelProbEstimate, AlphaLedger) {
    assert_eq!(samples.len(), target.model_count());
    assert!(samples.iter().all(|s| s.rows >= 1), "every model needs at least one sample");
    let mut ledger = AlphaLedger::new();
    for (k, sample) in samples.iter().enumerate() {
        for r in 0..sample.rows {
            let to = jump.sample(k, rng);
            if to == k {
                continue;
            }
            let theta = sample.row(r).to_vec();
            let record = match proposal {
                MbeProposal::Transport(props) => {
                    let w = target.dim(to).saturating_sub(target.dim(k));
                    let aux = props.reference.sample_vec(w, rng);
                    let point = TransPoint::new(k, theta);
                    trj_propose(target, props, jump, &point, to, &aux).1
                }
                MbeProposal::Conditional { map, aug } => {
                    let w = aug.n_max - target.dim(k);
                    let aux = aug.reference.sample_vec(w, rng);
                    let xi = aug.embed(k, &theta, &aux);
                    let state = SaturatedState::new(k, xi);
                    ctrj_propose(*aug, *map, jump, &state, to).1
                }
                MbeProposal::Independence(prop) => {
                    let point = TransPoint::new(k, theta);
                    independence_propose(target, prop, jump, &point, to, rng).1
                }
            };
            ledger.add(record.from, record.to, record.alpha);
        }
    }
    let n_models = target.model_count();
    let (probs, flags) = match model_probs_from_ledger(&ledger, pivot, n_models) {
        Ok(p) => (p, Vec::new()),
        Err(e) => {
            let flag = match e {
                EstimatorError::MissingPair { from, to } => EstimateFlag::MissingPair { from, to },
                EstimatorError::ZeroAcceptance { from, to } => {
                    EstimateFlag::ZeroAcceptance { from, to }
                }
                EstimatorError::NonFiniteEstimate { from, to } => {
                    EstimateFlag::NonFinite { from, to }
                }
                EstimatorError::InvalidPivot(_) => panic!("pivot validated above"),
            };
            (vec![f64::NAN; n_models], vec![flag])
        }
    };
    (
        ModelProbEstimate { probs, replicate, provenance: Provenance::SampleBased, flags },
        ledger,
    )
}

/// One row of the replicate CSV behind the violin-style comparisons.
#[derive(Debug, Clone)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub proposal_kind: String,
    pub model_label: String,
    pub pi_hat: f64,
    pub n_train: usize,
    pub flags: String,
}

/// CSV with columns (replicate, proposal_kind, k, pi_hat, n_train, flags).
pub fn write_replicates_csv(path: &Path, rows: &[ReplicateRow]) -> crate::error::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "replicate,proposal_kind,k,pi_hat,n_train,flags")?;
    for r in rows {
        writeln!(
            f,
            "{},{},{},{},{},{}",
            r.replicate, r.proposal_kind, r.model_label, r.pi_hat, r.n_train, r.flags
        )?;
    }
    Ok(())
}

/// One-sided variance comparison: p-value against the hypothesis that the
/// `smaller` sample's variance is at least that of `larger` (small p means
/// var(smaller) < var(larger) is supported). Degenerate zero variance on
/// the smaller side yields p = 0 when the larger side has spread.
pub fn variance_ordering_p_value(larger: &[f64], smaller: &[f64]) -> f64 {
    let var_l = crate::numeric::sample_variance(larger);
    let var_s = crate::numeric::sample_variance(smaller);
    if var_s == 0.0 {
        return if var_l > 0.0 { 0.0 } else { 1.0 };
    }
    let f = var_l / var_s;
    f_sf(f, (larger.len() - 1) as f64, (smaller.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::targets::{GaussianToy, SasTarget};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn running_occupancy_counts() {
        assert_eq!(
            running_occupancy_of(&[0, 0, 1, 1], 1),
            vec![0.0, 0.0, 1.0 / 3.0, 0.5]
        );
        assert_eq!(running_occupancy_of(&[1, 1, 1], 1), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn bf_arithmetic_by_hand() {
        let mut ledger = AlphaLedger::new();
        // Forward 0 -> 1 alphas (0.2, 0.4); reverse 1 -> 0 alpha (0.9).
        ledger.add(0, 1, 0.2);
        ledger.add(0, 1, 0.4);
        ledger.add(1, 0, 0.9);
        let b = bartolucci_bf(&ledger, 0, 1).unwrap();
        assert!((b - 3.0).abs() < 1e-14, "B = {b}");
    }

    #[test]
    fn all_unit_alphas_give_unit_bf_and_uniform_probs() {
        let mut ledger = AlphaLedger::new();
        for (a, b) in [(0, 1), (1, 0), (0, 2), (2, 0), (1, 2), (2, 1)] {
            ledger.add(a, b, 1.0);
            ledger.add(a, b, 1.0);
        }
        assert_eq!(bartolucci_bf(&ledger, 0, 1).unwrap(), 1.0);
        let probs = model_probs_from_ledger(&ledger, 0, 3).unwrap();
        for p in probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn two_model_evidence_ratio_three() {
        // B(1, 0) = 3 means model 1 has three times the evidence: the
        // probabilities must be (1/4, 3/4).
        let mut pairwise = BTreeMap::new();
        pairwise.insert((1usize, 0usize), 3.0);
        let probs = model_probs(&pairwise, 0, 2).unwrap();
        assert!((probs[0] - 0.25).abs() < 1e-14);
        assert!((probs[1] - 0.75).abs() < 1e-14);
    }

    #[test]
    fn pivot_invariance_on_consistent_inputs() {
        // Consistent Bayes factors: evidence proportional to (1, 2, 5).
        let ev = [1.0, 2.0, 5.0];
        for pivot in 0..3 {
            let mut pairwise = BTreeMap::new();
            for k in 0..3 {
                if k != pivot {
                    pairwise.insert((k, pivot), ev[k] / ev[pivot]);
                }
            }
            let probs = model_probs(&pairwise, pivot, 3).unwrap();
            let total: f64 = ev.iter().sum();
            for (p, e) in probs.iter().zip(&ev) {
                assert!((p - e / total).abs() < 1e-12, "pivot {pivot}: {probs:?}");
            }
        }
    }

    #[test]
    fn four_model_normalization_identity() {
        let ev = [1.0, 3.0, 0.5, 2.5];
        let mut pairwise = BTreeMap::new();
        for k in 1..4 {
            pairwise.insert((k, 0usize), ev[k] / ev[0]);
        }
        let probs = model_probs(&pairwise, 0, 4).unwrap();
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let total: f64 = ev.iter().sum();
        for (p, e) in probs.iter().zip(&ev) {
            assert!((p - e / total).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_and_zero_pairs_are_errors() {
        let ledger = AlphaLedger::new();
        assert!(matches!(
            bartolucci_bf(&ledger, 0, 1),
            Err(EstimatorError::MissingPair { .. })
        ));
        let mut ledger = AlphaLedger::new();
        ledger.add(0, 1, 0.0);
        ledger.add(1, 0, 0.5);
        assert!(matches!(
            bartolucci_bf(&ledger, 0, 1),
            Err(EstimatorError::ZeroAcceptance { .. })
        ));
    }

    #[test]
    fn sas_exact_map_ledger_recovers_evidence_ratio() {
        // With exact transports and uniform jumps, forward (0 -> 1) alphas
        // are all 1 and reverse alphas all 1/3, so B(1, 0) = 3.
                use crate::samplers::TrjProposalSet;
        let target = SasTarget::new();
        let props = TrjProposalSet::new(target.exact_maps(), Reference::standard_normal());
        let jump = JumpDistribution::uniform(2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<Matrix> = (0..2)
            .map(|k| {
                let mut rows = Vec::new();
                while rows.len() < 2000 {
                    let p = target.sample_exact(&mut rng).unwrap();
                    if p.k == k {
                        rows.push(p.theta);
                    }
                }
                Matrix::from_rows(&rows)
            })
            .collect();
        let (est, ledger) = mbe_from_samples(
            &target,
            &samples,
            &MbeProposal::Transport(&props),
            &jump,
            0,
            0,
            &mut rng,
        );
        assert!(est.is_usable());
        assert!((est.probs[1] - 0.75).abs() < 1e-9, "probs {:?}", est.probs);
        let b = bartolucci_bf(&ledger, 1, 0).unwrap();
        assert!((b - 3.0).abs() < 1e-9, "B(1,0) = {b}");
        // Exact maps: alphas are constant within each ordered pair.
        for pair in [(0usize, 1usize), (1usize, 0usize)] {
            let alphas = ledger.alphas(pair.0, pair.1);
            let spread = alphas.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - alphas.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(spread < 1e-12, "alpha spread {spread} for {pair:?}");
        }
        // The uphill direction is exactly one.
        assert!(ledger.alphas(0, 1).iter().all(|&a| a == 1.0));
    }

    #[test]
    fn toy_mbe_matches_analytic_model_probabilities() {
        let toy = GaussianToy::simulate(15, 0.4, 0.35, 1.0, 3.0, 99);
                use crate::samplers::TrjProposalSet;
        let props = TrjProposalSet::new(toy.exact_maps(), Reference::standard_normal());
        let jump = JumpDistribution::uniform(2);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let samples: Vec<Matrix> = (0..2)
            .map(|k| {
                let mut rows = Vec::new();
                while rows.len() < 5000 {
                    let p = toy.sample_exact(&mut rng).unwrap();
                    if p.k == k {
                        rows.push(p.theta);
                    }
                }
                Matrix::from_rows(&rows)
            })
            .collect();
        let (est, _) = mbe_from_samples(
            &toy,
            &samples,
            &MbeProposal::Transport(&props),
            &jump,
            0,
            0,
            &mut rng,
        );
        let expect = toy.true_marginals().unwrap();
        for (p, e) in est.probs.iter().zip(&expect) {
            assert!((p - e).abs() < 1e-8, "probs {:?} vs {expect:?}", est.probs);
        }
    }

    #[test]
    fn variance_test_detects_ordering() {
        let tight: Vec<f64> = (0..50).map(|i| 0.5 + 1e-4 * (i as f64 % 7.0)).collect();
        let wide: Vec<f64> = (0..50).map(|i| 0.5 + 0.05 * ((i as f64 * 1.3).sin())).collect();
        let p = variance_ordering_p_value(&wide, &tight);
        assert!(p < 0.01, "p = {p}");
        let p_rev = variance_ordering_p_value(&tight, &wide);
        assert!(p_rev > 0.95, "p = {p_rev}");
    }

    #[test]
    fn replicate_csv_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("violin.csv");
        write_replicates_csv(
            &path,
            &[ReplicateRow {
                replicate: 3,
                proposal_kind: "exact".into(),
                model_label: "1".into(),
                pi_hat: 0.75,
                n_train: 1000,
                flags: String::new(),
            }],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("replicate,proposal_kind,k,pi_hat,n_train,flags"));
        assert!(text.contains("3,exact,1,0.75,1000,"));
    }
}
