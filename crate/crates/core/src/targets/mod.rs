//! Transdimensional targets: unnormalized densities over a union of
//! fixed-dimension parameter spaces, plus the saturated augmentation that
//! pads every model to the maximum dimension with reference-distributed
//! auxiliary coordinates.

mod fa;
mod sas;
mod toy;
mod vs;

pub use fa::{simulate_fa_data, FaTarget};
pub use sas::SasTarget;
pub use toy::GaussianToy;
pub use vs::{simulate_vs_data, ResidualMixture, VsTarget, VS_PRIOR_SD};

use crate::error::{Result, TrjError};
use crate::linalg::Matrix;
use crate::reference::Reference;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;

/// A point in the union space: model index plus that model's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TransPoint {
    pub k: usize,
    pub theta: Vec<f64>,
}

impl TransPoint {
    pub fn new(k: usize, theta: Vec<f64>) -> Self {
        TransPoint { k, theta }
    }
}

/// A transdimensional target: finite model set, per-model dimensions, and an
/// unnormalized log-density over the union space.
pub trait TransdimensionalTarget: Send + Sync {
    fn model_count(&self) -> usize;

    fn dim(&self, k: usize) -> usize;

    /// Unnormalized log-density. Returns negative infinity (never NaN)
    /// outside the support; panics only on wrong-dimension input.
    fn log_density(&self, point: &TransPoint) -> f64;

    fn model_label(&self, k: usize) -> String {
        format!("{k}")
    }

    /// Known marginal model probabilities, when available.
    fn true_marginals(&self) -> Option<Vec<f64>> {
        None
    }

    /// Exact per-model sampler, when available.
    fn sample_conditional_exact(&self, _k: usize, _rng: &mut dyn RngCore) -> Option<Vec<f64>> {
        None
    }

    /// Exact joint sampler: model index from the known marginals, then the
    /// per-model sampler. Available whenever both pieces are.
    fn sample_exact(&self, rng: &mut dyn RngCore) -> Option<TransPoint> {
        let marginals = self.true_marginals()?;
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = marginals.len() - 1;
        for (i, &m) in marginals.iter().enumerate() {
            acc += m;
            if u < acc {
                k = i;
                break;
            }
        }
        let theta = self.sample_conditional_exact(k, rng)?;
        Some(TransPoint::new(k, theta))
    }

    /// Which coordinates of model `k` are constrained positive; transport
    /// maps for such models operate on log-transformed coordinates.
    fn positive_coords(&self, k: usize) -> Vec<bool> {
        vec![false; self.dim(k)]
    }

    /// Positions of model `k`'s coordinates inside the saturated vector.
    /// Defaults to plain concatenation (the first `dim(k)` slots).
    fn saturated_slots(&self) -> Option<Vec<Vec<usize>>> {
        None
    }

    /// A valid starting point inside the support of model `k`.
    fn initial_point(&self, k: usize) -> TransPoint {
        TransPoint::new(k, vec![0.0; self.dim(k)])
    }

    fn n_max(&self) -> usize {
        (0..self.model_count()).map(|k| self.dim(k)).max().unwrap_or(0)
    }
}

/// The saturated target: every model padded to dimension `n_max`, with the
/// auxiliary coordinates independently distributed per the reference.
pub struct AugmentedTarget<'a> {
    pub base: &'a dyn TransdimensionalTarget,
    pub reference: Reference,
    pub n_max: usize,
    /// `slots[k]` holds the saturated positions of model k's coordinates,
    /// strictly increasing.
    pub slots: Vec<Vec<usize>>,
}

impl<'a> AugmentedTarget<'a> {
    /// Augment with the target's native slot layout (or concatenation when
    /// the target does not define one).
    pub fn new(base: &'a dyn TransdimensionalTarget, reference: Reference) -> Self {
        let n_max = base.n_max();
        let slots = base.saturated_slots().unwrap_or_else(|| {
            (0..base.model_count()).map(|k| (0..base.dim(k)).collect()).collect()
        });
        AugmentedTarget { base, reference, n_max, slots }
    }

    /// Auxiliary positions of model `k` (complement of its slots).
    pub fn aux_slots(&self, k: usize) -> Vec<usize> {
        let mut is_param = vec![false; self.n_max];
        for &s in &self.slots[k] {
            is_param[s] = true;
        }
        (0..self.n_max).filter(|&i| !is_param[i]).collect()
    }

    /// Boolean auxiliary mask per model, as consumed by conditional flows.
    pub fn aux_mask(&self) -> Vec<Vec<bool>> {
        (0..self.base.model_count())
            .map(|k| {
                let mut mask = vec![true; self.n_max];
                for &s in &self.slots[k] {
                    mask[s] = false;
                }
                mask
            })
            .collect()
    }

    /// Split a saturated vector into (theta, auxiliary block).
    pub fn split(&self, k: usize, xi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let theta: Vec<f64> = self.slots[k].iter().map(|&s| xi[s]).collect();
        let aux: Vec<f64> = self.aux_slots(k).iter().map(|&s| xi[s]).collect();
        (theta, aux)
    }

    /// Assemble a saturated vector from model parameters and auxiliaries.
    pub fn embed(&self, k: usize, theta: &[f64], aux: &[f64]) -> Vec<f64> {
        let mut xi = vec![0.0; self.n_max];
        for (&s, &v) in self.slots[k].iter().zip(theta) {
            xi[s] = v;
        }
        for (&s, &v) in self.aux_slots(k).iter().zip(aux) {
            xi[s] = v;
        }
        xi
    }

    /// Augmented log-density at a saturated point.
    pub fn log_density(&self, k: usize, xi: &[f64]) -> f64 {
        assert_eq!(xi.len(), self.n_max, "saturated vector length");
        let (theta, aux) = self.split(k, xi);
        self.base.log_density(&TransPoint::new(k, theta)) + self.reference.log_density_sum(&aux)
    }

    /// Augmented log-density from explicit (theta, auxiliary) parts; errors
    /// when the auxiliary block has the wrong length.
    pub fn log_density_parts(&self, k: usize, theta: &[f64], aux: &[f64]) -> Result<f64> {
        let expect = self.n_max - self.base.dim(k);
        if aux.len() != expect {
            return Err(TrjError::DimensionMismatch { expected: expect, got: aux.len() });
        }
        if theta.len() != self.base.dim(k) {
            return Err(TrjError::DimensionMismatch {
                expected: self.base.dim(k),
                got: theta.len(),
            });
        }
        Ok(self.base.log_density(&TransPoint::new(k, theta.to_vec()))
            + self.reference.log_density_sum(aux))
    }
}

/// Provenance of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    File { path: String },
    Synthetic { seed: u64 },
}

/// Observations (rows) plus optional covariates, with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub observations: Matrix,
    pub covariates: Option<Matrix>,
    pub source: DataSource,
}

impl Dataset {
    pub fn n_rows(&self) -> usize {
        self.observations.rows
    }

    fn validate(&self) -> Result<()> {
        if self.observations.data.iter().any(|v| !v.is_finite()) {
            return Err(TrjError::InvalidParameter("dataset has non-finite entries".into()));
        }
        if let Some(cov) = &self.covariates {
            if cov.rows != self.observations.rows {
                return Err(TrjError::DimensionMismatch {
                    expected: self.observations.rows,
                    got: cov.rows,
                });
            }
            if cov.data.iter().any(|v| !v.is_finite()) {
                return Err(TrjError::InvalidParameter("covariates have non-finite entries".into()));
            }
        }
        Ok(())
    }

    /// Load observations from a headered CSV of decimal floats. When
    /// `expect_cols` is given, a mismatching column count is an error.
    pub fn load_csv(path: &Path, expect_cols: Option<usize>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| TrjError::Csv(e.to_string()))?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| TrjError::Csv(e.to_string()))?;
            let row: std::result::Result<Vec<f64>, _> =
                record.iter().map(|f| f.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| TrjError::Csv(format!("bad float: {e}")))?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(TrjError::Csv(format!(
                        "row {} has {} columns, expected {}",
                        rows.len() + 1,
                        row.len(),
                        first.len()
                    )));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(TrjError::Csv("no data rows".into()));
        }
        if let Some(c) = expect_cols {
            if rows[0].len() != c {
                return Err(TrjError::Csv(format!(
                    "expected {c} columns, file has {}",
                    rows[0].len()
                )));
            }
        }
        let ds = Dataset {
            observations: Matrix::from_rows(&rows),
            covariates: None,
            source: DataSource::File { path: path.display().to_string() },
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Write observations (and covariates, appended column-wise) as CSV.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        let obs_cols = self.observations.cols;
        let cov_cols = self.covariates.as_ref().map_or(0, |c| c.cols);
        let mut header: Vec<String> = (0..obs_cols).map(|i| format!("y{i}")).collect();
        header.extend((0..cov_cols).map(|i| format!("x{i}")));
        writeln!(f, "{}", header.join(","))?;
        for r in 0..self.observations.rows {
            let mut fields: Vec<String> =
                self.observations.row(r).iter().map(|v| format!("{v}")).collect();
            if let Some(cov) = &self.covariates {
                fields.extend(cov.row(r).iter().map(|v| format!("{v}")));
            }
            writeln!(f, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    struct TwoModel;

    impl TransdimensionalTarget for TwoModel {
        fn model_count(&self) -> usize {
            2
        }
        fn dim(&self, k: usize) -> usize {
            k + 1
        }
        fn log_density(&self, p: &TransPoint) -> f64 {
            // Independent standard normals in every coordinate.
            p.theta.iter().map(|&v| crate::numeric::log_std_normal(v)).sum()
        }
    }

    #[test]
    fn augmented_density_full_model_equals_base() {
        let t = TwoModel;
        let aug = AugmentedTarget::new(&t, Reference::standard_normal());
        let xi = [0.4, -0.2];
        let full = aug.log_density(1, &xi);
        let base = t.log_density(&TransPoint::new(1, xi.to_vec()));
        assert_eq!(full, base);
    }

    #[test]
    fn augmented_adds_reference_terms() {
        let t = TwoModel;
        let aug = AugmentedTarget::new(&t, Reference::standard_normal());
        // Model 0 occupies slot 0; slot 1 is auxiliary at 0 which
        // contributes -0.5 ln(2 pi).
        let v = aug.log_density_parts(0, &[0.3], &[0.0]).unwrap();
        let base = t.log_density(&TransPoint::new(0, vec![0.3]));
        assert_relative_eq!(v - base, -0.9189385332046727, epsilon = 1e-12);
        assert!(aug.log_density_parts(0, &[0.3], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn augmented_marginalizes_to_base() {
        // Numerically integrate exp(augmented) over the auxiliary coordinate.
        let t = TwoModel;
        let aug = AugmentedTarget::new(&t, Reference::standard_normal());
        let theta = [0.7];
        let base = t.log_density(&TransPoint::new(0, theta.to_vec())).exp();
        let (lo, hi, steps) = (-9.0, 9.0, 8000);
        let h = (hi - lo) / steps as f64;
        let mut integral = 0.0;
        for i in 0..=steps {
            let u = lo + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            integral += w * aug.log_density_parts(0, &theta, &[u]).unwrap().exp();
        }
        integral *= h;
        assert!((integral - base).abs() / base < 1e-3, "{integral} vs {base}");
    }

    #[test]
    fn csv_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let ds = Dataset {
            observations: Matrix::from_rows(&[vec![1.5, -2.0], vec![0.25, 3.0]]),
            covariates: None,
            source: DataSource::Synthetic { seed: 0 },
        };
        ds.save_csv(&path).unwrap();
        let back = Dataset::load_csv(&path, Some(2)).unwrap();
        assert_eq!(back.observations, ds.observations);
        assert!(Dataset::load_csv(&path, Some(3)).is_err());
    }
}
