//! Transport maps: diffeomorphisms with tracked log-Jacobians.
//!
//! Every map's canonical `forward` is the target-to-reference direction, so
//! a good map pushes samples of its conditional target toward the product
//! reference distribution; `inverse` pulls reference points back to the
//! target. `forward` and `inverse` report `log|J|` of the evaluated
//! direction, which are exact negations of each other at corresponding
//! points.

mod affine;
mod conditional;
mod flow;
mod made;
mod sas;
mod spline;

pub use affine::AffineMap;
pub use conditional::{
    ConditionalSplineFlow, ConditionalTransport, IdentityConditional, PerModelConditional,
};
pub use flow::{SplineFlow, SIGMOID_CLAMP};
pub use sas::{sas, sas_inv, sas_inv_log_deriv, SasMap};
pub use spline::{params_per_spline, RQSpline, SplineDirection, DERIV_OFFSET, MIN_BIN, MIN_DERIV};

use crate::error::{Result, TrjError};
use crate::linalg::Matrix;
use crate::numeric::log_std_normal;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A diffeomorphism with forward (target-to-reference), inverse, and
/// log-abs-det-Jacobian evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TransportMap {
    Identity {
        n: usize,
    },
    ExactSas(SasMap),
    Affine(AffineMap),
    SplineFlow(SplineFlow),
    /// A conditional flow evaluated at a fixed model context.
    ConditionalFlow {
        flow: ConditionalSplineFlow,
        context: usize,
    },
    /// Elementwise log transform of the masked (positive) coordinates,
    /// used ahead of flows or affine maps for constrained parameters.
    LogPositive {
        mask: Vec<bool>,
    },
    /// Maps applied left to right in the forward direction.
    Composition {
        parts: Vec<TransportMap>,
    },
}

impl TransportMap {
    pub fn identity(n: usize) -> Self {
        TransportMap::Identity { n }
    }

    /// The exact sinh-arcsinh transport `theta -> L^{-1} Sinv_{eps,delta}(theta)`.
    pub fn exact_sas(skew: Vec<f64>, tail: Vec<f64>, chol: Matrix) -> Result<Self> {
        Ok(TransportMap::ExactSas(SasMap::new(skew, tail, chol)?))
    }

    /// Affine whitening fitted to the sample mean and covariance.
    pub fn fit_affine(samples: &Matrix) -> Result<Self> {
        Ok(TransportMap::Affine(AffineMap::fit(samples)?))
    }

    /// Compose maps, applied left to right in the forward direction.
    pub fn composition(parts: Vec<TransportMap>) -> Result<Self> {
        if parts.is_empty() {
            return Err(TrjError::InvalidParameter("empty composition".into()));
        }
        let n = parts[0].dim();
        if parts.iter().any(|p| p.dim() != n) {
            return Err(TrjError::DimensionMismatch { expected: n, got: 0 });
        }
        Ok(TransportMap::Composition { parts })
    }

    pub fn dim(&self) -> usize {
        match self {
            TransportMap::Identity { n } => *n,
            TransportMap::ExactSas(m) => m.n,
            TransportMap::Affine(m) => m.n,
            TransportMap::SplineFlow(f) => f.n,
            TransportMap::ConditionalFlow { flow, .. } => flow.n,
            TransportMap::LogPositive { mask } => mask.len(),
            TransportMap::Composition { parts } => parts[0].dim(),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(TrjError::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(TrjError::NonFiniteInput { index: i });
        }
        Ok(())
    }

    /// Target-to-reference: returns `(z, log|J_forward(theta)|)`.
    pub fn forward(&self, theta: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_input(theta)?;
        match self {
            TransportMap::Identity { .. } => Ok((theta.to_vec(), 0.0)),
            TransportMap::ExactSas(m) => m.forward(theta),
            TransportMap::Affine(m) => m.forward(theta),
            TransportMap::SplineFlow(f) => f.forward(theta),
            TransportMap::ConditionalFlow { flow, context } => flow.forward_given(*context, theta),
            TransportMap::LogPositive { mask } => {
                let mut z = theta.to_vec();
                let mut logdet = 0.0;
                for (i, z_i) in z.iter_mut().enumerate() {
                    if mask[i] {
                        if *z_i <= 0.0 {
                            return Err(TrjError::OutsideDomain(format!(
                                "log transform needs positive coordinate {i}, got {z_i}"
                            )));
                        }
                        logdet -= z_i.ln();
                        *z_i = z_i.ln();
                    }
                }
                Ok((z, logdet))
            }
            TransportMap::Composition { parts } => {
                let mut x = theta.to_vec();
                let mut logdet = 0.0;
                for part in parts {
                    let (y, ld) = part.forward(&x)?;
                    x = y;
                    logdet += ld;
                }
                Ok((x, logdet))
            }
        }
    }

    /// Reference-to-target: returns `(theta, log|J_inverse(z)|)`, which is
    /// the negation of the forward log-Jacobian at the returned point.
    pub fn inverse(&self, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_input(z)?;
        match self {
            TransportMap::Identity { .. } => Ok((z.to_vec(), 0.0)),
            TransportMap::ExactSas(m) => m.inverse(z),
            TransportMap::Affine(m) => m.inverse(z),
            TransportMap::SplineFlow(f) => f.inverse(z),
            TransportMap::ConditionalFlow { flow, context } => flow.inverse_given(*context, z),
            TransportMap::LogPositive { mask } => {
                let mut theta = z.to_vec();
                let mut logdet = 0.0;
                for (i, t) in theta.iter_mut().enumerate() {
                    if mask[i] {
                        logdet += *t;
                        *t = t.exp();
                        if !t.is_finite() {
                            return Err(TrjError::OutsideDomain(format!(
                                "exp transform overflowed at coordinate {i}"
                            )));
                        }
                    }
                }
                Ok((theta, logdet))
            }
            TransportMap::Composition { parts } => {
                let mut x = z.to_vec();
                let mut logdet = 0.0;
                for part in parts.iter().rev() {
                    let (y, ld) = part.inverse(&x)?;
                    x = y;
                    logdet += ld;
                }
                Ok((x, logdet))
            }
        }
    }

    /// Log-density of the pushback of the reference through this map:
    /// standard-normal base at `forward(theta)` plus the forward
    /// log-Jacobian (spline flows carry their own base). Negative infinity
    /// outside the domain.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        match self.forward(theta) {
            Ok((z, logdet)) => z.iter().map(|&v| log_std_normal(v)).sum::<f64>() + logdet,
            Err(TrjError::OutsideDomain(_)) => f64::NEG_INFINITY,
            Err(e) => panic!("log-density on invalid input: {e}"),
        }
    }

    /// Serialize to the documented self-describing JSON format (`kind`,
    /// dimensions, and flat row-major parameter arrays; floats round-trip
    /// bit-exactly).
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| TrjError::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| TrjError::Serialization(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        TransportMap::from_json(&std::fs::read_to_string(path)?)
    }
}
