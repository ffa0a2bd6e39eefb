//! Masked autoregressive rational-quadratic spline flows.
//!
//! The map is a sandwich `logit . F . sigmoid . s` in the target-to-reference
//! direction, where `s` is a frozen elementwise standardization fitted to the
//! training sample and `F` is a stack of masked autoregressive spline layers
//! acting on [0,1]^n with the coordinate order reversed between layers. The
//! base distribution on reference space is standard normal.

use crate::autodiff::{Tape, Var};
use crate::error::{Result, TrjError};
use crate::numeric::{log_std_normal, sigmoid};
use crate::transport::made::Conditioner;
use crate::transport::spline::{
    decode_spline_tape, params_per_spline, spline_forward_tape, RQSpline,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Sigmoid outputs closer than this to {0, 1} are treated as outside the
/// map's domain rather than silently saturating.
pub const SIGMOID_CLAMP: f64 = 1e-7;

/// A trainable spline flow with standard-normal base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineFlow {
    pub n: usize,
    pub bins: usize,
    pub n_layers: usize,
    pub hidden: usize,
    /// Frozen standardization center (per-coordinate sample mean).
    pub center: Vec<f64>,
    /// Frozen standardization scale (per-coordinate reciprocal sd), positive.
    pub scale: Vec<f64>,
    /// All conditioner parameters, flat, layer-major.
    pub params: Vec<f64>,
    pub(crate) conditioner: Conditioner,
}

impl SplineFlow {
    /// A fresh flow whose spline layers start at the identity, so the whole
    /// map initially equals the standardization sandwich.
    pub fn new(
        n: usize,
        bins: usize,
        n_layers: usize,
        hidden: usize,
        center: Vec<f64>,
        scale: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        if n == 0 || bins == 0 || n_layers == 0 || hidden == 0 {
            return Err(TrjError::InvalidParameter("flow sizes must be positive".into()));
        }
        if center.len() != n || scale.len() != n {
            return Err(TrjError::DimensionMismatch { expected: n, got: center.len() });
        }
        if scale.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(TrjError::InvalidParameter("standardization scale must be positive".into()));
        }
        let conditioner = Conditioner::new(n, 0, hidden, params_per_spline(bins));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(n_layers * conditioner.param_count());
        for _ in 0..n_layers {
            params.extend(conditioner.init_params(&mut rng));
        }
        Ok(SplineFlow { n, bins, n_layers, hidden, center, scale, params, conditioner })
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(TrjError::DimensionMismatch { expected: self.n, got: x.len() });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(TrjError::NonFiniteInput { index: i });
        }
        Ok(())
    }

    /// Target-to-reference evaluation with the given parameter vector
    /// (training evaluates candidate parameters without mutating the flow).
    pub fn forward_with(&self, params: &[f64], theta: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_input(theta)?;
        let mut logdet = 0.0;
        let mut x = vec![0.0; self.n];
        for i in 0..self.n {
            let v = self.scale[i] * (theta[i] - self.center[i]);
            let p = sigmoid(v);
            if !(SIGMOID_CLAMP..=1.0 - SIGMOID_CLAMP).contains(&p) {
                return Err(TrjError::OutsideDomain(format!(
                    "sigmoid sandwich saturated at coordinate {i} (standardized value {v:.3})"
                )));
            }
            logdet += self.scale[i].ln() + (p * (1.0 - p)).ln();
            x[i] = p;
        }
        logdet += stack_forward(&self.conditioner, params, self.n_layers, &[], &mut x)?;
        let mut z = vec![0.0; self.n];
        for i in 0..self.n {
            let p = x[i];
            z[i] = p.ln() - (1.0 - p).ln();
            logdet -= (p * (1.0 - p)).ln();
            if !z[i].is_finite() {
                return Err(TrjError::OutsideDomain(format!(
                    "spline output saturated the logit at coordinate {i}"
                )));
            }
        }
        Ok((z, logdet))
    }

    pub fn forward(&self, theta: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.forward_with(&self.params, theta)
    }

    /// Reference-to-target evaluation (sequential autoregressive inverse).
    pub fn inverse(&self, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_input(z)?;
        let mut logdet = 0.0;
        let mut x = vec![0.0; self.n];
        for i in 0..self.n {
            let p = sigmoid(z[i]);
            if !(SIGMOID_CLAMP..=1.0 - SIGMOID_CLAMP).contains(&p) {
                return Err(TrjError::OutsideDomain(format!(
                    "reference input {} saturated the sigmoid at coordinate {i}",
                    z[i]
                )));
            }
            logdet += (p * (1.0 - p)).ln();
            x[i] = p;
        }
        logdet += stack_inverse(&self.conditioner, &self.params, self.n_layers, &[], &mut x)?;
        let mut theta = vec![0.0; self.n];
        for i in 0..self.n {
            let p = x[i];
            theta[i] = (p.ln() - (1.0 - p).ln()) / self.scale[i] + self.center[i];
            logdet -= (p * (1.0 - p)).ln() + self.scale[i].ln();
            if !theta[i].is_finite() {
                return Err(TrjError::OutsideDomain(format!(
                    "inverse saturated at coordinate {i}"
                )));
            }
        }
        Ok((theta, logdet))
    }

    /// Log-density of the flow model at `theta`: standard-normal base at the
    /// forward image plus the forward log-Jacobian. Returns negative
    /// infinity outside the map's domain.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        self.log_density_with(&self.params, theta)
    }

    pub fn log_density_with(&self, params: &[f64], theta: &[f64]) -> f64 {
        match self.forward_with(params, theta) {
            Ok((z, logdet)) => z.iter().map(|&v| log_std_normal(v)).sum::<f64>() + logdet,
            Err(TrjError::OutsideDomain(_)) => f64::NEG_INFINITY,
            Err(e) => panic!("flow log-density on invalid input: {e}"),
        }
    }

    /// Tape recording of `log_density_with` for gradient computation. The
    /// tape's parameter block must hold this flow's (candidate) parameters.
    pub(crate) fn log_density_tape(&self, tape: &mut Tape, theta: &[f64]) -> Result<Var> {
        self.check_input(theta)?;
        let mut const_logdet = 0.0;
        let mut x = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let v = self.scale[i] * (theta[i] - self.center[i]);
            let p = sigmoid(v);
            if !(SIGMOID_CLAMP..=1.0 - SIGMOID_CLAMP).contains(&p) {
                return Err(TrjError::OutsideDomain(format!(
                    "sigmoid sandwich saturated at coordinate {i} (standardized value {v:.3})"
                )));
            }
            const_logdet += self.scale[i].ln() + (p * (1.0 - p)).ln();
            x.push(tape.constant(p));
        }
        let mut terms =
            stack_forward_tape(tape, &self.conditioner, self.n_layers, 0, &[], &mut x)?;
        for &xi in &x {
            terms.push(logit_and_base_tape(tape, xi));
        }
        let cl = tape.constant(const_logdet);
        terms.push(cl);
        Ok(tape.sum(&terms))
    }
}

/// Apply the masked autoregressive spline stack in the forward direction.
/// `x` is mutated in place within [0,1]^n; returns the stack's log-Jacobian.
pub(crate) fn stack_forward(
    cond: &Conditioner,
    params: &[f64],
    n_layers: usize,
    ctx: &[f64],
    x: &mut Vec<f64>,
) -> Result<f64> {
    let n = x.len();
    let per_layer = cond.param_count();
    debug_assert_eq!(params.len(), n_layers * per_layer);
    let opc = cond.out_per_coord;
    let mut out = vec![0.0; n * opc];
    let mut input = vec![0.0; n + ctx.len()];
    let mut logdet = 0.0;
    for l in 0..n_layers {
        if l > 0 {
            x.reverse();
        }
        input[..n].copy_from_slice(x);
        input[n..].copy_from_slice(ctx);
        cond.eval(&params[l * per_layer..(l + 1) * per_layer], &input, &mut out);
        for i in 0..n {
            let spline = RQSpline::from_unconstrained(&out[i * opc..(i + 1) * opc], cond_bins(opc));
            let (y, ld) = spline.forward(x[i])?;
            x[i] = y;
            logdet += ld;
        }
    }
    // Keep the net coordinate order of the stack equal to the identity so a
    // freshly initialized flow is exactly the standardization sandwich.
    if n_layers % 2 == 0 {
        x.reverse();
    }
    Ok(logdet)
}

/// Inverse of [`stack_forward`].
pub(crate) fn stack_inverse(
    cond: &Conditioner,
    params: &[f64],
    n_layers: usize,
    ctx: &[f64],
    x: &mut Vec<f64>,
) -> Result<f64> {
    let n = x.len();
    let per_layer = cond.param_count();
    let opc = cond.out_per_coord;
    let mut out = vec![0.0; n * opc];
    let mut input = vec![0.0; n + ctx.len()];
    let mut logdet = 0.0;
    if n_layers % 2 == 0 {
        x.reverse();
    }
    for l in (0..n_layers).rev() {
        let lp = &params[l * per_layer..(l + 1) * per_layer];
        let y = x.clone();
        // Sequential inverse: coordinate i's conditioner inputs are the
        // already-recovered coordinates < i.
        for i in 0..n {
            input[..n].copy_from_slice(x);
            input[n..].copy_from_slice(ctx);
            cond.eval(lp, &input, &mut out);
            let spline = RQSpline::from_unconstrained(&out[i * opc..(i + 1) * opc], cond_bins(opc));
            let (xi, ld) = spline.inverse(y[i])?;
            x[i] = xi;
            logdet += ld;
        }
        if l > 0 {
            x.reverse();
        }
    }
    Ok(logdet)
}

/// Tape recording of [`stack_forward`]. Returns the per-coordinate
/// log-Jacobian terms; `param_base` locates the first layer's parameters in
/// the tape parameter block.
pub(crate) fn stack_forward_tape(
    tape: &mut Tape,
    cond: &Conditioner,
    n_layers: usize,
    param_base: usize,
    ctx: &[Var],
    x: &mut Vec<Var>,
) -> Result<Vec<Var>> {
    let n = x.len();
    let per_layer = cond.param_count();
    let opc = cond.out_per_coord;
    let mut out: Vec<Var> = Vec::new();
    let mut terms = Vec::new();
    for l in 0..n_layers {
        if l > 0 {
            x.reverse();
        }
        let mut input: Vec<Var> = Vec::with_capacity(n + ctx.len());
        input.extend_from_slice(x);
        input.extend_from_slice(ctx);
        cond.eval_tape(tape, param_base + l * per_layer, &input, &mut out);
        for i in 0..n {
            let spline = decode_spline_tape(tape, &out[i * opc..(i + 1) * opc], cond_bins(opc));
            let (y, ld) = spline_forward_tape(tape, &spline, x[i])?;
            x[i] = y;
            terms.push(ld);
        }
    }
    if n_layers % 2 == 0 {
        x.reverse();
    }
    Ok(terms)
}

/// logit the final [0,1] coordinate, add its log-derivative and the
/// standard-normal base log-density, all on the tape.
fn logit_and_base_tape(tape: &mut Tape, p: Var) -> Var {
    let ln_p = tape.ln(p);
    let neg = tape.neg(p);
    let om = tape.add_const(neg, 1.0);
    let ln_om = tape.ln(om);
    let z = tape.sub(ln_p, ln_om);
    // -ln(p(1-p)) jacobian term
    let ln_prod = tape.add(ln_p, ln_om);
    let jac = tape.neg(ln_prod);
    // log phi(z)
    let z2 = tape.square(z);
    let half = tape.scale(z2, -0.5);
    let base = tape.add_const(half, -0.5 * crate::numeric::LN_TWO_PI);
    tape.add(jac, base)
}

#[inline]
fn cond_bins(out_per_coord: usize) -> usize {
    (out_per_coord - 1) / 3
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn random_flow(n: usize, seed: u64) -> SplineFlow {
        let mut flow = SplineFlow::new(n, 5, 2, 4 * n, vec![0.0; n], vec![1.0; n], seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        for p in flow.params.iter_mut() {
            *p += rng.random_range(-0.5..0.5);
        }
        flow
    }

    #[test]
    fn fresh_flow_is_standardization_only() {
        let flow = SplineFlow::new(2, 10, 3, 64, vec![1.0, -2.0], vec![0.5, 2.0], 0).unwrap();
        let theta = [1.8, -1.4];
        let (z, ld) = flow.forward(&theta).unwrap();
        assert_relative_eq!(z[0], 0.5 * (1.8 - 1.0), epsilon = 1e-9);
        assert_relative_eq!(z[1], 2.0 * (-1.4 + 2.0), epsilon = 1e-9);
        assert_relative_eq!(ld, 0.5_f64.ln() + 2.0_f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn round_trip_random_flow() {
        for n in [1usize, 2, 3] {
            let flow = random_flow(n, 42 + n as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            for _ in 0..200 {
                let theta: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
                let (z, ld_f) = flow.forward(&theta).unwrap();
                let (back, ld_i) = flow.inverse(&z).unwrap();
                for (a, b) in theta.iter().zip(&back) {
                    assert!((a - b).abs() < 1e-8, "roundtrip {theta:?} -> {back:?}");
                }
                assert!((ld_f + ld_i).abs() < 1e-8, "antisymmetry {}", ld_f + ld_i);
            }
        }
    }

    #[test]
    fn autoregressive_structure_within_layer() {
        // A single-layer flow: perturbing input coordinate j must leave
        // outputs with index < j unchanged, exactly.
        let n = 4;
        let mut flow = SplineFlow::new(n, 5, 1, 16, vec![0.0; n], vec![1.0; n], 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for p in flow.params.iter_mut() {
            *p += rng.random_range(-0.5..0.5);
        }
        let theta = [0.4, -0.6, 1.2, 0.1];
        let (base, _) = flow.forward(&theta).unwrap();
        for j in 0..n {
            let mut tp = theta;
            tp[j] += 0.3;
            let (out, _) = flow.forward(&tp).unwrap();
            for i in 0..j {
                assert_eq!(out[i], base[i], "output {i} changed by input {j}");
            }
        }
    }

    #[test]
    fn saturated_input_is_domain_error_not_nan() {
        let flow = SplineFlow::new(1, 5, 1, 8, vec![0.0], vec![1.0], 1).unwrap();
        match flow.forward(&[40.0]) {
            Err(TrjError::OutsideDomain(_)) => {}
            other => panic!("expected domain error, got {other:?}"),
        }
        assert_eq!(flow.log_density(&[40.0]), f64::NEG_INFINITY);
    }

    #[test]
    fn identity_flow_log_density_is_standard_normal() {
        let flow = SplineFlow::new(1, 10, 3, 32, vec![0.0], vec![1.0], 0).unwrap();
        assert_relative_eq!(flow.log_density(&[0.0]), -0.9189385332046727, epsilon = 1e-9);
    }

    #[test]
    fn log_density_integrates_to_one() {
        let flow = random_flow(1, 99);
        let (lo, hi, steps) = (-10.0, 10.0, 40_000);
        let h = (hi - lo) / steps as f64;
        let mut integral = 0.0;
        for i in 0..=steps {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            integral += w * flow.log_density(&[x]).exp();
        }
        integral *= h;
        assert!((integral - 1.0).abs() < 1e-3, "integral = {integral}");
    }

    #[test]
    fn tape_log_density_matches_plain() {
        let flow = random_flow(2, 5);
        let mut tape = Tape::new(flow.param_count());
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let theta: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            tape.reset(&flow.params);
            let out = flow.log_density_tape(&mut tape, &theta).unwrap();
            let plain = flow.log_density(&theta);
            assert_relative_eq!(tape.val(out), plain, epsilon = 1e-11);
        }
    }
}
