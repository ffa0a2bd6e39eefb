//! Monotone rational-quadratic splines on [0, 1].
//!
//! A spline with B bins is parameterized by strictly increasing knot
//! positions `x_0 = 0 < ... < x_B = 1`, matching knot heights on [0, 1], and
//! positive derivatives at every knot. Within a bin the transform is the
//! ratio of two quadratics, strictly increasing, with a closed-form inverse
//! (quadratic formula, numerically stable root).

use crate::autodiff::{Tape, Var};
use crate::error::{Result, TrjError};
use crate::numeric::{softmax, softplus};
use serde::{Deserialize, Serialize};

/// Smallest bin width/height produced when decoding conditioner outputs.
pub const MIN_BIN: f64 = 1e-3;
/// Floor added to the softplus-decoded knot derivatives.
pub const MIN_DERIV: f64 = 1e-4;
/// Offset so that zero conditioner output decodes to derivative exactly 1.
pub const DERIV_OFFSET: f64 = 0.5411666523385311;

/// Number of unconstrained parameters a B-bin spline consumes:
/// B widths, B heights, B+1 derivatives.
pub const fn params_per_spline(bins: usize) -> usize {
    3 * bins + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplineDirection {
    Forward,
    Inverse,
}

/// A monotone rational-quadratic spline bijection of [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RQSpline {
    /// Knot x-positions, length B+1, first 0 and last 1.
    pub knots_x: Vec<f64>,
    /// Knot y-positions, length B+1, first 0 and last 1.
    pub knots_y: Vec<f64>,
    /// Positive derivative at each knot, length B+1.
    pub derivs: Vec<f64>,
}

impl RQSpline {
    pub fn bins(&self) -> usize {
        self.knots_x.len() - 1
    }

    /// The identity spline with uniform knots and unit derivatives.
    pub fn identity(bins: usize) -> Self {
        let knots: Vec<f64> = (0..=bins).map(|i| i as f64 / bins as f64).collect();
        RQSpline {
            knots_x: knots.clone(),
            knots_y: knots,
            derivs: vec![1.0; bins + 1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let b = self.bins();
        if b == 0 || self.knots_y.len() != b + 1 || self.derivs.len() != b + 1 {
            return Err(TrjError::InvalidParameter("inconsistent spline knot lengths".into()));
        }
        if self.knots_x[0] != 0.0 || self.knots_x[b] != 1.0 || self.knots_y[0] != 0.0 || self.knots_y[b] != 1.0 {
            return Err(TrjError::InvalidParameter("spline endpoints must be 0 and 1".into()));
        }
        for i in 0..b {
            if !(self.knots_x[i + 1] > self.knots_x[i]) || !(self.knots_y[i + 1] > self.knots_y[i]) {
                return Err(TrjError::InvalidParameter("spline knots must be strictly increasing".into()));
            }
        }
        if self.derivs.iter().any(|&d| !(d > 0.0)) {
            return Err(TrjError::InvalidParameter("spline derivatives must be positive".into()));
        }
        Ok(())
    }

    /// Decode a spline from `3B+1` unconstrained conditioner outputs:
    /// widths and heights via a softmax with minimum bin size, derivatives
    /// via an offset softplus (all zeros decode to a near-identity spline).
    pub fn from_unconstrained(raw: &[f64], bins: usize) -> Self {
        assert_eq!(raw.len(), params_per_spline(bins));
        let scale = 1.0 - bins as f64 * MIN_BIN;
        let decode_knots = |logits: &[f64]| -> Vec<f64> {
            let probs = softmax(logits);
            let mut knots = Vec::with_capacity(bins + 1);
            knots.push(0.0);
            let mut acc = 0.0;
            for p in probs {
                acc += MIN_BIN + scale * p;
                knots.push(acc);
            }
            knots[bins] = 1.0;
            knots
        };
        let knots_x = decode_knots(&raw[0..bins]);
        let knots_y = decode_knots(&raw[bins..2 * bins]);
        let derivs: Vec<f64> = raw[2 * bins..]
            .iter()
            .map(|&d| MIN_DERIV + softplus(d + DERIV_OFFSET))
            .collect();
        RQSpline { knots_x, knots_y, derivs }
    }

    /// Index of the bin containing `x` in the given knot vector.
    fn bin_index(knots: &[f64], x: f64) -> usize {
        let b = knots.len() - 1;
        // partition_point returns the first knot strictly greater than x.
        let idx = knots.partition_point(|&k| k <= x);
        idx.saturating_sub(1).min(b - 1)
    }

    /// Evaluate in the given direction: returns the output and the log
    /// derivative of the evaluated direction (`log dy/dx` forward,
    /// `log dx/dy` inverse).
    pub fn eval(&self, x: f64, direction: SplineDirection) -> Result<(f64, f64)> {
        match direction {
            SplineDirection::Forward => self.forward(x),
            SplineDirection::Inverse => self.inverse(x),
        }
    }

    pub fn forward(&self, x: f64) -> Result<(f64, f64)> {
        if !(0.0..=1.0).contains(&x) {
            return Err(TrjError::OutsideDomain(format!("spline input {x} outside [0,1]")));
        }
        let j = Self::bin_index(&self.knots_x, x);
        let w = self.knots_x[j + 1] - self.knots_x[j];
        let h = self.knots_y[j + 1] - self.knots_y[j];
        let s = h / w;
        let (d0, d1) = (self.derivs[j], self.derivs[j + 1]);
        let xi = (x - self.knots_x[j]) / w;
        let (y, dydx) = rq_bin_forward(xi, self.knots_y[j], h, s, d0, d1);
        let y = if xi == 1.0 { self.knots_y[j + 1] } else { y };
        Ok((y, dydx.ln()))
    }

    pub fn inverse(&self, y: f64) -> Result<(f64, f64)> {
        if !(0.0..=1.0).contains(&y) {
            return Err(TrjError::OutsideDomain(format!("spline input {y} outside [0,1]")));
        }
        let j = Self::bin_index(&self.knots_y, y);
        let w = self.knots_x[j + 1] - self.knots_x[j];
        let h = self.knots_y[j + 1] - self.knots_y[j];
        let s = h / w;
        let (d0, d1) = (self.derivs[j], self.derivs[j + 1]);
        let rel = y - self.knots_y[j];
        // Solve the bin quadratic a*xi^2 + b*xi + c = 0 for xi using the
        // root that is stable over the whole valid parameter range.
        let t = d1 + d0 - 2.0 * s;
        let a = h * (s - d0) + rel * t;
        let b = h * d0 - rel * t;
        let c = -s * rel;
        let disc = (b * b - 4.0 * a * c).max(0.0);
        let xi = (2.0 * c / (-b - disc.sqrt())).clamp(0.0, 1.0);
        let x = if y == self.knots_y[j + 1] {
            self.knots_x[j + 1]
        } else {
            self.knots_x[j] + xi * w
        };
        let (_, dydx) = rq_bin_forward(xi, self.knots_y[j], h, s, d0, d1);
        Ok((x, -dydx.ln()))
    }
}

/// Forward rational-quadratic evaluation inside one bin, in local
/// coordinates xi in [0,1]. Returns (y, dy/dx).
#[inline]
fn rq_bin_forward(xi: f64, y0: f64, h: f64, s: f64, d0: f64, d1: f64) -> (f64, f64) {
    let om = 1.0 - xi;
    let t = d1 + d0 - 2.0 * s;
    let denom = s + t * xi * om;
    let y = y0 + h * (s * xi * xi + d0 * xi * om) / denom;
    let num = s * s * (d1 * xi * xi + 2.0 * s * xi * om + d0 * om * om);
    (y, num / (denom * denom))
}

/// Decode a spline from conditioner outputs held on the autodiff tape,
/// mirroring [`RQSpline::from_unconstrained`].
pub(crate) struct TapeSpline {
    pub knots_x: Vec<Var>,
    pub knots_y: Vec<Var>,
    pub derivs: Vec<Var>,
}

pub(crate) fn decode_spline_tape(tape: &mut Tape, raw: &[Var], bins: usize) -> TapeSpline {
    assert_eq!(raw.len(), params_per_spline(bins));
    let scale = 1.0 - bins as f64 * MIN_BIN;
    let decode = |tape: &mut Tape, logits: &[Var]| -> Vec<Var> {
        let probs = tape.softmax(logits);
        let mut knots = Vec::with_capacity(bins + 1);
        let zero = tape.constant(0.0);
        knots.push(zero);
        let mut acc = zero;
        for p in probs {
            let scaled = tape.scale(p, scale);
            let width = tape.add_const(scaled, MIN_BIN);
            acc = tape.add(acc, width);
            knots.push(acc);
        }
        knots
    };
    let knots_x = decode(tape, &raw[0..bins]);
    let knots_y = decode(tape, &raw[bins..2 * bins]);
    let derivs: Vec<Var> = raw[2 * bins..]
        .iter()
        .map(|&d| {
            let shifted = tape.add_const(d, DERIV_OFFSET);
            let sp = tape.softplus(shifted);
            tape.add_const(sp, MIN_DERIV)
        })
        .collect();
    TapeSpline { knots_x, knots_y, derivs }
}

/// Forward spline evaluation on the tape. Returns `(y, log dy/dx)`. The bin
/// is selected by value; the in-bin algebra is differentiable.
pub(crate) fn spline_forward_tape(
    tape: &mut Tape,
    spline: &TapeSpline,
    x: Var,
) -> Result<(Var, Var)> {
    let bins = spline.knots_x.len() - 1;
    let xv = tape.val(x);
    if !(0.0..=1.0).contains(&xv) {
        return Err(TrjError::OutsideDomain(format!("spline input {xv} outside [0,1]")));
    }
    let mut j = bins - 1;
    for i in 0..bins {
        if xv < tape.val(spline.knots_x[i + 1]) {
            j = i;
            break;
        }
    }
    let w = tape.sub(spline.knots_x[j + 1], spline.knots_x[j]);
    let h = tape.sub(spline.knots_y[j + 1], spline.knots_y[j]);
    let s = tape.div(h, w);
    let (d0, d1) = (spline.derivs[j], spline.derivs[j + 1]);
    let dx = tape.sub(x, spline.knots_x[j]);
    let xi = tape.div(dx, w);
    let one_minus = {
        let neg = tape.neg(xi);
        tape.add_const(neg, 1.0)
    };
    let xi_om = tape.mul(xi, one_minus);
    let xi2 = tape.square(xi);
    let om2 = tape.square(one_minus);
    // t = d0 + d1 - 2s
    let dsum = tape.add(d0, d1);
    let s2x = tape.scale(s, 2.0);
    let t = tape.sub(dsum, s2x);
    let t_xiom = tape.mul(t, xi_om);
    let denom = tape.add(s, t_xiom);
    // y = y0 + h (s xi^2 + d0 xi(1-xi)) / denom
    let s_xi2 = tape.mul(s, xi2);
    let d0_xiom = tape.mul(d0, xi_om);
    let num_y = tape.add(s_xi2, d0_xiom);
    let h_num = tape.mul(h, num_y);
    let frac = tape.div(h_num, denom);
    let y = tape.add(spline.knots_y[j], frac);
    // log deriv = 2 log s + log(d1 xi^2 + 2 s xi(1-xi) + d0 (1-xi)^2) - 2 log denom
    let d1_xi2 = tape.mul(d1, xi2);
    let s_xiom2 = {
        let m = tape.mul(s, xi_om);
        tape.scale(m, 2.0)
    };
    let d0_om2 = tape.mul(d0, om2);
    let tmp = tape.add(d1_xi2, s_xiom2);
    let dnum = tape.add(tmp, d0_om2);
    let ln_s = tape.ln(s);
    let ln_dnum = tape.ln(dnum);
    let ln_denom = tape.ln(denom);
    let two_ln_s = tape.scale(ln_s, 2.0);
    let two_ln_denom = tape.scale(ln_denom, 2.0);
    let part = tape.add(two_ln_s, ln_dnum);
    let logderiv = tape.sub(part, two_ln_denom);
    Ok((y, logderiv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_spline(rng: &mut ChaCha8Rng, bins: usize) -> RQSpline {
        let raw: Vec<f64> = (0..params_per_spline(bins))
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        RQSpline::from_unconstrained(&raw, bins)
    }

    #[test]
    fn identity_spline_is_identity() {
        let sp = RQSpline::identity(10);
        sp.validate().unwrap();
        let (y, ld) = sp.forward(0.37).unwrap();
        assert_relative_eq!(y, 0.37, epsilon = 1e-15);
        assert_relative_eq!(ld, 0.0, epsilon = 1e-14);
        let (x, ld) = sp.inverse(0.37).unwrap();
        assert_relative_eq!(x, 0.37, epsilon = 1e-15);
        assert_relative_eq!(ld, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn knots_map_to_knots_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let sp = random_spline(&mut rng, 10);
            sp.validate().unwrap();
            for j in 0..=sp.bins() {
                let (y, _) = sp.forward(sp.knots_x[j]).unwrap();
                assert_eq!(y, sp.knots_y[j], "knot {j}");
                let (x, _) = sp.inverse(sp.knots_y[j]).unwrap();
                assert_eq!(x, sp.knots_x[j], "knot {j}");
            }
        }
    }

    #[test]
    fn round_trip_and_derivative_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let sp = random_spline(&mut rng, 8);
            for _ in 0..50 {
                let x: f64 = rng.random_range(0.0..1.0);
                let (y, ld_f) = sp.forward(x).unwrap();
                let (back, ld_i) = sp.inverse(y).unwrap();
                assert!((back - x).abs() < 1e-12, "roundtrip {x} -> {y} -> {back}");
                assert!((ld_f + ld_i).abs() < 1e-10);
                // Central finite differences for dy/dx.
                let h = 1e-6;
                if x > 2.0 * h && x < 1.0 - 2.0 * h {
                    let (yp, _) = sp.forward(x + h).unwrap();
                    let (ym, _) = sp.forward(x - h).unwrap();
                    let fd = (yp - ym) / (2.0 * h);
                    let an = ld_f.exp();
                    assert!(
                        (fd - an).abs() / an.abs().max(1e-12) < 1e-5,
                        "deriv fd {fd} vs analytic {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn strictly_increasing_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..5 {
            let sp = random_spline(&mut rng, 10);
            let mut prev = -1.0;
            for i in 0..=10_000 {
                let x = i as f64 / 10_000.0;
                let (y, _) = sp.forward(x).unwrap();
                assert!(y > prev, "not increasing at {x}");
                prev = y;
            }
            assert_eq!(sp.forward(0.0).unwrap().0, 0.0);
            assert_eq!(sp.forward(1.0).unwrap().0, 1.0);
        }
    }

    #[test]
    fn rejects_out_of_domain() {
        let sp = RQSpline::identity(4);
        assert!(sp.forward(-0.1).is_err());
        assert!(sp.forward(1.1).is_err());
        assert!(sp.inverse(2.0).is_err());
    }

    #[test]
    fn zero_params_decode_near_identity() {
        let raw = vec![0.0; params_per_spline(10)];
        let sp = RQSpline::from_unconstrained(&raw, 10);
        for i in 0..=20 {
            let x = i as f64 / 20.0;
            let (y, _) = sp.forward(x).unwrap();
            assert!((y - x).abs() < 1e-12, "near-identity violated at {x}: {y}");
        }
    }

    #[test]
    fn tape_forward_matches_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let bins = 6;
        let np = params_per_spline(bins);
        let mut tape = Tape::new(np);
        for _ in 0..20 {
            let raw: Vec<f64> = (0..np).map(|_| rng.random_range(-2.0..2.0)).collect();
            let sp = RQSpline::from_unconstrained(&raw, bins);
            let x: f64 = rng.random_range(0.001..0.999);
            tape.reset(&raw);
            let raw_vars: Vec<Var> = (0..np).map(|i| tape.param(i)).collect();
            let tsp = decode_spline_tape(&mut tape, &raw_vars, bins);
            let xv = tape.constant(x);
            let (y, ld) = spline_forward_tape(&mut tape, &tsp, xv).unwrap();
            let (y_ref, ld_ref) = sp.forward(x).unwrap();
            assert_relative_eq!(tape.val(y), y_ref, epsilon = 1e-12);
            assert_relative_eq!(tape.val(ld), ld_ref, epsilon = 1e-10);
        }
    }
}
