//! Reverse-mode automatic differentiation on a flat tape.
//!
//! The tape is a Wengert list whose local partial derivatives are computed
//! during the forward pass, so the backward sweep is a single loop over the
//! edge list: `adjoint[parent] += adjoint[node] * partial`.
//!
//! The first `n_params` node slots are reserved for trainable parameters.
//! [`Tape::reset`] reloads the parameter values and truncates everything
//! recorded after them, which lets one tape be reused across every sample in
//! a batch while the parameter adjoints accumulate the batch gradient.

use crate::numeric::{sigmoid, softplus};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(u32);

pub struct Tape {
    n_params: usize,
    vals: Vec<f64>,
    edge_parent: Vec<u32>,
    edge_partial: Vec<f64>,
    /// Exclusive end of node i's edge range; node i's edges start at
    /// `node_edge_end[i - 1]` (or 0 for the first node).
    node_edge_end: Vec<u32>,
    adjoint: Vec<f64>,
}

impl Tape {
    /// Create a tape with `n_params` reserved parameter leaves.
    pub fn new(n_params: usize) -> Self {
        Tape {
            n_params,
            vals: vec![0.0; n_params],
            edge_parent: Vec::new(),
            edge_partial: Vec::new(),
            node_edge_end: vec![0; n_params],
            adjoint: vec![0.0; n_params],
        }
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Load fresh parameter values and drop all recorded computation.
    /// Parameter adjoints are left untouched so batch gradients accumulate.
    pub fn reset(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.n_params);
        self.vals.truncate(self.n_params);
        self.vals.copy_from_slice(params);
        self.node_edge_end.truncate(self.n_params);
        self.edge_parent.clear();
        self.edge_partial.clear();
    }

    /// Zero the parameter adjoints (start of a new batch).
    pub fn zero_param_adjoints(&mut self) {
        for a in self.adjoint.iter_mut().take(self.n_params) {
            *a = 0.0;
        }
    }

    /// Accumulated parameter adjoints since the last
    /// [`Tape::zero_param_adjoints`].
    pub fn param_adjoints(&self) -> &[f64] {
        &self.adjoint[..self.n_params]
    }

    #[inline]
    pub fn param(&self, i: usize) -> Var {
        debug_assert!(i < self.n_params);
        Var(i as u32)
    }

    #[inline]
    pub fn val(&self, v: Var) -> f64 {
        self.vals[v.0 as usize]
    }

    #[inline]
    fn push_node(&mut self, value: f64) -> Var {
        let id = self.vals.len() as u32;
        self.vals.push(value);
        self.node_edge_end.push(self.edge_parent.len() as u32);
        Var(id)
    }

    /// A leaf with no parents (gradients do not flow into it).
    pub fn constant(&mut self, value: f64) -> Var {
        self.push_node(value)
    }

    #[inline]
    fn unary(&mut self, value: f64, parent: Var, partial: f64) -> Var {
        self.edge_parent.push(parent.0);
        self.edge_partial.push(partial);
        self.push_node(value)
    }

    #[inline]
    fn binary(&mut self, value: f64, pa: Var, da: f64, pb: Var, db: f64) -> Var {
        self.edge_parent.push(pa.0);
        self.edge_partial.push(da);
        self.edge_parent.push(pb.0);
        self.edge_partial.push(db);
        self.push_node(value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.val(a) + self.val(b);
        self.binary(v, a, 1.0, b, 1.0)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.val(a) - self.val(b);
        self.binary(v, a, 1.0, b, -1.0)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.val(a), self.val(b));
        self.binary(va * vb, a, vb, b, va)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.val(a), self.val(b));
        self.binary(va / vb, a, 1.0 / vb, b, -va / (vb * vb))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = -self.val(a);
        self.unary(v, a, -1.0)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        let v = self.val(a) + c;
        self.unary(v, a, 1.0)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.val(a) * c;
        self.unary(v, a, c)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let va = self.val(a);
        self.unary(va.ln(), a, 1.0 / va)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.val(a).exp();
        self.unary(v, a, v)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let va = self.val(a);
        self.unary(va * va, a, 2.0 * va)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.val(a).tanh();
        self.unary(t, a, 1.0 - t * t)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let s = sigmoid(self.val(a));
        self.unary(s, a, s * (1.0 - s))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let va = self.val(a);
        self.unary(softplus(va), a, sigmoid(va))
    }

    /// Sum of an arbitrary set of nodes.
    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let v: f64 = xs.iter().map(|&x| self.val(x)).sum();
        for &x in xs {
            self.edge_parent.push(x.0);
            self.edge_partial.push(1.0);
        }
        self.push_node(v)
    }

    /// bias + sum_i w_i * x_i over the given (weight, input) pairs. This is
    /// the masked-linear building block of the conditioner networks; only
    /// unmasked pairs should be passed in.
    pub fn dot_affine(&mut self, pairs: &[(Var, Var)], bias: Var) -> Var {
        let mut v = self.val(bias);
        self.edge_parent.push(bias.0);
        self.edge_partial.push(1.0);
        for &(w, x) in pairs {
            let (vw, vx) = (self.val(w), self.val(x));
            v += vw * vx;
            self.edge_parent.push(w.0);
            self.edge_partial.push(vx);
            self.edge_parent.push(x.0);
            self.edge_partial.push(vw);
        }
        self.push_node(v)
    }

    /// Numerically stable softmax of `logits`. The shift by the maximum is
    /// detached from the graph, which leaves the gradient unchanged.
    pub fn softmax(&mut self, logits: &[Var]) -> Vec<Var> {
        let max = logits
            .iter()
            .map(|&v| self.val(v))
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<Var> = logits
            .iter()
            .map(|&v| {
                let shifted = self.add_const(v, -max);
                self.exp(shifted)
            })
            .collect();
        let total = self.sum(&exps);
        exps.into_iter().map(|e| self.div(e, total)).collect()
    }

    /// Reverse sweep from `output`. Parameter adjoints accumulate; all other
    /// adjoints are freshly zeroed for this call.
    pub fn backward(&mut self, output: Var) {
        let n = self.vals.len();
        if self.adjoint.len() < n {
            self.adjoint.resize(n, 0.0);
        }
        for a in self.adjoint[self.n_params..n].iter_mut() {
            *a = 0.0;
        }
        self.adjoint[output.0 as usize] = 1.0;
        for i in (self.n_params..n).rev() {
            let a = self.adjoint[i];
            if a == 0.0 {
                continue;
            }
            let start = if i == 0 { 0 } else { self.node_edge_end[i - 1] } as usize;
            let end = self.node_edge_end[i] as usize;
            for e in start..end {
                self.adjoint[self.edge_parent[e] as usize] += a * self.edge_partial[e];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f(x: f64, y: f64) -> f64 {
        let a = sigmoid(x * y);
        let b = softplus(x) * (0.5 * y).tanh();
        (a + b * b).ln() + (x - y).exp() / (1.0 + y * y)
    }

    fn tape_f(tape: &mut Tape) -> Var {
        let x = tape.param(0);
        let y = tape.param(1);
        let xy = tape.mul(x, y);
        let a = tape.sigmoid(xy);
        let sp = tape.softplus(x);
        let half_y = tape.scale(y, 0.5);
        let th = tape.tanh(half_y);
        let b = tape.mul(sp, th);
        let b2 = tape.square(b);
        let s = tape.add(a, b2);
        let term1 = tape.ln(s);
        let xmy = tape.sub(x, y);
        let e = tape.exp(xmy);
        let y2 = tape.square(y);
        let denom = tape.add_const(y2, 1.0);
        let term2 = tape.div(e, denom);
        tape.add(term1, term2)
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut tape = Tape::new(2);
        for &(x, y) in &[(0.3, -1.2), (1.5, 0.7), (-0.4, 0.9), (2.0, 2.0)] {
            tape.reset(&[x, y]);
            tape.zero_param_adjoints();
            let out = tape_f(&mut tape);
            assert!((tape.val(out) - f(x, y)).abs() < 1e-12);
            tape.backward(out);
            let g = tape.param_adjoints().to_vec();
            let h = 1e-6;
            let gx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
            let gy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
            assert!((g[0] - gx).abs() / gx.abs().max(1.0) < 1e-7, "{} vs {}", g[0], gx);
            assert!((g[1] - gy).abs() / gy.abs().max(1.0) < 1e-7, "{} vs {}", g[1], gy);
        }
    }

    #[test]
    fn param_adjoints_accumulate_across_samples() {
        let mut tape = Tape::new(1);
        tape.zero_param_adjoints();
        let mut total = 0.0;
        for &c in &[2.0_f64, 5.0] {
            tape.reset(&[3.0]);
            let x = tape.param(0);
            let k = tape.constant(c);
            let out = tape.mul(x, k); // d/dx = c
            tape.backward(out);
            total += c;
        }
        assert_eq!(tape.param_adjoints()[0], total);
    }

    #[test]
    fn softmax_sums_to_one_and_differentiates() {
        let mut tape = Tape::new(3);
        tape.reset(&[0.2, -1.0, 0.5]);
        tape.zero_param_adjoints();
        let logits = [tape.param(0), tape.param(1), tape.param(2)];
        let probs = tape.softmax(&logits);
        let total: f64 = probs.iter().map(|&p| tape.val(p)).sum();
        assert!((total - 1.0).abs() < 1e-14);
        // d p0 / d logit0 = p0 (1 - p0)
        tape.backward(probs[0]);
        let p0 = tape.val(probs[0]);
        let g = tape.param_adjoints();
        assert!((g[0] - p0 * (1.0 - p0)).abs() < 1e-12);
        assert!((g[1] + p0 * tape.val(probs[1])).abs() < 1e-12);
    }

    #[test]
    fn dot_affine_value_and_partials() {
        let mut tape = Tape::new(5);
        tape.reset(&[1.5, -2.0, 0.5, 3.0, 0.25]);
        tape.zero_param_adjoints();
        let w = [tape.param(0), tape.param(1)];
        let x = [tape.param(2), tape.param(3)];
        let b = tape.param(4);
        let out = tape.dot_affine(&[(w[0], x[0]), (w[1], x[1])], b);
        assert!((tape.val(out) - (1.5 * 0.5 - 2.0 * 3.0 + 0.25)).abs() < 1e-14);
        tape.backward(out);
        let g = tape.param_adjoints();
        assert_eq!(g, &[0.5, 3.0, 1.5, -2.0, 1.0]);
    }
}
