//! Autoregressively masked conditioner networks.
//!
//! A single feed-forward network with two tanh hidden layers produces the
//! spline parameters for every coordinate at once. Degree-based masks
//! guarantee that the parameter block for coordinate `i` depends only on
//! inputs with index strictly below `i`; context (conditioning) inputs are
//! visible to every output.

use crate::autodiff::{Tape, Var};
use serde::{Deserialize, Serialize};

/// Shapes and degree assignment of a masked conditioner network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conditioner {
    /// Autoregressive input dimension.
    pub n: usize,
    /// Context inputs appended after the autoregressive block.
    pub context: usize,
    /// Width of both hidden layers.
    pub hidden: usize,
    /// Conditioner outputs per coordinate.
    pub out_per_coord: usize,
    /// Hidden-unit degrees in {1, ..., max(n-1, 1)}.
    degrees: Vec<usize>,
}

impl Conditioner {
    pub fn new(n: usize, context: usize, hidden: usize, out_per_coord: usize) -> Self {
        // Without context, degrees live in {1, ..., n-1}; coordinate 0 then
        // receives pure bias parameters. With context we also assign
        // degree-0 units, which read only the context and feed every
        // output block, so even coordinate 0 can be conditioned on it.
        let degrees = if context > 0 {
            let span = n; // degrees 0..=n-1
            (0..hidden).map(|h| h % span).collect()
        } else {
            let max_deg = (n - 1).max(1);
            (0..hidden).map(|h| 1 + h % max_deg).collect()
        };
        Conditioner { n, context, hidden, out_per_coord, degrees }
    }

    #[inline]
    fn in_dim(&self) -> usize {
        self.n + self.context
    }

    #[inline]
    fn out_dim(&self) -> usize {
        self.n * self.out_per_coord
    }

    /// Input `i` feeds hidden unit `h`: autoregressive inputs need
    /// degree(h) >= i+1, context inputs always pass.
    #[inline]
    fn mask_in(&self, h: usize, i: usize) -> bool {
        i >= self.n || self.degrees[h] >= i + 1
    }

    #[inline]
    fn mask_hidden(&self, h2: usize, h1: usize) -> bool {
        self.degrees[h2] >= self.degrees[h1]
    }

    /// Hidden unit `h` feeds the output block of coordinate `c` iff
    /// c >= degree(h), so block 0 sees no hidden unit at all.
    #[inline]
    fn mask_out(&self, c: usize, h: usize) -> bool {
        c >= self.degrees[h]
    }

    /// Total trainable parameters: two hidden layers plus the linear output.
    pub fn param_count(&self) -> usize {
        self.hidden * self.in_dim()
            + self.hidden
            + self.hidden * self.hidden
            + self.hidden
            + self.out_dim() * self.hidden
            + self.out_dim()
    }

    fn offsets(&self) -> [usize; 6] {
        let w1 = 0;
        let b1 = w1 + self.hidden * self.in_dim();
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.hidden * self.hidden;
        let w3 = b2 + self.hidden;
        let b3 = w3 + self.out_dim() * self.hidden;
        [w1, b1, w2, b2, w3, b3]
    }

    /// Evaluate the conditioner. `input` holds the autoregressive block
    /// followed by the context block; `out` receives `n * out_per_coord`
    /// values, coordinate-major.
    pub fn eval(&self, params: &[f64], input: &[f64], out: &mut [f64]) {
        debug_assert_eq!(params.len(), self.param_count());
        debug_assert_eq!(input.len(), self.in_dim());
        debug_assert_eq!(out.len(), self.out_dim());
        let [w1, b1, w2, b2, w3, b3] = self.offsets();
        let mut h1 = vec![0.0; self.hidden];
        for h in 0..self.hidden {
            let mut acc = params[b1 + h];
            let row = &params[w1 + h * self.in_dim()..w1 + (h + 1) * self.in_dim()];
            for (i, &x) in input.iter().enumerate() {
                if self.mask_in(h, i) {
                    acc += row[i] * x;
                }
            }
            h1[h] = acc.tanh();
        }
        let mut h2 = vec![0.0; self.hidden];
        for h in 0..self.hidden {
            let mut acc = params[b2 + h];
            let row = &params[w2 + h * self.hidden..w2 + (h + 1) * self.hidden];
            for (j, &x) in h1.iter().enumerate() {
                if self.mask_hidden(h, j) {
                    acc += row[j] * x;
                }
            }
            h2[h] = acc.tanh();
        }
        for o in 0..self.out_dim() {
            let c = o / self.out_per_coord;
            let mut acc = params[b3 + o];
            let row = &params[w3 + o * self.hidden..w3 + (o + 1) * self.hidden];
            for (j, &x) in h2.iter().enumerate() {
                if self.mask_out(c, j) {
                    acc += row[j] * x;
                }
            }
            out[o] = acc;
        }
    }

    /// Tape version of [`Conditioner::eval`]. `param_base` is the offset of
    /// this conditioner's parameter block inside the tape's parameter
    /// vector; inputs are tape nodes.
    pub(crate) fn eval_tape(
        &self,
        tape: &mut Tape,
        param_base: usize,
        input: &[Var],
        out: &mut Vec<Var>,
    ) {
        debug_assert_eq!(input.len(), self.in_dim());
        let [w1, b1, w2, b2, w3, b3] = self.offsets();
        let mut pairs: Vec<(Var, Var)> = Vec::with_capacity(self.in_dim().max(self.hidden));
        let mut h1 = Vec::with_capacity(self.hidden);
        for h in 0..self.hidden {
            pairs.clear();
            for (i, &x) in input.iter().enumerate() {
                if self.mask_in(h, i) {
                    pairs.push((tape.param(param_base + w1 + h * self.in_dim() + i), x));
                }
            }
            let bias = tape.param(param_base + b1 + h);
            let pre = tape.dot_affine(&pairs, bias);
            h1.push(tape.tanh(pre));
        }
        let mut h2 = Vec::with_capacity(self.hidden);
        for h in 0..self.hidden {
            pairs.clear();
            for (j, &x) in h1.iter().enumerate() {
                if self.mask_hidden(h, j) {
                    pairs.push((tape.param(param_base + w2 + h * self.hidden + j), x));
                }
            }
            let bias = tape.param(param_base + b2 + h);
            let pre = tape.dot_affine(&pairs, bias);
            h2.push(tape.tanh(pre));
        }
        out.clear();
        for o in 0..self.out_dim() {
            let c = o / self.out_per_coord;
            pairs.clear();
            for (j, &x) in h2.iter().enumerate() {
                if self.mask_out(c, j) {
                    pairs.push((tape.param(param_base + w3 + o * self.hidden + j), x));
                }
            }
            let bias = tape.param(param_base + b3 + o);
            out.push(tape.dot_affine(&pairs, bias));
        }
    }

    /// Glorot-style random initialization for the hidden layers; the output
    /// layer is zero so a fresh conditioner emits all-zero spline
    /// parameters (a near-identity transform).
    pub fn init_params<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = vec![0.0; self.param_count()];
        let [w1, _b1, w2, b2, _w3, _b3] = self.offsets();
        let s1 = (6.0 / (self.in_dim() + self.hidden) as f64).sqrt();
        for v in p[w1..w1 + self.hidden * self.in_dim()].iter_mut() {
            *v = rng.random_range(-s1..s1);
        }
        let s2 = (6.0 / (2 * self.hidden) as f64).sqrt();
        for v in p[w2..b2].iter_mut() {
            *v = rng.random_range(-s2..s2);
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn output_block_depends_only_on_earlier_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cond = Conditioner::new(4, 0, 16, 3);
        let params: Vec<f64> = (0..cond.param_count())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let x = [0.3, -0.7, 1.1, 0.2];
        let mut base = vec![0.0; 12];
        cond.eval(&params, &x, &mut base);
        for j in 0..4 {
            let mut xp = x;
            xp[j] += 0.5;
            let mut out = vec![0.0; 12];
            cond.eval(&params, &xp, &mut out);
            for c in 0..=j {
                for o in 0..3 {
                    assert_eq!(
                        out[c * 3 + o],
                        base[c * 3 + o],
                        "block {c} changed when perturbing input {j}"
                    );
                }
            }
            // Coordinate j+1 must react to input j somewhere, otherwise the
            // network is disconnected.
            if j + 1 < 4 {
                let changed = (0..3).any(|o| out[(j + 1) * 3 + o] != base[(j + 1) * 3 + o]);
                assert!(changed, "block {} ignored input {j}", j + 1);
            }
        }
    }

    #[test]
    fn context_is_visible_to_all_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cond = Conditioner::new(3, 2, 12, 2);
        let params: Vec<f64> = (0..cond.param_count())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let x = [0.1, 0.5, -0.2, 1.0, 0.0];
        let mut base = vec![0.0; 6];
        cond.eval(&params, &x, &mut base);
        let mut xp = x;
        xp[3] = 0.0;
        xp[4] = 1.0;
        let mut out = vec![0.0; 6];
        cond.eval(&params, &xp, &mut out);
        for c in 0..3 {
            let changed = (0..2).any(|o| out[c * 2 + o] != base[c * 2 + o]);
            assert!(changed, "block {c} ignored the context");
        }
    }

    #[test]
    fn zero_init_emits_zero_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cond = Conditioner::new(2, 0, 8, 5);
        let params = cond.init_params(&mut rng);
        let mut out = vec![1.0; 10];
        cond.eval(&params, &[0.4, -0.6], &mut out);
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tape_eval_matches_plain_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cond = Conditioner::new(3, 1, 8, 2);
        let mut params: Vec<f64> = (0..cond.param_count())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        // Nonzero output layer to exercise all paths.
        for v in params.iter_mut() {
            if *v == 0.0 {
                *v = 0.01;
            }
        }
        let x = [0.2, 0.9, -0.4, 1.0];
        let mut plain = vec![0.0; 6];
        cond.eval(&params, &x, &mut plain);

        let mut tape = Tape::new(cond.param_count());
        tape.reset(&params);
        let xv: Vec<Var> = x.iter().map(|&v| tape.constant(v)).collect();
        let mut out = Vec::new();
        cond.eval_tape(&mut tape, 0, &xv, &mut out);
        for (o, p) in out.iter().zip(&plain) {
            assert!((tape.val(*o) - p).abs() < 1e-14);
        }
    }
}
