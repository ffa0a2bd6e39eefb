//! Maximum-likelihood training of spline flows.
//!
//! Fitting minimizes the mean negative log-likelihood of the flow model on
//! the training rows, which is the sample KL divergence up to a constant.
//! Gradients are exact reverse-mode accumulation through the spline layers
//! and conditioner networks; the optimizer is a per-parameter moment-tracked
//! first-order method with a cosine step-size decay. The elementwise
//! standardization is frozen from sample moments before the first update
//! and is never touched by the optimizer.

use crate::autodiff::Tape;
use crate::error::{Result, TrjError};
use crate::linalg::{column_means, Matrix};
use crate::reference::Reference;
use crate::transport::{ConditionalSplineFlow, SplineFlow};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Architecture of the fitted flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowShape {
    pub bins: usize,
    pub layers: usize,
    /// Hidden width of the two conditioner layers; `None` means `32 * n`.
    pub hidden: Option<usize>,
}

impl Default for FlowShape {
    fn default() -> Self {
        FlowShape { bins: 10, layers: 3, hidden: None }
    }
}

impl FlowShape {
    pub fn hidden_for(&self, n: usize) -> usize {
        self.hidden.unwrap_or(32 * n)
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial step size; decays along a cosine schedule over the epochs.
    pub learning_rate: f64,
    /// Fraction of rows held out for validation, in (0, 0.5].
    pub validation_fraction: f64,
    /// Early stopping: epochs without validation improvement before halting.
    pub patience: usize,
    pub seed: u64,
    pub shape: FlowShape,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 60,
            batch_size: 256,
            learning_rate: 1e-3,
            validation_fraction: 0.1,
            patience: 20,
            seed: 0,
            shape: FlowShape::default(),
        }
    }
}

impl TrainConfig {
    fn validate(&self, n_rows: usize) -> Result<()> {
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return Err(TrjError::InvalidParameter(
                "validation fraction must lie in (0, 0.5]".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(TrjError::InvalidParameter("batch size must be positive".into()));
        }
        let n_train = n_rows - (self.validation_fraction * n_rows as f64).ceil() as usize;
        if self.batch_size > n_train {
            return Err(TrjError::InvalidParameter(format!(
                "batch size {} exceeds training rows {n_train}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// Per-epoch record of a fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean train NLL per epoch (index 0 is the first trained epoch).
    pub train_nll: Vec<f64>,
    /// Mean validation NLL per epoch, the series early stopping monitored.
    pub val_nll: Vec<f64>,
    /// Validation NLL of the initialized (near-identity) flow.
    pub initial_val_nll: f64,
    /// Validation NLL of the returned parameters.
    pub best_val_nll: f64,
    /// Epoch whose parameters were returned (0 = initialization).
    pub best_epoch: usize,
    pub epochs_run: usize,
}

impl TrainReport {
    /// CSV with columns (epoch, train_nll, val_nll). Epoch 0 is the
    /// initialized flow (no train value).
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "epoch,train_nll,val_nll")?;
        writeln!(f, "0,,{}", self.initial_val_nll)?;
        for (i, (t, v)) in self.train_nll.iter().zip(&self.val_nll).enumerate() {
            writeln!(f, "{},{},{}", i + 1, t, v)?;
        }
        Ok(())
    }
}

/// Mean negative log-likelihood and its gradient over a batch for the given
/// candidate parameters of an unconditional flow.
pub fn loss_and_grad(
    flow: &SplineFlow,
    params: &[f64],
    batch: &Matrix,
) -> Result<(f64, Vec<f64>)> {
    if batch.rows == 0 {
        return Err(TrjError::InvalidParameter("empty batch".into()));
    }
    let rows: Vec<usize> = (0..batch.rows).collect();
    batched_loss_grad(params, &rows, |tape, r| flow.log_density_tape(tape, batch.row(r)))
}

/// Conditional-flow analogue of [`loss_and_grad`]; `context[r]` is the model
/// index of row `r`.
pub fn loss_and_grad_conditional(
    flow: &ConditionalSplineFlow,
    params: &[f64],
    batch: &Matrix,
    context: &[usize],
) -> Result<(f64, Vec<f64>)> {
    if batch.rows == 0 {
        return Err(TrjError::InvalidParameter("empty batch".into()));
    }
    if context.len() != batch.rows {
        return Err(TrjError::DimensionMismatch { expected: batch.rows, got: context.len() });
    }
    let rows: Vec<usize> = (0..batch.rows).collect();
    batched_loss_grad(params, &rows, |tape, r| {
        flow.log_density_tape(tape, context[r], batch.row(r))
    })
}

/// Shared batch machinery: runs the per-row tape recording over fixed-size
/// chunks in parallel and reduces in chunk order, so results are bit-stable
/// under any thread count.
fn batched_loss_grad<F>(params: &[f64], rows: &[usize], record: F) -> Result<(f64, Vec<f64>)>
where
    F: Fn(&mut Tape, usize) -> Result<crate::autodiff::Var> + Sync,
{
    const CHUNK: usize = 64;
    let n_params = params.len();
    let chunks: Vec<&[usize]> = rows.chunks(CHUNK).collect();
    let partials: Vec<Result<(f64, Vec<f64>)>> = chunks
        .par_iter()
        .map(|chunk| {
            let mut tape = Tape::new(n_params);
            tape.zero_param_adjoints();
            let mut loss_sum = 0.0;
            for &r in chunk.iter() {
                tape.reset(params);
                let out = record(&mut tape, r)?;
                loss_sum -= tape.val(out);
                tape.backward(out);
            }
            Ok((loss_sum, tape.param_adjoints().to_vec()))
        })
        .collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; n_params];
    for part in partials {
        let (l, g) = part?;
        loss += l;
        for (gi, pi) in grad.iter_mut().zip(&g) {
            *gi += pi;
        }
    }
    let scale = 1.0 / rows.len() as f64;
    loss *= scale;
    for g in grad.iter_mut() {
        *g *= -scale;
    }
    if !loss.is_finite() {
        return Err(TrjError::Training(format!("non-finite loss {loss} over batch")));
    }
    Ok((loss, grad))
}

/// Adam-style per-parameter step-size adaptation.
struct MomentOptimizer {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl MomentOptimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        MomentOptimizer { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + Self::EPS);
        }
    }
}

fn cosine_lr(base: f64, epoch: usize, total: usize) -> f64 {
    let floor = 0.05 * base;
    if total <= 1 {
        return base;
    }
    let frac = epoch as f64 / (total - 1) as f64;
    floor + 0.5 * (base - floor) * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// Standardization moments of the training rows: per-coordinate mean and
/// reciprocal standard deviation. Errors on degenerate coordinates.
fn standardization(samples: &Matrix, rows: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    let sub =
        Matrix::from_rows(&rows.iter().map(|&r| samples.row(r).to_vec()).collect::<Vec<_>>());
    let center = column_means(&sub);
    let mut scale = vec![0.0; sub.cols];
    for c in 0..sub.cols {
        let var = (0..sub.rows)
            .map(|r| {
                let v = sub.row(r)[c] - center[c];
                v * v
            })
            .sum::<f64>()
            / (sub.rows - 1) as f64;
        if !(var > 0.0) {
            return Err(TrjError::InvalidParameter(format!(
                "degenerate training coordinate {c}: zero variance"
            )));
        }
        scale[c] = 1.0 / var.sqrt();
    }
    Ok((center, scale))
}

fn check_samples(samples: &Matrix) -> Result<()> {
    if samples.rows < 50 {
        return Err(TrjError::InvalidParameter(format!(
            "need at least 50 samples to fit a flow, got {}",
            samples.rows
        )));
    }
    if let Some(i) = samples.data.iter().position(|v| !v.is_finite()) {
        return Err(TrjError::NonFiniteInput { index: i });
    }
    Ok(())
}

/// Split rows into train/validation index sets, shuffled by the seed.
fn split_rows(n: usize, frac: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_val = ((frac * n as f64).ceil() as usize).max(1);
    let val = idx.split_off(n - n_val);
    (idx, val)
}

/// Fit an unconditional spline flow to samples by maximum likelihood.
pub fn fit_flow(samples: &Matrix, config: &TrainConfig) -> Result<(SplineFlow, TrainReport)> {
    check_samples(samples)?;
    config.validate(samples.rows)?;
    let n = samples.cols;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (train_rows, val_rows) = split_rows(samples.rows, config.validation_fraction, &mut rng);
    let (center, scale) = standardization(samples, &train_rows)?;
    let mut flow = SplineFlow::new(
        n,
        config.shape.bins,
        config.shape.layers,
        config.shape.hidden_for(n),
        center,
        scale,
        config.seed,
    )?;
    let mut params = flow.params.clone();
    let report = train_loop(
        config,
        &mut rng,
        &train_rows,
        &mut params,
        |params, rows| {
            batched_loss_grad(params, rows, |tape, r| flow.log_density_tape(tape, samples.row(r)))
        },
        |params| {
            val_rows
                .iter()
                .map(|&r| -flow.log_density_with(params, samples.row(r)))
                .sum::<f64>()
                / val_rows.len() as f64
        },
    )?;
    flow.params = params;
    Ok((flow, report))
}

/// Fit a single conditional flow on the saturated space; `context[r]` gives
/// the model index of row `r`, and `aux_mask[k][i]` marks the auxiliary
/// coordinates of model `k`.
pub fn fit_conditional_flow(
    samples: &Matrix,
    context: &[usize],
    n_models: usize,
    aux_mask: Vec<Vec<bool>>,
    reference: Reference,
    config: &TrainConfig,
) -> Result<(ConditionalSplineFlow, TrainReport)> {
    check_samples(samples)?;
    config.validate(samples.rows)?;
    if context.len() != samples.rows {
        return Err(TrjError::DimensionMismatch { expected: samples.rows, got: context.len() });
    }
    for k in 0..n_models {
        if !context.contains(&k) {
            return Err(TrjError::InvalidParameter(format!("model {k} has no training rows")));
        }
    }
    let n = samples.cols;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (train_rows, val_rows) = split_rows(samples.rows, config.validation_fraction, &mut rng);
    // Pooled moments over the training rows, shared across models.
    let (center, scale) = standardization(samples, &train_rows)?;
    let mut flow = ConditionalSplineFlow::new(
        n,
        n_models,
        aux_mask,
        config.shape.bins,
        config.shape.layers,
        config.shape.hidden_for(n),
        center,
        scale,
        reference,
        config.seed,
    )?;
    let mut params = flow.params.clone();
    let report = train_loop(
        config,
        &mut rng,
        &train_rows,
        &mut params,
        |params, rows| {
            batched_loss_grad(params, rows, |tape, r| {
                flow.log_density_tape(tape, context[r], samples.row(r))
            })
        },
        |params| {
            val_rows
                .iter()
                .map(|&r| -flow.log_density_given_with(params, context[r], samples.row(r)))
                .sum::<f64>()
                / val_rows.len() as f64
        },
    )?;
    flow.params = params;
    Ok((flow, report))
}

/// The epoch loop shared by both fits: batched gradient steps, validation
/// tracking, early stopping, best-parameter restore.
fn train_loop<G, V>(
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    train_rows: &[usize],
    params: &mut Vec<f64>,
    grad_fn: G,
    val_fn: V,
) -> Result<TrainReport>
where
    G: Fn(&[f64], &[usize]) -> Result<(f64, Vec<f64>)>,
    V: Fn(&[f64]) -> f64,
{
    let initial_val = val_fn(params);
    let mut best_params = params.clone();
    let mut best_val = initial_val;
    let mut best_epoch = 0usize;
    let mut train_nll = Vec::new();
    let mut val_nll = Vec::new();
    let mut opt = MomentOptimizer::new(params.len());
    let mut order: Vec<usize> = train_rows.to_vec();
    let mut epochs_run = 0;
    for epoch in 0..config.epochs {
        order.shuffle(rng);
        let lr = cosine_lr(config.learning_rate, epoch, config.epochs);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0;
        for batch in order.chunks(config.batch_size) {
            let (loss, grad) = grad_fn(params, batch)
                .map_err(|e| TrjError::Training(format!("epoch {epoch}, batch {n_batches}: {e}")))?;
            opt.step(params, &grad, lr);
            epoch_loss += loss;
            n_batches += 1;
        }
        epochs_run = epoch + 1;
        let train = epoch_loss / n_batches as f64;
        let val = val_fn(params);
        if !val.is_finite() || !train.is_finite() {
            return Err(TrjError::Training(format!(
                "non-finite NLL at epoch {epoch}: train {train}, val {val}"
            )));
        }
        train_nll.push(train);
        val_nll.push(val);
        if val < best_val {
            best_val = val;
            best_epoch = epoch + 1;
            best_params.copy_from_slice(params);
        }
        if epoch + 1 - best_epoch >= config.patience {
            break;
        }
    }
    *params = best_params;
    Ok(TrainReport {
        train_nll,
        val_nll,
        initial_val_nll: initial_val,
        best_val_nll: best_val,
        best_epoch,
        epochs_run,
    })
}
