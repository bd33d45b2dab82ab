//! Normalization, the ADAM optimizer and the mini-batch training loop.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datagen::{FidelityBlock, MultiFidelityDataset};
use crate::diffengine::{loss_param_gradient, ParamGradient};
use crate::linalg::Matrix;
use crate::math;
use crate::models::{CompositeSurrogate, LossBatch, ModelVariant, SurrogateParams};
use crate::{Error, Result};

/// Z-score statistics for inputs and both output levels.
///
/// Standard deviations are population (divide-by-n) values; a zero-variance
/// column gets std 1.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationScalers {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    /// `(mean, std)` of the high-fidelity outputs.
    pub y_high: (f64, f64),
    /// `(mean, std)` of the low-fidelity outputs, for multifidelity data.
    pub y_low: Option<(f64, f64)>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = math::sqrt(var);
    let clamped = if std > 1e-12 * mean.abs().max(1.0) { std } else { 1.0 };
    (mean, clamped)
}

impl NormalizationScalers {
    pub fn identity(dim: usize, with_low: bool) -> Self {
        NormalizationScalers {
            x_mean: vec![0.0; dim],
            x_std: vec![1.0; dim],
            y_high: (0.0, 1.0),
            y_low: with_low.then_some((0.0, 1.0)),
        }
    }

    pub fn dim(&self) -> usize {
        self.x_mean.len()
    }

    pub fn normalize_x(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        let cols = x.cols();
        for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
            let k = i % cols;
            *v = (*v - self.x_mean[k]) / self.x_std[k];
        }
        out
    }

    pub fn denormalize_x(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        let cols = x.cols();
        for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
            let k = i % cols;
            *v = *v * self.x_std[k] + self.x_mean[k];
        }
        out
    }

    pub fn normalize_y(y: &[f64], (mean, std): (f64, f64)) -> Vec<f64> {
        y.iter().map(|v| (v - mean) / std).collect()
    }

    pub fn denormalize_y(y: &[f64], (mean, std): (f64, f64)) -> Vec<f64> {
        y.iter().map(|v| v * std + mean).collect()
    }

    pub fn denormalize_y_high(&self, y: &[f64]) -> Vec<f64> {
        Self::denormalize_y(y, self.y_high)
    }

    /// `∂ỹ/∂x̃_k = ∂y/∂x_k · σ_x,k / σ_y`.
    pub fn normalize_grad(&self, grad: &Matrix, y_std: f64) -> Matrix {
        let mut out = grad.clone();
        let cols = grad.cols();
        for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
            *v = *v * self.x_std[i % cols] / y_std;
        }
        out
    }

    pub fn denormalize_grad(&self, grad: &Matrix, y_std: f64) -> Matrix {
        let mut out = grad.clone();
        let cols = grad.cols();
        for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
            *v = *v * y_std / self.x_std[i % cols];
        }
        out
    }

    pub fn denormalize_grad_high(&self, grad: &Matrix) -> Matrix {
        self.denormalize_grad(grad, self.y_high.1)
    }

    /// Normalized copy of one fidelity block; gradients kept only when `with_grad`.
    pub fn normalize_block(
        &self,
        block: &FidelityBlock,
        y_stats: (f64, f64),
        with_grad: bool,
    ) -> Result<LossBatch> {
        let grad = if with_grad {
            let g = block
                .grad
                .as_ref()
                .ok_or_else(|| Error::data("gradients requested but absent"))?;
            Some(self.normalize_grad(g, y_stats.1))
        } else {
            None
        };
        LossBatch::new(
            self.normalize_x(&block.x),
            Self::normalize_y(&block.y, y_stats),
            grad,
        )
    }
}

/// Input statistics over the union of high- and
/// low-fidelity training inputs, output statistics per fidelity level.
pub fn fit_scalers(data: &MultiFidelityDataset) -> Result<NormalizationScalers> {
    let high = &data.high;
    if high.is_empty() {
        return Err(Error::data("high-fidelity training set is empty"));
    }
    let dim = high.dim();
    let low = data.low.as_ref().filter(|b| !b.is_empty());
    let mut x_mean = Vec::with_capacity(dim);
    let mut x_std = Vec::with_capacity(dim);
    for k in 0..dim {
        let col = high
            .x
            .iter_rows()
            .chain(low.into_iter().flat_map(|b| b.x.iter_rows()))
            .map(|r| r[k])
            .collect::<Vec<_>>();
        let (m, s) = mean_std(&col);
        x_mean.push(m);
        x_std.push(s);
    }
    Ok(NormalizationScalers {
        x_mean,
        x_std,
        y_high: mean_std(&high.y),
        y_low: low.map(|b| mean_std(&b.y)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 1000,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        for (b, name) in [(self.beta1, "beta1"), (self.beta2, "beta2")] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::config(alloc::format!("{name} must lie in (0, 1)")));
            }
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::config("epsilon must be positive"));
        }
        Ok(())
    }
}

/// ADAM moment accumulators, congruent with the parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ParamGradient,
    pub v: ParamGradient,
    pub t: u64,
    beta1_pow: f64,
    beta2_pow: f64,
}

impl AdamState {
    pub fn new(params: &SurrogateParams) -> Self {
        AdamState {
            m: ParamGradient::zeros_like(params),
            v: ParamGradient::zeros_like(params),
            t: 0,
            beta1_pow: 1.0,
            beta2_pow: 1.0,
        }
    }
}

/// One bias-corrected ADAM update in place.
pub fn adam_step(
    params: &mut SurrogateParams,
    grads: &ParamGradient,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::numerical("parameter gradient"));
    }
    let g_slices = grads.slices();
    let mut p_slices = params.slices_mut();
    if g_slices.len() != p_slices.len() {
        return Err(Error::shape("gradient slots", p_slices.len(), g_slices.len()));
    }
    state.t += 1;
    state.beta1_pow *= cfg.beta1;
    state.beta2_pow *= cfg.beta2;
    let bc1 = 1.0 - state.beta1_pow;
    let bc2 = 1.0 - state.beta2_pow;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let lr = cfg.learning_rate;
    let eps = cfg.epsilon;
    let mut m_slices = state.m.slices_mut();
    let mut v_slices = state.v.slices_mut();
    for (((p, g), m), v) in p_slices
        .iter_mut()
        .zip(&g_slices)
        .zip(m_slices.iter_mut())
        .zip(v_slices.iter_mut())
    {
        if p.len() != g.len() {
            return Err(Error::shape("gradient slot", p.len(), g.len()));
        }
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + (1.0 - b1) * gi;
            v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (math::sqrt(v_hat) + eps);
        }
    }
    Ok(())
}

/// Checks that `data` carries everything `variant` trains on.
pub fn check_requirements(variant: ModelVariant, data: &MultiFidelityDataset) -> Result<()> {
    let err = |reason: &str| Error::Variant {
        variant: variant.name(),
        reason: reason.into(),
    };
    if data.high.is_empty() {
        return Err(Error::data("high-fidelity training set is empty"));
    }
    if variant.uses_gradients() && data.high.grad.is_none() {
        return Err(err("high-fidelity gradients are missing from the dataset"));
    }
    if variant.is_multifidelity() {
        let low = data
            .low
            .as_ref()
            .filter(|b| !b.is_empty())
            .ok_or_else(|| err("low-fidelity samples are missing from the dataset"))?;
        if variant.uses_gradients() && low.grad.is_none() {
            return Err(err("low-fidelity gradients are missing from the dataset"));
        }
    }
    Ok(())
}

/// Trains `model` on `data`; see [`train_observed`].
pub fn train(
    model: CompositeSurrogate,
    data: &MultiFidelityDataset,
    cfg: &TrainConfig,
) -> Result<(CompositeSurrogate, Vec<f64>)> {
    train_observed(model, data, cfg, |_, _| {})
}

/// Fits the scalers, then runs `epochs` passes of ADAM. Each pass shuffles the
/// high-fidelity set and walks it in mini-batches of `batch_size` (the last one
/// may be smaller). Multifidelity variants pair every step with a low-fidelity
/// mini-batch of `batch_size` samples drawn uniformly with replacement.
///
/// Returns the model and the mean per-batch loss of each epoch. `observer`
/// sees `(epoch, mean loss)` after every epoch.
pub fn train_observed(
    mut model: CompositeSurrogate,
    data: &MultiFidelityDataset,
    cfg: &TrainConfig,
    mut observer: impl FnMut(usize, f64),
) -> Result<(CompositeSurrogate, Vec<f64>)> {
    cfg.validate()?;
    let variant = model.variant;
    check_requirements(variant, data)?;
    if data.high.dim() != model.input_dim() {
        return Err(Error::shape("dataset dimension", model.input_dim(), data.high.dim()));
    }
    let mf = variant.is_multifidelity();
    let with_grad = variant.uses_gradients();

    let scoped;
    let fit_on = if mf {
        data
    } else {
        scoped = MultiFidelityDataset {
            high: data.high.clone(),
            low: None,
            test: None,
        };
        &scoped
    };
    model.scalers = fit_scalers(fit_on)?;

    let high = model
        .scalers
        .normalize_block(&data.high, model.scalers.y_high, with_grad)?;
    let low = if mf {
        let block = data.low.as_ref().expect("checked");
        let stats = model.scalers.y_low.expect("fitted with low data");
        Some(model.scalers.normalize_block(block, stats, with_grad)?)
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(&model.params);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = shuffled_order(high.len(), &mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let hb = gather(&high, chunk)?;
            let lb = match &low {
                Some(low) => {
                    let idx: Vec<usize> = (0..cfg.batch_size)
                        .map(|_| rng.random_range(0..low.len()))
                        .collect();
                    Some(gather(low, &idx)?)
                }
                None => None,
            };
            let (loss, grad) = loss_param_gradient(variant, &model.params, &hb, lb.as_ref())?;
            adam_step(&mut model.params, &grad, &mut state, cfg)?;
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        history.push(mean);
        observer(epoch, mean);
    }
    Ok((model, history))
}

/// A fresh random permutation of `0..n`; consecutive chunks of it are the
/// mini-batches of one epoch.
pub fn shuffled_order<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

fn gather(batch: &LossBatch, idx: &[usize]) -> Result<LossBatch> {
    LossBatch::new(
        batch.x.select_rows(idx),
        idx.iter().map(|&i| batch.y[i]).collect(),
        batch.grad.as_ref().map(|g| g.select_rows(idx)),
    )
}
