//! The four surrogate variants built from three constituent networks.
//!
//! `NN_L` maps `x` to the low-fidelity prediction `ŷ_L`. The linear head `NN_H1`
//! and the nonlinear head `NN_H2` both read `[x, ŷ_L]`, and the high-fidelity
//! prediction is `ω·ỹ_l + (1 − ω)·ỹ_nl`. Single-fidelity variants only use
//! `NN_H2`, fed with `x` alone.
//!
//! Everything here except the `CompositeSurrogate` prediction methods works in
//! normalized space.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::diffengine::{augment, mse_terms, DualBatch};
use crate::linalg::Matrix;
use crate::network::{init_mlp, Activation, LayerSpec, Mlp};
use crate::training::NormalizationScalers;
use crate::{Error, Result};

/// Initial value of the mixing weight.
pub const OMEGA_INIT: f64 = 0.5;

/// Rows evaluated at once by the prediction helpers.
const PREDICT_CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelVariant {
    Nn,
    Genn,
    Mfnn,
    Gemfnn,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 4] = [
        ModelVariant::Nn,
        ModelVariant::Genn,
        ModelVariant::Mfnn,
        ModelVariant::Gemfnn,
    ];

    pub fn uses_gradients(self) -> bool {
        matches!(self, ModelVariant::Genn | ModelVariant::Gemfnn)
    }

    pub fn is_multifidelity(self) -> bool {
        matches!(self, ModelVariant::Mfnn | ModelVariant::Gemfnn)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Nn => "NN",
            ModelVariant::Genn => "GENN",
            ModelVariant::Mfnn => "MFNN",
            ModelVariant::Gemfnn => "GEMFNN",
        }
    }

    /// Case-insensitive; accepts the singular and plural spellings (`GENN`, `genns`).
    pub fn parse(s: &str) -> Option<Self> {
        let upper = s.trim().to_ascii_uppercase();
        let key = upper.strip_suffix('S').unwrap_or(&upper);
        ModelVariant::ALL.into_iter().find(|v| v.name() == key)
    }

    fn error(self, reason: impl Into<String>) -> Error {
        Error::Variant {
            variant: self.name(),
            reason: reason.into(),
        }
    }
}

impl core::fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hidden-layer widths of the three networks. Output layers (width 1, linear)
/// are appended when the networks are built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub low_hidden: Vec<usize>,
    pub linear_hidden: Vec<usize>,
    pub nonlinear_hidden: Vec<usize>,
}

impl Architecture {
    fn specs(hidden: &[usize], act: Activation) -> Vec<LayerSpec> {
        hidden
            .iter()
            .map(|&w| LayerSpec::new(w, act))
            .chain(core::iter::once(LayerSpec::linear(1)))
            .collect()
    }

    pub fn low_specs(&self) -> Vec<LayerSpec> {
        Self::specs(&self.low_hidden, Activation::Tanh)
    }

    pub fn linear_specs(&self) -> Vec<LayerSpec> {
        Self::specs(&self.linear_hidden, Activation::Linear)
    }

    pub fn nonlinear_specs(&self) -> Vec<LayerSpec> {
        Self::specs(&self.nonlinear_hidden, Activation::Tanh)
    }
}

/// Trainable parameters: the three networks and `ω`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateParams {
    pub low: Option<Mlp>,
    pub linear: Option<Mlp>,
    pub nonlinear: Mlp,
    pub omega: f64,
}

impl SurrogateParams {
    /// Fresh Glorot-initialized networks. The three networks draw from seeds
    /// `seed`, `seed + 1` and `seed + 2`.
    pub fn init(variant: ModelVariant, input_dim: usize, arch: &Architecture, seed: u64) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::config("input dimension must be at least 1"));
        }
        if variant.is_multifidelity() {
            let low = init_mlp(input_dim, &arch.low_specs(), seed)?;
            let linear = init_mlp(input_dim + 1, &arch.linear_specs(), seed.wrapping_add(1))?;
            let nonlinear =
                init_mlp(input_dim + 1, &arch.nonlinear_specs(), seed.wrapping_add(2))?;
            Ok(SurrogateParams {
                low: Some(low),
                linear: Some(linear),
                nonlinear,
                omega: OMEGA_INIT,
            })
        } else {
            Ok(SurrogateParams {
                low: None,
                linear: None,
                nonlinear: init_mlp(input_dim, &arch.nonlinear_specs(), seed.wrapping_add(2))?,
                omega: OMEGA_INIT,
            })
        }
    }

    /// Checks the structural invariants of the composite for `variant`.
    pub fn validate(&self, variant: ModelVariant, input_dim: usize) -> Result<()> {
        let single_out = |m: &Mlp, name: &str| -> Result<()> {
            if m.output_dim() != 1 {
                return Err(Error::shape(format!("{name} output width"), 1, m.output_dim()));
            }
            Ok(())
        };
        single_out(&self.nonlinear, "nonlinear head")?;
        if variant.is_multifidelity() {
            let (Some(low), Some(linear)) = (&self.low, &self.linear) else {
                return Err(variant.error("multifidelity variant needs low and linear networks"));
            };
            single_out(low, "low-fidelity network")?;
            single_out(linear, "linear head")?;
            if low.input_dim() != input_dim {
                return Err(Error::shape("low-fidelity network input", input_dim, low.input_dim()));
            }
            for (m, name) in [(linear, "linear head"), (&self.nonlinear, "nonlinear head")] {
                if m.input_dim() != input_dim + 1 {
                    return Err(Error::shape(format!("{name} input"), input_dim + 1, m.input_dim()));
                }
            }
            let hidden = linear.layers().len() - 1;
            if linear.layers()[..hidden]
                .iter()
                .any(|l| l.activation() != Activation::Linear)
            {
                return Err(variant.error("linear head must use linear activations"));
            }
        } else {
            if self.low.is_some() || self.linear.is_some() {
                return Err(variant.error("single-fidelity variant carries only the nonlinear head"));
            }
            if self.nonlinear.input_dim() != input_dim {
                return Err(Error::shape(
                    "nonlinear head input",
                    input_dim,
                    self.nonlinear.input_dim(),
                ));
            }
        }
        Ok(())
    }

    pub fn is_multifidelity(&self) -> bool {
        self.low.is_some()
    }

    pub fn input_dim(&self) -> usize {
        match &self.low {
            Some(l) => l.input_dim(),
            None => self.nonlinear.input_dim(),
        }
    }

    /// All parameter buffers in a fixed order: `NN_L`, `NN_H1`, `NN_H2` (weights
    /// then bias per layer), then `ω` for multifidelity sets.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for m in [self.low.as_ref(), self.linear.as_ref(), Some(&self.nonlinear)]
            .into_iter()
            .flatten()
        {
            for l in m.layers() {
                out.push(l.weights());
                out.push(l.bias());
            }
        }
        if self.is_multifidelity() {
            out.push(core::slice::from_ref(&self.omega));
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mf = self.is_multifidelity();
        let mut out: Vec<&mut [f64]> = Vec::new();
        for m in [self.low.as_mut(), self.linear.as_mut(), Some(&mut self.nonlinear)]
            .into_iter()
            .flatten()
        {
            for l in m.layers_mut() {
                let (w, b) = (l.weights.as_mut_slice(), l.bias.as_mut_slice());
                out.push(w);
                out.push(b);
            }
        }
        if mf {
            out.push(core::slice::from_mut(&mut self.omega));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }
}

/// A normalized mini-batch of one fidelity level.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBatch {
    pub x: Matrix,
    pub y: Vec<f64>,
    /// `[N x D]` output gradients, when available.
    pub grad: Option<Matrix>,
}

impl LossBatch {
    pub fn new(x: Matrix, y: Vec<f64>, grad: Option<Matrix>) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::shape("batch outputs", x.rows(), y.len()));
        }
        if let Some(g) = &grad {
            if g.rows() != x.rows() || g.cols() != x.cols() {
                return Err(Error::shape("batch gradients", x.rows() * x.cols(), g.rows() * g.cols()));
            }
        }
        Ok(LossBatch { x, y, grad })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// The individual mean-squared terms of a loss. Absent terms stay zero.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub hf_value: f64,
    pub hf_gradient: f64,
    pub lf_value: f64,
    pub lf_gradient: f64,
}

impl LossTerms {
    pub fn total(&self) -> f64 {
        self.hf_value + self.hf_gradient + self.lf_value + self.lf_gradient
    }

    pub(crate) fn check_finite(&self) -> Result<()> {
        for (v, name) in [
            (self.hf_value, "high-fidelity value term"),
            (self.hf_gradient, "high-fidelity gradient term"),
            (self.lf_value, "low-fidelity value term"),
            (self.lf_gradient, "low-fidelity gradient term"),
        ] {
            if !v.is_finite() {
                return Err(Error::numerical(name));
            }
        }
        Ok(())
    }
}

/// Validates the inputs of a loss evaluation and returns the low-fidelity batch
/// when the variant needs it.
pub(crate) fn check_loss_inputs<'a>(
    variant: ModelVariant,
    params: &SurrogateParams,
    high: &LossBatch,
    low: Option<&'a LossBatch>,
) -> Result<Option<&'a LossBatch>> {
    if high.is_empty() {
        return Err(Error::data("high-fidelity batch is empty"));
    }
    let dim = high.x.cols();
    params.validate(variant, dim)?;
    if variant.uses_gradients() && high.grad.is_none() {
        return Err(variant.error("high-fidelity gradients are required"));
    }
    if !variant.is_multifidelity() {
        return Ok(None);
    }
    let low = low.ok_or_else(|| variant.error("low-fidelity data is required"))?;
    if low.is_empty() {
        return Err(Error::data("low-fidelity batch is empty"));
    }
    if low.x.cols() != dim {
        return Err(Error::shape("low-fidelity batch columns", dim, low.x.cols()));
    }
    if variant.uses_gradients() && low.grad.is_none() {
        return Err(variant.error("low-fidelity gradients are required"));
    }
    Ok(Some(low))
}

/// Normalized high-fidelity prediction (with tangents when `with_grad`) and the
/// `NN_L` output on the same inputs for multifidelity sets.
pub(crate) fn forward_high(
    params: &SurrogateParams,
    x: &Matrix,
    with_grad: bool,
) -> Result<(DualBatch, Option<DualBatch>)> {
    match (&params.low, &params.linear) {
        (Some(low), Some(linear)) => {
            let k = if with_grad { x.cols() } else { 0 };
            let low_out = low.propagate(DualBatch::seed_with(x, with_grad))?;
            let aug = augment(x, &low_out, k);
            let h1 = linear.propagate(aug.clone())?;
            let h2 = params.nonlinear.propagate(aug)?;
            let omega = params.omega;
            let data = h1
                .raw()
                .iter()
                .zip(h2.raw())
                .map(|(a, b)| omega * a + (1.0 - omega) * b)
                .collect();
            Ok((DualBatch::from_raw(x.rows(), 1, k, data), Some(low_out)))
        }
        _ => Ok((
            params.nonlinear.propagate(DualBatch::seed_with(x, with_grad))?,
            None,
        )),
    }
}

/// The loss terms of `variant` in normalized space.
pub fn compute_loss_terms(
    variant: ModelVariant,
    params: &SurrogateParams,
    high: &LossBatch,
    low: Option<&LossBatch>,
) -> Result<LossTerms> {
    let low = check_loss_inputs(variant, params, high, low)?;
    let with_grad = variant.uses_gradients();
    let k = if with_grad { high.x.cols() } else { 0 };
    let mut terms = LossTerms::default();
    let (pred, _) = forward_high(params, &high.x, with_grad)?;
    (terms.hf_value, terms.hf_gradient) = mse_terms(pred.raw(), k, high, with_grad, None);
    if let Some(low) = low {
        let low_net = params.low.as_ref().expect("validated");
        let out = low_net.propagate(DualBatch::seed_with(&low.x, with_grad))?;
        (terms.lf_value, terms.lf_gradient) = mse_terms(out.raw(), k, low, with_grad, None);
    }
    terms.check_finite()?;
    Ok(terms)
}

/// NN: HF value MSE. GENN: + HF gradient MSE. MFNN: + LF value MSE.
/// GEMFNN: + LF gradient MSE + HF gradient MSE. Gradient terms sum over the
/// `D` components and divide by the batch size only.
pub fn compute_loss(
    variant: ModelVariant,
    params: &SurrogateParams,
    high: &LossBatch,
    low: Option<&LossBatch>,
) -> Result<f64> {
    Ok(compute_loss_terms(variant, params, high, low)?.total())
}

/// A trained or trainable surrogate together with its normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeSurrogate {
    pub variant: ModelVariant,
    pub params: SurrogateParams,
    pub scalers: NormalizationScalers,
}

impl CompositeSurrogate {
    /// Freshly initialized model with identity scalers; training fits the scalers.
    pub fn new(variant: ModelVariant, input_dim: usize, arch: &Architecture, seed: u64) -> Result<Self> {
        Ok(CompositeSurrogate {
            variant,
            params: SurrogateParams::init(variant, input_dim, arch, seed)?,
            scalers: NormalizationScalers::identity(input_dim, variant.is_multifidelity()),
        })
    }

    pub fn from_parts(
        variant: ModelVariant,
        params: SurrogateParams,
        scalers: NormalizationScalers,
    ) -> Result<Self> {
        let dim = scalers.dim();
        params.validate(variant, dim)?;
        if variant.is_multifidelity() && scalers.y_low.is_none() {
            return Err(variant.error("multifidelity model needs low-fidelity output scaling"));
        }
        Ok(CompositeSurrogate {
            variant,
            params,
            scalers,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim()
    }

    fn check_x(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape("prediction input columns", self.input_dim(), x.cols()));
        }
        Ok(())
    }

    fn chunks(x: &Matrix) -> impl Iterator<Item = Matrix> + '_ {
        (0..x.rows()).step_by(PREDICT_CHUNK).map(move |start| {
            let end = (start + PREDICT_CHUNK).min(x.rows());
            let idx: Vec<usize> = (start..end).collect();
            x.select_rows(&idx)
        })
    }

    /// Physical-space low-fidelity prediction.
    pub fn predict_low(&self, x: &Matrix) -> Result<Vec<f64>> {
        let Some(low) = &self.params.low else {
            return Err(self.variant.error("predict_low needs a multifidelity model"));
        };
        self.check_x(x)?;
        let (mean, std) = self.scalers.y_low.expect("validated multifidelity scalers");
        let mut out = Vec::with_capacity(x.rows());
        for chunk in Self::chunks(x) {
            let xn = self.scalers.normalize_x(&chunk);
            let y = low.forward(&xn)?;
            out.extend(y.as_slice().iter().map(|v| mean + std * v));
        }
        Ok(out)
    }

    /// Physical-space high-fidelity prediction.
    pub fn predict_high(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_x(x)?;
        let mut out = Vec::with_capacity(x.rows());
        for chunk in Self::chunks(x) {
            let xn = self.scalers.normalize_x(&chunk);
            let (pred, _) = forward_high(&self.params, &xn, false)?;
            out.extend(self.scalers.denormalize_y_high(pred.raw()));
        }
        Ok(out)
    }

    /// Physical-space prediction and its total gradient with respect to `x`,
    /// including the path through `ŷ_L`.
    pub fn predict_high_with_gradient(&self, x: &Matrix) -> Result<(Vec<f64>, Matrix)> {
        self.check_x(x)?;
        let dim = x.cols();
        let mut values = Vec::with_capacity(x.rows());
        let mut grads = Vec::with_capacity(x.rows() * dim);
        for chunk in Self::chunks(x) {
            let xn = self.scalers.normalize_x(&chunk);
            let (pred, _) = forward_high(&self.params, &xn, true)?;
            let v = pred.values();
            values.extend(self.scalers.denormalize_y_high(v.as_slice()));
            let mut g = vec![0.0; chunk.rows() * dim];
            for b in 0..chunk.rows() {
                for d in 0..dim {
                    g[b * dim + d] = pred.tangent(b, 0, d);
                }
            }
            let g = Matrix::from_vec(chunk.rows(), dim, g)?;
            grads.extend_from_slice(self.scalers.denormalize_grad_high(&g).as_slice());
        }
        Ok((values, Matrix::from_vec(x.rows(), dim, grads)?))
    }

    /// Normalized-space compositional parts `(ỹ_l, ỹ_nl)` for multifidelity models.
    pub fn head_outputs(&self, x: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
        let (Some(low), Some(linear)) = (&self.params.low, &self.params.linear) else {
            return Err(self.variant.error("head outputs need a multifidelity model"));
        };
        self.check_x(x)?;
        let xn = self.scalers.normalize_x(x);
        let low_out = low.propagate(DualBatch::from_values(&xn))?;
        let aug = augment(&xn, &low_out, 0);
        let h1 = linear.propagate(aug.clone())?.values().into_vec();
        let h2 = self.params.nonlinear.propagate(aug)?.values().into_vec();
        Ok((h1, h2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Dense;

    fn arch() -> Architecture {
        Architecture {
            low_hidden: vec![6],
            linear_hidden: vec![4],
            nonlinear_hidden: vec![5],
        }
    }

    fn batch(n: usize, dim: usize, seed: f64, grads: bool) -> LossBatch {
        let x = Matrix::from_vec(
            n,
            dim,
            (0..n * dim).map(|i| ((i as f64 + seed) * 0.77).sin()).collect(),
        )
        .unwrap();
        let y = (0..n).map(|i| ((i as f64 + seed) * 1.3).cos()).collect();
        let g = grads.then(|| {
            Matrix::from_vec(
                n,
                dim,
                (0..n * dim).map(|i| ((i as f64 + seed) * 0.41).cos()).collect(),
            )
            .unwrap()
        });
        LossBatch::new(x, y, g).unwrap()
    }

    #[test]
    fn variant_flags_and_names() {
        assert!(!ModelVariant::Nn.uses_gradients() && !ModelVariant::Nn.is_multifidelity());
        assert!(ModelVariant::Genn.uses_gradients() && !ModelVariant::Genn.is_multifidelity());
        assert!(!ModelVariant::Mfnn.uses_gradients() && ModelVariant::Mfnn.is_multifidelity());
        assert!(ModelVariant::Gemfnn.uses_gradients() && ModelVariant::Gemfnn.is_multifidelity());
        for v in ModelVariant::ALL {
            assert_eq!(ModelVariant::parse(v.name()), Some(v));
        }
        assert_eq!(ModelVariant::parse("gemfnns"), Some(ModelVariant::Gemfnn));
        assert_eq!(ModelVariant::parse("kriging"), None);
    }

    #[test]
    fn init_shapes() {
        let p = SurrogateParams::init(ModelVariant::Gemfnn, 3, &arch(), 1).unwrap();
        assert_eq!(p.low.as_ref().unwrap().input_dim(), 3);
        assert_eq!(p.linear.as_ref().unwrap().input_dim(), 4);
        assert_eq!(p.nonlinear.input_dim(), 4);
        assert_eq!(p.omega, 0.5);
        p.validate(ModelVariant::Gemfnn, 3).unwrap();

        let s = SurrogateParams::init(ModelVariant::Genn, 3, &arch(), 1).unwrap();
        assert!(s.low.is_none() && s.linear.is_none());
        assert_eq!(s.nonlinear.input_dim(), 3);
        assert!(s.validate(ModelVariant::Mfnn, 3).is_err());
    }

    #[test]
    fn zero_low_network_predicts_zero() {
        let mut m = CompositeSurrogate::new(ModelVariant::Mfnn, 2, &arch(), 3).unwrap();
        for l in m.params.low.as_mut().unwrap().layers_mut() {
            l.weights_mut().iter_mut().for_each(|w| *w = 0.0);
        }
        let x = Matrix::from_rows(&[[0.1, 0.2], [3.0, -4.0]]).unwrap();
        assert_eq!(m.predict_low(&x).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn predict_low_on_single_fidelity_is_variant_error() {
        let m = CompositeSurrogate::new(ModelVariant::Nn, 2, &arch(), 3).unwrap();
        let x = Matrix::zeros(1, 2);
        assert!(matches!(m.predict_low(&x), Err(Error::Variant { .. })));
    }

    #[test]
    fn omega_endpoints_and_midpoint() {
        let mut m = CompositeSurrogate::new(ModelVariant::Gemfnn, 2, &arch(), 9).unwrap();
        let x = Matrix::from_rows(&[[0.3, -0.2], [1.0, 0.5]]).unwrap();
        let (h1, h2) = m.head_outputs(&x).unwrap();
        m.params.omega = 1.0;
        assert_eq!(m.predict_high(&x).unwrap(), h1);
        m.params.omega = 0.0;
        assert_eq!(m.predict_high(&x).unwrap(), h2);

        // with scalers at identity the composite is literally ω·ỹ_l + (1-ω)·ỹ_nl
        m.params.omega = 0.5;
        let p = m.predict_high(&x).unwrap();
        for i in 0..2 {
            assert_eq!(p[i], 0.5 * h1[i] + 0.5 * h2[i]);
        }
    }

    #[test]
    fn omega_perturbation_is_exactly_linear() {
        let mut m = CompositeSurrogate::new(ModelVariant::Mfnn, 2, &arch(), 2).unwrap();
        let x = Matrix::from_rows(&[[0.25, 0.75]]).unwrap();
        let (h1, h2) = m.head_outputs(&x).unwrap();
        m.params.omega = 0.25;
        let a = m.predict_high(&x).unwrap()[0];
        m.params.omega = 0.5;
        let b = m.predict_high(&x).unwrap()[0];
        let expected = 0.25 * (h1[0] - h2[0]);
        assert!(((b - a) - expected).abs() <= 1e-15 * (1.0 + a.abs() + b.abs()));
    }

    #[test]
    fn single_fidelity_linear_gradient() {
        let w = Matrix::from_rows(&[[2.5, -1.5]]).unwrap();
        let params = SurrogateParams {
            low: None,
            linear: None,
            nonlinear: Mlp::from_layers(2, vec![Dense::new(w, vec![0.0], Activation::Linear).unwrap()])
                .unwrap(),
            omega: 0.5,
        };
        let m = CompositeSurrogate::from_parts(
            ModelVariant::Nn,
            params,
            NormalizationScalers::identity(2, false),
        )
        .unwrap();
        let x = Matrix::from_rows(&[[1.0, 2.0], [-3.0, 0.5]]).unwrap();
        let (_, g) = m.predict_high_with_gradient(&x).unwrap();
        for b in 0..2 {
            assert_eq!(g.row(b), &[2.5, -1.5]);
        }
    }

    #[test]
    fn nn_prediction_is_raw_nonlinear_forward() {
        let m = CompositeSurrogate::new(ModelVariant::Nn, 3, &arch(), 4).unwrap();
        let x = batch(7, 3, 0.0, false).x;
        let raw = m.params.nonlinear.forward(&x).unwrap();
        assert_eq!(m.predict_high(&x).unwrap(), raw.into_vec());
    }

    #[test]
    fn genn_constant_gradient_offset() {
        // perfect values, every gradient component off by δ → loss D·δ²
        let w = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let params = SurrogateParams {
            low: None,
            linear: None,
            nonlinear: Mlp::from_layers(3, vec![Dense::new(w, vec![0.5], Activation::Linear).unwrap()])
                .unwrap(),
            omega: 0.5,
        };
        let x = batch(5, 3, 1.0, false).x;
        let y = params.nonlinear.forward(&x).unwrap().into_vec();
        let delta = 0.125;
        let g = Matrix::from_vec(5, 3, (0..5).flat_map(|_| [1.0 + delta, 2.0 + delta, 3.0 + delta]).collect()).unwrap();
        let hb = LossBatch::new(x, y, Some(g)).unwrap();
        let l = compute_loss(ModelVariant::Genn, &params, &hb, None).unwrap();
        assert!((l - 3.0 * delta * delta).abs() < 1e-15);
        assert_eq!(compute_loss(ModelVariant::Nn, &params, &hb, None).unwrap(), 0.0);
    }

    #[test]
    fn missing_data_is_variant_error() {
        let p = SurrogateParams::init(ModelVariant::Gemfnn, 2, &arch(), 0).unwrap();
        let hb = batch(4, 2, 0.0, false);
        let lb = batch(4, 2, 1.0, true);
        assert!(matches!(
            compute_loss(ModelVariant::Gemfnn, &p, &hb, Some(&lb)),
            Err(Error::Variant { .. })
        ));
        let hb = batch(4, 2, 0.0, true);
        assert!(matches!(
            compute_loss(ModelVariant::Gemfnn, &p, &hb, None),
            Err(Error::Variant { .. })
        ));
    }

    #[test]
    fn non_finite_loss_is_numerical_error() {
        let p = SurrogateParams::init(ModelVariant::Nn, 2, &arch(), 0).unwrap();
        let mut hb = batch(3, 2, 0.0, false);
        hb.y[1] = f64::INFINITY;
        match compute_loss(ModelVariant::Nn, &p, &hb, None) {
            Err(Error::Numerical { term }) => assert!(term.contains("high-fidelity value")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn loss_ordering_holds() {
        let p = SurrogateParams::init(ModelVariant::Gemfnn, 2, &arch(), 5).unwrap();
        let hb = batch(6, 2, 0.0, true);
        let lb = batch(6, 2, 3.0, true);
        let nn_terms = compute_loss_terms(ModelVariant::Mfnn, &p, &hb, Some(&lb)).unwrap();
        let l_gem = compute_loss(ModelVariant::Gemfnn, &p, &hb, Some(&lb)).unwrap();
        let l_mf = nn_terms.total();
        assert!(l_gem >= l_mf && l_mf >= nn_terms.hf_value);
    }
}
