//! Exact derivatives for MLP surrogates.
//!
//! Every activation row carries `D` input-tangent rows next to it, so a forward
//! pass yields `∂ŷ/∂x` as an ordinary primal output. Losses that penalize
//! gradient mismatch are then plain functions of the extended forward pass,
//! and a single reverse sweep over it gives exact parameter gradients,
//! including the second-order terms through `tanh′`.
//!
//! Row layout of a [`DualBatch`] with `D` tangents: sample `b` owns rows
//! `b·(1+D) .. (b+1)·(1+D)`; the first is the value row, row `1+d` holds
//! `∂/∂x_d` of that value row.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{gemm_ab, gemm_abt, gemm_atb_acc, Matrix};
use crate::math;
use crate::models::{LossBatch, LossTerms, ModelVariant, SurrogateParams};
use crate::network::{Activation, Dense, Mlp};
use crate::{Error, Result};

/// Values with their input-tangents.
#[derive(Debug, Clone, PartialEq)]
pub struct DualBatch {
    batch: usize,
    width: usize,
    tangents: usize,
    data: Vec<f64>,
}

impl DualBatch {
    /// Values without tangents (plain evaluation).
    pub fn from_values(x: &Matrix) -> Self {
        DualBatch {
            batch: x.rows(),
            width: x.cols(),
            tangents: 0,
            data: x.as_slice().to_vec(),
        }
    }

    /// Network input: values `x`, tangents the identity for every row.
    pub fn seed(x: &Matrix) -> Self {
        Self::seed_with(x, true)
    }

    /// Identity tangents when `with_tangents`, none otherwise.
    pub fn seed_with(x: &Matrix, with_tangents: bool) -> Self {
        if !with_tangents {
            return Self::from_values(x);
        }
        let (batch, width) = (x.rows(), x.cols());
        let stride = 1 + width;
        let mut data = vec![0.0; batch * stride * width];
        for b in 0..batch {
            let base = b * stride * width;
            data[base..base + width].copy_from_slice(x.row(b));
            for d in 0..width {
                data[base + (1 + d) * width + d] = 1.0;
            }
        }
        DualBatch {
            batch,
            width,
            tangents: width,
            data,
        }
    }

    /// `tangents` laid out `[batch][width][count]`.
    pub fn from_parts(values: &Matrix, tangents: &[f64], count: usize) -> Result<Self> {
        let (batch, width) = (values.rows(), values.cols());
        if tangents.len() != batch * width * count {
            return Err(Error::shape(
                "tangent slab",
                batch * width * count,
                tangents.len(),
            ));
        }
        let stride = 1 + count;
        let mut data = vec![0.0; batch * stride * width];
        for b in 0..batch {
            let base = b * stride * width;
            data[base..base + width].copy_from_slice(values.row(b));
            for i in 0..width {
                for d in 0..count {
                    data[base + (1 + d) * width + i] = tangents[(b * width + i) * count + d];
                }
            }
        }
        Ok(DualBatch {
            batch,
            width,
            tangents: count,
            data,
        })
    }

    pub(crate) fn from_raw(batch: usize, width: usize, tangents: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), batch * (1 + tangents) * width);
        DualBatch {
            batch,
            width,
            tangents,
            data,
        }
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of tangent directions `D`.
    pub fn tangents(&self) -> usize {
        self.tangents
    }

    #[inline]
    pub(crate) fn rows(&self) -> usize {
        self.batch * (1 + self.tangents)
    }

    #[inline]
    pub fn value(&self, b: usize, i: usize) -> f64 {
        self.data[b * (1 + self.tangents) * self.width + i]
    }

    #[inline]
    pub fn tangent(&self, b: usize, i: usize, d: usize) -> f64 {
        self.data[(b * (1 + self.tangents) + 1 + d) * self.width + i]
    }

    pub fn values(&self) -> Matrix {
        let mut out = Vec::with_capacity(self.batch * self.width);
        let stride = (1 + self.tangents) * self.width;
        for b in 0..self.batch {
            out.extend_from_slice(&self.data[b * stride..b * stride + self.width]);
        }
        Matrix::from_vec(self.batch, self.width, out).expect("congruent")
    }

    /// Tangents laid out `[batch][width][D]`, the inverse of [`DualBatch::from_parts`].
    pub fn tangent_slab(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.batch * self.width * self.tangents];
        for b in 0..self.batch {
            for i in 0..self.width {
                for d in 0..self.tangents {
                    out[(b * self.width + i) * self.tangents + d] = self.tangent(b, i, d);
                }
            }
        }
        out
    }

    pub(crate) fn raw(&self) -> &[f64] {
        &self.data
    }
}

/// Gradient of a scalar with respect to one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradient with respect to every layer of one MLP, layer order preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub layers: Vec<DenseGradient>,
}

impl MlpGradient {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGradient {
            layers: mlp
                .layers()
                .iter()
                .map(|l| DenseGradient {
                    weights: vec![0.0; l.weights().len()],
                    bias: vec![0.0; l.bias().len()],
                })
                .collect(),
        }
    }

    fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
    }

    fn slices_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
    }
}

/// Gradient of a loss with respect to a full [`SurrogateParams`] set, congruent with it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub low: Option<MlpGradient>,
    pub linear: Option<MlpGradient>,
    pub nonlinear: MlpGradient,
    /// Only meaningful when the parameter set is multifidelity.
    pub omega: f64,
    multifidelity: bool,
}

impl ParamGradient {
    pub fn zeros_like(params: &SurrogateParams) -> Self {
        ParamGradient {
            low: params.low.as_ref().map(MlpGradient::zeros_like),
            linear: params.linear.as_ref().map(MlpGradient::zeros_like),
            nonlinear: MlpGradient::zeros_like(&params.nonlinear),
            omega: 0.0,
            multifidelity: params.is_multifidelity(),
        }
    }

    /// Same order as [`SurrogateParams::slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        if let Some(g) = &self.low {
            out.extend(g.slices());
        }
        if let Some(g) = &self.linear {
            out.extend(g.slices());
        }
        out.extend(self.nonlinear.slices());
        if self.multifidelity {
            out.push(core::slice::from_ref(&self.omega));
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if let Some(g) = &mut self.low {
            out.extend(g.slices_mut());
        }
        if let Some(g) = &mut self.linear {
            out.extend(g.slices_mut());
        }
        out.extend(self.nonlinear.slices_mut());
        if self.multifidelity {
            out.push(core::slice::from_mut(&mut self.omega));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

fn check_activation_input(input: &DualBatch, layer: &Dense) -> Result<()> {
    if input.width != layer.fan_in {
        return Err(Error::shape(
            format!(
                "{} layer ({} -> {}) input width",
                layer.activation.name(),
                layer.fan_in,
                layer.width
            ),
            layer.fan_in,
            input.width,
        ));
    }
    Ok(())
}

/// One layer: values `act(W·v + b)`, tangents `act′(W·v + b) ⊙ (W·t)`.
pub fn propagate_layer(input: &DualBatch, layer: &Dense) -> Result<DualBatch> {
    check_activation_input(input, layer)?;
    Ok(propagate(input, layer, false).0)
}

/// Returns the output and, when requested and needed for the reverse sweep, the
/// pre-activation buffer.
fn propagate(input: &DualBatch, layer: &Dense, keep_pre: bool) -> (DualBatch, Option<Vec<f64>>) {
    let rows = input.rows();
    let width = layer.width;
    let stride = 1 + input.tangents;
    let mut a = vec![0.0; rows * width];
    gemm_abt(rows, layer.fan_in, width, &input.data, &layer.weights, &mut a);
    for b in 0..input.batch {
        let row = &mut a[b * stride * width..b * stride * width + width];
        for (v, bias) in row.iter_mut().zip(&layer.bias) {
            *v += bias;
        }
    }
    let pre = match layer.activation {
        Activation::Tanh if keep_pre && input.tangents > 0 => Some(a.clone()),
        _ => None,
    };
    if layer.activation == Activation::Tanh {
        for b in 0..input.batch {
            let block = &mut a[b * stride * width..(b + 1) * stride * width];
            let (vals, tans) = block.split_at_mut(width);
            for v in vals.iter_mut() {
                *v = math::tanh(*v);
            }
            for trow in tans.chunks_exact_mut(width) {
                for (t, h) in trow.iter_mut().zip(vals.iter()) {
                    *t *= 1.0 - h * h;
                }
            }
        }
    }
    (
        DualBatch {
            batch: input.batch,
            width,
            tangents: input.tangents,
            data: a,
        },
        pre,
    )
}

/// Activations recorded for the reverse sweep.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    acts: Vec<DualBatch>,
    pre: Vec<Option<Vec<f64>>>,
}

impl MlpTrace {
    pub fn output(&self) -> &DualBatch {
        self.acts.last().expect("trace holds the input")
    }
}

pub fn trace_forward(mlp: &Mlp, input: DualBatch) -> Result<MlpTrace> {
    mlp.check_input(input.width)?;
    let mut acts = Vec::with_capacity(mlp.layers().len() + 1);
    let mut pre = Vec::with_capacity(mlp.layers().len());
    acts.push(input);
    for layer in mlp.layers() {
        let (out, p) = propagate(acts.last().expect("nonempty"), layer, true);
        acts.push(out);
        pre.push(p);
    }
    Ok(MlpTrace { acts, pre })
}

/// Reverse sweep. `grad_output` is `∂L/∂(output rows)` in the output's row layout.
/// Gradients are accumulated into `grad`; the input gradient is returned when asked for.
pub fn backward(
    mlp: &Mlp,
    trace: &MlpTrace,
    grad_output: Vec<f64>,
    grad: &mut MlpGradient,
    need_input_grad: bool,
) -> Option<Vec<f64>> {
    let mut g = grad_output;
    for (li, layer) in mlp.layers().iter().enumerate().rev() {
        let input = &trace.acts[li];
        let output = &trace.acts[li + 1];
        let rows = input.rows();
        let width = layer.width;
        let stride = 1 + input.tangents;
        debug_assert_eq!(g.len(), rows * width);

        if layer.activation == Activation::Tanh {
            let block = stride * width;
            let mut s = vec![0.0; width];
            let mut gs = vec![0.0; width];
            for (b, gb) in g.chunks_exact_mut(block).enumerate() {
                let h = &output.data[b * block..b * block + width];
                for (si, hi) in s.iter_mut().zip(h) {
                    *si = 1.0 - hi * hi;
                }
                gs.fill(0.0);
                let (gv, gt) = gb.split_at_mut(width);
                if let Some(pre) = trace.pre[li].as_deref() {
                    let pt = &pre[b * block + width..(b + 1) * block];
                    for (grow, prow) in gt.chunks_exact_mut(width).zip(pt.chunks_exact(width)) {
                        for (((gi, pi), si), acc) in grow.iter_mut().zip(prow).zip(&s).zip(gs.iter_mut()) {
                            *acc += *gi * pi;
                            *gi *= si;
                        }
                    }
                }
                // d(1 - tanh²)/da = -2·h·s
                for (((gi, hi), si), acc) in gv.iter_mut().zip(h).zip(&s).zip(&gs) {
                    *gi = *gi * si - 2.0 * hi * si * acc;
                }
            }
        }

        let lg = &mut grad.layers[li];
        gemm_atb_acc(rows, width, layer.fan_in, &g, &input.data, &mut lg.weights);
        for b in 0..input.batch {
            let row = &g[b * stride * width..b * stride * width + width];
            for (acc, v) in lg.bias.iter_mut().zip(row) {
                *acc += v;
            }
        }
        if li == 0 && !need_input_grad {
            return None;
        }
        let mut g_in = vec![0.0; rows * layer.fan_in];
        gemm_ab(rows, width, layer.fan_in, &g, &layer.weights, &mut g_in);
        g = g_in;
    }
    Some(g)
}

/// Value-MSE and gradient-MSE of predictions against a batch, optionally writing
/// `∂(terms)/∂(prediction rows)` into `grad_rows` (same layout as `pred`).
pub(crate) fn mse_terms(
    pred: &[f64],
    tangents: usize,
    batch: &LossBatch,
    with_grad: bool,
    mut grad_rows: Option<&mut [f64]>,
) -> (f64, f64) {
    let n = batch.y.len();
    let inv_n = 1.0 / n as f64;
    let stride = 1 + tangents;
    let (mut value_sum, mut grad_sum) = (0.0, 0.0);
    for b in 0..n {
        let r = pred[b * stride] - batch.y[b];
        value_sum += r * r;
        if let Some(g) = grad_rows.as_deref_mut() {
            g[b * stride] = 2.0 * r * inv_n;
        }
        if with_grad {
            let target = batch.grad.as_ref().expect("checked by caller").row(b);
            for d in 0..tangents {
                let r = pred[b * stride + 1 + d] - target[d];
                grad_sum += r * r;
                if let Some(g) = grad_rows.as_deref_mut() {
                    g[b * stride + 1 + d] = 2.0 * r * inv_n;
                }
            }
        }
    }
    (value_sum * inv_n, grad_sum * inv_n)
}

/// Loss of `variant` on the given normalized mini-batches together with its
/// exact gradient with respect to every weight, bias and `ω`.
pub fn loss_param_gradient(
    variant: ModelVariant,
    params: &SurrogateParams,
    high: &LossBatch,
    low: Option<&LossBatch>,
) -> Result<(f64, ParamGradient)> {
    let (terms, grad) = loss_terms_with_gradient(variant, params, high, low)?;
    Ok((terms.total(), grad))
}

pub(crate) fn loss_terms_with_gradient(
    variant: ModelVariant,
    params: &SurrogateParams,
    high: &LossBatch,
    low: Option<&LossBatch>,
) -> Result<(LossTerms, ParamGradient)> {
    let low = crate::models::check_loss_inputs(variant, params, high, low)?;
    let dim = high.x.cols();
    let with_grad = variant.uses_gradients();
    let k = if with_grad { dim } else { 0 };
    let stride = 1 + k;
    let n_h = high.y.len();
    let mut grad = ParamGradient::zeros_like(params);
    let mut terms = LossTerms::default();

    match (variant.is_multifidelity(), low) {
        (false, _) => {
            let trace = trace_forward(&params.nonlinear, DualBatch::seed_with(&high.x, with_grad))?;
            let out = trace.output();
            let mut g = vec![0.0; out.data.len()];
            (terms.hf_value, terms.hf_gradient) =
                mse_terms(&out.data, k, high, with_grad, Some(&mut g));
            terms.check_finite()?;
            backward(&params.nonlinear, &trace, g, &mut grad.nonlinear, false);
        }
        (true, Some(low)) => {
            let low_net = params.low.as_ref().expect("checked");
            let linear_net = params.linear.as_ref().expect("checked");
            let n_l = low.y.len();
            let x_all = high.x.vstack(&low.x)?;
            let trace_l = trace_forward(low_net, DualBatch::seed_with(&x_all, with_grad))?;
            let out_l = trace_l.output();

            let aug = augment(&high.x, out_l, k);
            let trace_1 = trace_forward(linear_net, aug.clone())?;
            let trace_2 = trace_forward(&params.nonlinear, aug)?;
            let h1 = &trace_1.output().data;
            let h2 = &trace_2.output().data;
            let omega = params.omega;
            let y: Vec<f64> = h1
                .iter()
                .zip(h2)
                .map(|(a, b)| omega * a + (1.0 - omega) * b)
                .collect();

            let mut g = vec![0.0; y.len()];
            (terms.hf_value, terms.hf_gradient) = mse_terms(&y, k, high, with_grad, Some(&mut g));
            let split = n_h * stride;
            let mut g_l = vec![0.0; out_l.data.len()];
            (terms.lf_value, terms.lf_gradient) = mse_terms(
                &out_l.data[split..],
                k,
                low,
                with_grad,
                Some(&mut g_l[split..]),
            );
            terms.check_finite()?;

            grad.omega = g
                .iter()
                .zip(h1.iter().zip(h2))
                .map(|(gi, (a, b))| gi * (a - b))
                .sum();
            let g1: Vec<f64> = g.iter().map(|v| omega * v).collect();
            let g2: Vec<f64> = g.iter().map(|v| (1.0 - omega) * v).collect();
            let ga1 = backward(
                linear_net,
                &trace_1,
                g1,
                grad.linear.as_mut().expect("mf"),
                true,
            )
            .expect("input gradient requested");
            let ga2 = backward(&params.nonlinear, &trace_2, g2, &mut grad.nonlinear, true)
                .expect("input gradient requested");
            // the last augmented column is ŷ_L and its tangents
            let aw = dim + 1;
            for r in 0..split {
                g_l[r] = ga1[r * aw + dim] + ga2[r * aw + dim];
            }
            debug_assert_eq!(n_l * stride + split, g_l.len());
            backward(low_net, &trace_l, g_l, grad.low.as_mut().expect("mf"), false);
        }
        (true, None) => unreachable!("checked by check_loss_inputs"),
    }
    if !grad.is_finite() {
        return Err(Error::numerical("parameter gradient"));
    }
    Ok((terms, grad))
}

/// Augmented head input `[x, ŷ_L]` for the first `x.rows()` samples of `low_out`;
/// tangent row `d` is `[e_d, ∂ŷ_L/∂x_d]`.
pub(crate) fn augment(x: &Matrix, low_out: &DualBatch, k: usize) -> DualBatch {
    let (n, dim) = (x.rows(), x.cols());
    let aw = dim + 1;
    let stride = 1 + k;
    let mut data = vec![0.0; n * stride * aw];
    for b in 0..n {
        let base = b * stride * aw;
        data[base..base + dim].copy_from_slice(x.row(b));
        data[base + dim] = low_out.data[b * stride];
        for d in 0..k {
            let r = base + (1 + d) * aw;
            data[r + d] = 1.0;
            data[r + dim] = low_out.data[b * stride + 1 + d];
        }
    }
    DualBatch::from_raw(n, aw, k, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_mlp, LayerSpec};

    fn eye(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    #[test]
    fn identity_linear_layer() {
        let layer = Dense::new(eye(1), vec![0.0], Activation::Linear).unwrap();
        let x = Matrix::from_rows(&[[0.3]]).unwrap();
        let out = propagate_layer(&DualBatch::seed(&x), &layer).unwrap();
        assert_eq!(out.value(0, 0), 0.3);
        assert_eq!(out.tangent(0, 0, 0), 1.0);
    }

    #[test]
    fn tanh_at_origin() {
        let layer = Dense::new(eye(1), vec![0.0], Activation::Tanh).unwrap();
        let x = Matrix::from_rows(&[[0.0]]).unwrap();
        let out = propagate_layer(&DualBatch::seed(&x), &layer).unwrap();
        assert_eq!(out.value(0, 0), 0.0);
        assert_eq!(out.tangent(0, 0, 0), 1.0);
    }

    #[test]
    fn seed_has_identity_tangents() {
        let x = Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let s = DualBatch::seed(&x);
        assert_eq!(s.values(), x);
        for b in 0..2 {
            for i in 0..3 {
                for d in 0..3 {
                    assert_eq!(s.tangent(b, i, d), if i == d { 1.0 } else { 0.0 });
                }
            }
        }
        let round = DualBatch::from_parts(&x, &s.tangent_slab(), 3).unwrap();
        assert_eq!(round, s);
    }

    #[test]
    fn width_mismatch_names_layer() {
        let layer = Dense::new(Matrix::zeros(4, 3), vec![0.0; 4], Activation::Tanh).unwrap();
        let x = Matrix::zeros(2, 2);
        match propagate_layer(&DualBatch::seed(&x), &layer) {
            Err(Error::Shape { context, .. }) => assert!(context.contains("tanh layer (3 -> 4)")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tangents_are_linear() {
        let mlp = init_mlp(3, &[LayerSpec::tanh(6), LayerSpec::tanh(5)], 11).unwrap();
        let x = Matrix::from_rows(&[[0.2, -0.7, 1.1], [0.5, 0.5, -0.3]]).unwrap();
        let t1: Vec<f64> = (0..2 * 3 * 2).map(|i| ((i as f64) * 0.9).sin()).collect();
        let t2: Vec<f64> = (0..2 * 3 * 2).map(|i| ((i as f64) * 1.3).cos()).collect();
        let (a, b) = (0.7, -1.9);
        let mix: Vec<f64> = t1.iter().zip(&t2).map(|(u, v)| a * u + b * v).collect();
        let run = |t: &[f64]| {
            mlp.propagate(DualBatch::from_parts(&x, t, 2).unwrap())
                .unwrap()
                .tangent_slab()
        };
        let (p1, p2, pm) = (run(&t1), run(&t2), run(&mix));
        for i in 0..pm.len() {
            let lin = a * p1[i] + b * p2[i];
            assert!((pm[i] - lin).abs() <= 1e-12 * (1.0 + lin.abs()));
        }
    }

    #[test]
    fn backward_of_linear_unit() {
        // ŷ = w·x, L = (ŷ - y)², x = 1, y = 0, w = 2 → L = 4, dL/dw = 4
        let layer = Dense::new(Matrix::from_rows(&[[2.0]]).unwrap(), vec![0.0], Activation::Linear)
            .unwrap();
        let mlp = Mlp::from_layers(1, vec![layer]).unwrap();
        let x = Matrix::from_rows(&[[1.0]]).unwrap();
        let trace = trace_forward(&mlp, DualBatch::from_values(&x)).unwrap();
        let y_hat = trace.output().value(0, 0);
        assert_eq!((y_hat - 0.0) * (y_hat - 0.0), 4.0);
        let mut g = MlpGradient::zeros_like(&mlp);
        backward(&mlp, &trace, vec![2.0 * y_hat], &mut g, false);
        assert_eq!(g.layers[0].weights, vec![4.0]);
        assert_eq!(g.layers[0].bias, vec![4.0]);
    }
}
