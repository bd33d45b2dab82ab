#![allow(dead_code)]

use gemfnn_core::models::{Architecture, LossBatch, ModelVariant, SurrogateParams};
use gemfnn_core::network::{Activation, Mlp};
use gemfnn_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn central_difference(mut f: impl FnMut(f64) -> f64, x0: f64, h: f64) -> f64 {
    (f(x0 + h) - f(x0 - h)) / (2.0 * h)
}

/// Worst violation of `|a − b| ≤ rtol·max(|a|, |b|) + atol`, reported as a
/// ratio (≤ 1 passes) with its index.
pub fn worst_violation(analytic: &[f64], reference: &[f64], rtol: f64, atol: f64) -> (f64, usize) {
    assert_eq!(analytic.len(), reference.len());
    let mut worst = (0.0, 0);
    for (i, (a, r)) in analytic.iter().zip(reference).enumerate() {
        let allowed = rtol * a.abs().max(r.abs()) + atol;
        let ratio = (a - r).abs() / allowed;
        if ratio.is_nan() || ratio > worst.0 {
            worst = (ratio, i);
        }
    }
    worst
}

pub fn assert_gradients_match(analytic: &[f64], reference: &[f64], rtol: f64, atol: f64, ctx: &str) {
    let (ratio, i) = worst_violation(analytic, reference, rtol, atol);
    assert!(
        ratio <= 1.0,
        "{ctx}: component {i}: analytic {} vs reference {} (violation ratio {ratio:.3})",
        analytic[i],
        reference[i]
    );
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect(),
    )
    .unwrap()
}

pub fn random_batch(rng: &mut ChaCha8Rng, n: usize, dim: usize, grads: bool) -> LossBatch {
    let x = random_matrix(rng, n, dim, 1.5);
    let y = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let g = grads.then(|| random_matrix(rng, n, dim, 2.0));
    LossBatch::new(x, y, g).unwrap()
}

pub fn random_arch(rng: &mut ChaCha8Rng) -> Architecture {
    let hidden = |rng: &mut ChaCha8Rng| -> Vec<usize> {
        let layers = rng.random_range(1..=2);
        (0..layers).map(|_| rng.random_range(2..=5)).collect()
    };
    Architecture {
        low_hidden: hidden(rng),
        linear_hidden: hidden(rng),
        nonlinear_hidden: hidden(rng),
    }
}

/// Random parameters including nonzero biases and a non-symmetric ω.
pub fn random_params(rng: &mut ChaCha8Rng, variant: ModelVariant, dim: usize) -> SurrogateParams {
    let arch = random_arch(rng);
    let mut p = SurrogateParams::init(variant, dim, &arch, rng.random()).unwrap();
    for s in p.slices_mut() {
        for v in s.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    if variant.is_multifidelity() {
        p.omega = rng.random_range(0.1..0.9);
    }
    p
}

pub fn flat_params(p: &SurrogateParams) -> Vec<f64> {
    p.slices().concat()
}

pub fn set_flat_param(p: &mut SurrogateParams, mut index: usize, value: f64) {
    for s in p.slices_mut() {
        if index < s.len() {
            s[index] = value;
            return;
        }
        index -= s.len();
    }
    panic!("parameter index out of range");
}

/// Scalar-loop forward evaluation of one MLP output and its input gradient,
/// written independently of the batched engine.
pub fn naive_value_and_jacobian(mlp: &Mlp, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = x.len();
    let mut v = x.to_vec();
    let mut jac: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for layer in mlp.layers() {
        let (fan_in, width) = (layer.fan_in(), layer.width());
        let w = layer.weights();
        let mut out = vec![0.0; width];
        let mut out_jac = vec![vec![0.0; n]; width];
        for o in 0..width {
            let mut a = layer.bias()[o];
            for i in 0..fan_in {
                a += w[o * fan_in + i] * v[i];
            }
            let (h, slope) = match layer.activation() {
                Activation::Tanh => {
                    let t = a.tanh();
                    (t, 1.0 - t * t)
                }
                Activation::Linear => (a, 1.0),
            };
            out[o] = h;
            for d in 0..n {
                let mut s = 0.0;
                for i in 0..fan_in {
                    s += w[o * fan_in + i] * jac[i][d];
                }
                out_jac[o][d] = slope * s;
            }
        }
        v = out;
        jac = out_jac;
    }
    (v, jac)
}

/// Naive normalized-space composite prediction and its gradient.
pub fn naive_composite(p: &SurrogateParams, x: &[f64]) -> (f64, Vec<f64>) {
    let n = x.len();
    match (&p.low, &p.linear) {
        (Some(low), Some(linear)) => {
            let (yl, jl) = naive_value_and_jacobian(low, x);
            let mut aug = x.to_vec();
            aug.push(yl[0]);
            let (y1, j1) = naive_value_and_jacobian(linear, &aug);
            let (y2, j2) = naive_value_and_jacobian(&p.nonlinear, &aug);
            // chain through the augmented input: ∂/∂x_d = ∂/∂aug_d + ∂/∂aug_n · ∂ŷ_L/∂x_d
            let total = |j: &Vec<Vec<f64>>, d: usize| j[0][d] + j[0][n] * jl[0][d];
            let value = p.omega * y1[0] + (1.0 - p.omega) * y2[0];
            let grad = (0..n)
                .map(|d| p.omega * total(&j1, d) + (1.0 - p.omega) * total(&j2, d))
                .collect();
            (value, grad)
        }
        _ => {
            let (y, j) = naive_value_and_jacobian(&p.nonlinear, x);
            (y[0], j[0].clone())
        }
    }
}

/// The four loss terms summed one at a time from the naive evaluator.
pub fn naive_loss(variant: ModelVariant, p: &SurrogateParams, high: &LossBatch, low: Option<&LossBatch>) -> f64 {
    let mut hf_value = 0.0;
    let mut hf_grad = 0.0;
    for b in 0..high.len() {
        let (v, g) = naive_composite(p, high.x.row(b));
        hf_value += (v - high.y[b]).powi(2);
        if variant.uses_gradients() {
            let target = high.grad.as_ref().unwrap().row(b);
            hf_grad += g.iter().zip(target).map(|(a, t)| (a - t).powi(2)).sum::<f64>();
        }
    }
    let n = high.len() as f64;
    let mut total = hf_value / n + hf_grad / n;
    if variant.is_multifidelity() {
        let low = low.unwrap();
        let (mut lf_value, mut lf_grad) = (0.0, 0.0);
        for b in 0..low.len() {
            let (v, j) = naive_value_and_jacobian(p.low.as_ref().unwrap(), low.x.row(b));
            lf_value += (v[0] - low.y[b]).powi(2);
            if variant.uses_gradients() {
                let target = low.grad.as_ref().unwrap().row(b);
                lf_grad += j[0].iter().zip(target).map(|(a, t)| (a - t).powi(2)).sum::<f64>();
            }
        }
        let nl = low.len() as f64;
        total += lf_value / nl + lf_grad / nl;
    }
    total
}
