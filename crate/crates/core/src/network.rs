//! Feed-forward MLPs: layer specifications, Glorot initialization, evaluation
//! and input-Jacobian evaluation.
//!
//! Weights of a layer are stored row-major with shape `(width, fan_in)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diffengine::{propagate_layer, DualBatch};
use crate::linalg::Matrix;
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "tanh" => Some(Activation::Tanh),
            "linear" => Some(Activation::Linear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation) -> Self {
        LayerSpec { width, activation }
    }

    pub fn tanh(width: usize) -> Self {
        LayerSpec::new(width, Activation::Tanh)
    }

    pub fn linear(width: usize) -> Self {
        LayerSpec::new(width, Activation::Linear)
    }
}

/// One fully connected layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub(crate) fan_in: usize,
    pub(crate) width: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
    pub(crate) activation: Activation,
}

impl Dense {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if weights.rows() == 0 {
            return Err(Error::config("layer width must be at least 1"));
        }
        if bias.len() != weights.rows() {
            return Err(Error::shape("layer bias", weights.rows(), bias.len()));
        }
        Ok(Dense {
            fan_in: weights.cols(),
            width: weights.rows(),
            weights: weights.into_vec(),
            bias,
            activation,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Row-major `(width, fan_in)` weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn weight_matrix(&self) -> Matrix {
        Matrix::from_vec(self.width, self.fan_in, self.weights.clone())
            .expect("layer buffer is congruent")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input_dim: usize,
    layers: Vec<Dense>,
}

impl Mlp {
    /// Assembles a network from explicit layers, checking that widths chain.
    pub fn from_layers(input_dim: usize, layers: Vec<Dense>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::config("network input dimension must be at least 1"));
        }
        if layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        let mut prev = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.fan_in != prev {
                return Err(Error::shape(format!("layer {i} fan-in"), prev, layer.fan_in));
            }
            prev = layer.width;
        }
        Ok(Mlp { input_dim, layers })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.width)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers
            .iter()
            .map(|l| LayerSpec::new(l.width, l.activation))
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub(crate) fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim {
            return Err(Error::shape("network input columns", self.input_dim, cols));
        }
        Ok(())
    }

    /// Runs a dual batch through every layer.
    pub fn propagate(&self, input: DualBatch) -> Result<DualBatch> {
        self.check_input(input.width())?;
        let mut cur = input;
        for layer in &self.layers {
            cur = propagate_layer(&cur, layer)?;
        }
        Ok(cur)
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        forward(self, x)
    }
}

/// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
pub fn init_mlp(input_dim: usize, specs: &[LayerSpec], seed: u64) -> Result<Mlp> {
    if specs.is_empty() {
        return Err(Error::config("network needs at least one layer"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(specs.len());
    let mut fan_in = input_dim;
    for (i, spec) in specs.iter().enumerate() {
        if spec.width == 0 {
            return Err(Error::config(format!("layer {i} has zero width")));
        }
        let bound = math::sqrt(6.0 / (fan_in + spec.width) as f64);
        let weights: Vec<f64> = (0..spec.width * fan_in)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        layers.push(Dense {
            fan_in,
            width: spec.width,
            weights,
            bias: vec![0.0; spec.width],
            activation: spec.activation,
        });
        fan_in = spec.width;
    }
    Mlp::from_layers(input_dim, layers)
}

pub fn forward(mlp: &Mlp, x: &Matrix) -> Result<Matrix> {
    mlp.check_input(x.cols())?;
    let out = mlp.propagate(DualBatch::from_values(x))?;
    Ok(out.values())
}

/// Per-row Jacobians `∂ output / ∂ input`, laid out `[batch][out_dim][input_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InputJacobian {
    batch: usize,
    out_dim: usize,
    in_dim: usize,
    data: Vec<f64>,
}

impl InputJacobian {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    #[inline]
    pub fn get(&self, b: usize, o: usize, i: usize) -> f64 {
        self.data[(b * self.out_dim + o) * self.in_dim + i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn from_dual(out: &DualBatch) -> Self {
        let (batch, out_dim, in_dim) = (out.batch(), out.width(), out.tangents());
        let mut data = vec![0.0; batch * out_dim * in_dim];
        for b in 0..batch {
            for o in 0..out_dim {
                for i in 0..in_dim {
                    data[(b * out_dim + o) * in_dim + i] = out.tangent(b, o, i);
                }
            }
        }
        InputJacobian {
            batch,
            out_dim,
            in_dim,
            data,
        }
    }
}

pub fn forward_with_input_jacobian(mlp: &Mlp, x: &Matrix) -> Result<(Matrix, InputJacobian)> {
    mlp.check_input(x.cols())?;
    let out = mlp.propagate(DualBatch::seed(x))?;
    Ok((out.values(), InputJacobian::from_dual(&out)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let specs = [LayerSpec::tanh(10), LayerSpec::tanh(10), LayerSpec::linear(1)];
        let a = init_mlp(10, &specs, 7).unwrap();
        let b = init_mlp(10, &specs, 7).unwrap();
        assert_eq!(a, b);
        let c = init_mlp(10, &specs, 8).unwrap();
        assert_ne!(a, c);

        let bound = (6.0f64 / 20.0).sqrt();
        assert!((bound - 0.5477).abs() < 1e-4);
        let l1 = &a.layers()[1];
        assert_eq!((l1.fan_in(), l1.width()), (10, 10));
        assert!(l1.weights().iter().all(|w| w.abs() <= bound));
        assert!(a.layers().iter().all(|l| l.bias().iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn zero_width_layer_rejected() {
        let err = init_mlp(2, &[LayerSpec::tanh(0), LayerSpec::linear(1)], 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(init_mlp(2, &[], 0).is_err());
    }

    #[test]
    fn identity_linear_net_is_identity() {
        let layers = vec![
            Dense::new(identity(3), vec![0.0; 3], Activation::Linear).unwrap(),
            Dense::new(identity(3), vec![0.0; 3], Activation::Linear).unwrap(),
        ];
        let mlp = Mlp::from_layers(3, layers).unwrap();
        let x = Matrix::from_rows(&[[0.1, -2.0, 3.5], [4.0, 5.0, -6.0]]).unwrap();
        assert_eq!(forward(&mlp, &x).unwrap(), x);
    }

    #[test]
    fn single_tanh_unit() {
        let w = Matrix::from_rows(&[[1.0]]).unwrap();
        let mlp = Mlp::from_layers(1, vec![Dense::new(w, vec![0.0], Activation::Tanh).unwrap()])
            .unwrap();
        let x = Matrix::from_rows(&[[0.0]]).unwrap();
        assert_eq!(forward(&mlp, &x).unwrap().get(0, 0), 0.0);

        let w2 = Matrix::from_rows(&[[2.0]]).unwrap();
        let mlp2 =
            Mlp::from_layers(1, vec![Dense::new(w2, vec![0.0], Activation::Tanh).unwrap()]).unwrap();
        let (_, jac) = forward_with_input_jacobian(&mlp2, &x).unwrap();
        assert_eq!(jac.get(0, 0, 0), 2.0);
    }

    #[test]
    fn linear_layer_jacobian_is_weight_matrix() {
        let w = Matrix::from_rows(&[[1.0, -2.0, 0.5], [3.0, 0.25, -1.0]]).unwrap();
        let mlp = Mlp::from_layers(
            3,
            vec![Dense::new(w.clone(), vec![0.3, -0.1], Activation::Linear).unwrap()],
        )
        .unwrap();
        let x = Matrix::from_rows(&[[0.2, 0.4, 0.6], [-1.0, 2.0, 9.0]]).unwrap();
        let (_, jac) = forward_with_input_jacobian(&mlp, &x).unwrap();
        for b in 0..2 {
            for o in 0..2 {
                for i in 0..3 {
                    assert_eq!(jac.get(b, o, i), w.get(o, i));
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let mlp = init_mlp(3, &[LayerSpec::tanh(4), LayerSpec::linear(1)], 1).unwrap();
        let x = Matrix::zeros(2, 2);
        assert!(matches!(forward(&mlp, &x), Err(Error::Shape { .. })));
        assert!(matches!(
            forward_with_input_jacobian(&mlp, &x),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn values_bit_identical_with_and_without_jacobian() {
        let specs = [LayerSpec::tanh(13), LayerSpec::tanh(9), LayerSpec::linear(1)];
        let mlp = init_mlp(5, &specs, 3).unwrap();
        let x = Matrix::from_vec(
            17,
            5,
            (0..85).map(|i| ((i as f64) * 0.37).sin() * 2.0).collect(),
        )
        .unwrap();
        let plain = forward(&mlp, &x).unwrap();
        let (vals, _) = forward_with_input_jacobian(&mlp, &x).unwrap();
        assert_eq!(plain, vals);
    }

    #[test]
    fn from_layers_checks_chaining() {
        let l0 = Dense::new(Matrix::zeros(4, 2), vec![0.0; 4], Activation::Tanh).unwrap();
        let l1 = Dense::new(Matrix::zeros(1, 3), vec![0.0], Activation::Linear).unwrap();
        assert!(matches!(
            Mlp::from_layers(2, vec![l0, l1]),
            Err(Error::Shape { .. })
        ));
    }
}
