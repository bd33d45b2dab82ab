//! Sampling plans, the benchmark function pairs, and dataset assembly.
//!
//! Benchmarks:
//!
//! | case          | D  | domain         | high fidelity                              | low fidelity                              |
//! |---------------|----|----------------|--------------------------------------------|-------------------------------------------|
//! | `forrester1d` | 1  | `[0, 1]`       | `(6x−2)² sin(12x−4)`                       | `0.5 f_H + 10(x−0.5) − 5`                 |
//! | `rastrigin2d` | 2  | `[−1, 1.5]²`   | `20 + Σ (x_i² − 10 cos 2πx_i)`             | `0.5 f_H + Σ (x_i − 0.5)`                 |
//! | `f20d`        | 20 | `[−3, 3]²⁰`    | `(x_1−1)² + Σ_{i≥2} (2x_i² − x_{i−1})²`    | `0.8 f_H − Σ_{i<20} 0.4 x_i x_{i+1} − 50` |

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::Matrix;
use crate::math;
use crate::{Error, Result};

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::shape("domain bounds", lower.len(), upper.len()));
        }
        if lower.is_empty() {
            return Err(Error::config("domain needs at least one dimension"));
        }
        if let Some(k) = (0..lower.len()).find(|&k| lower[k].partial_cmp(&upper[k]) != Some(core::cmp::Ordering::Less)) {
            return Err(Error::config(format!("domain dimension {k}: lower bound must be below upper bound")));
        }
        Ok(Domain { lower, upper })
    }

    pub fn cube(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Fidelity {
    High,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BenchmarkCase {
    Forrester1d,
    Rastrigin2d,
    F20d,
}

impl BenchmarkCase {
    pub const ALL: [BenchmarkCase; 3] = [
        BenchmarkCase::Forrester1d,
        BenchmarkCase::Rastrigin2d,
        BenchmarkCase::F20d,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BenchmarkCase::Forrester1d => "forrester1d",
            BenchmarkCase::Rastrigin2d => "rastrigin2d",
            BenchmarkCase::F20d => "f20d",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        BenchmarkCase::ALL
            .into_iter()
            .find(|c| c.name() == s.trim())
            .ok_or_else(|| Error::config(format!("unknown benchmark case `{s}`")))
    }

    pub fn dim(self) -> usize {
        match self {
            BenchmarkCase::Forrester1d => 1,
            BenchmarkCase::Rastrigin2d => 2,
            BenchmarkCase::F20d => 20,
        }
    }

    pub fn domain(self) -> Domain {
        let (lo, hi) = match self {
            BenchmarkCase::Forrester1d => (0.0, 1.0),
            BenchmarkCase::Rastrigin2d => (-1.0, 1.5),
            BenchmarkCase::F20d => (-3.0, 3.0),
        };
        Domain::cube(self.dim(), lo, hi).expect("static bounds are valid")
    }

    /// Function value at one point. Points outside the domain are evaluated
    /// anyway (with a logged warning).
    pub fn value(self, x: &[f64], fidelity: Fidelity) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        match (self, fidelity) {
            (BenchmarkCase::Forrester1d, Fidelity::High) => forrester_high(x[0]),
            (BenchmarkCase::Forrester1d, Fidelity::Low) => {
                0.5 * forrester_high(x[0]) + 10.0 * (x[0] - 0.5) - 5.0
            }
            (BenchmarkCase::Rastrigin2d, Fidelity::High) => rastrigin_high(x),
            (BenchmarkCase::Rastrigin2d, Fidelity::Low) => {
                0.5 * rastrigin_high(x) + x.iter().map(|v| v - 0.5).sum::<f64>()
            }
            (BenchmarkCase::F20d, Fidelity::High) => f20d_high(x),
            (BenchmarkCase::F20d, Fidelity::Low) => {
                let coupling: f64 = x.windows(2).map(|w| 0.4 * w[0] * w[1]).sum();
                0.8 * f20d_high(x) - coupling - 50.0
            }
        }
    }

    /// Closed-form gradient at one point.
    pub fn gradient(self, x: &[f64], fidelity: Fidelity) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim());
        match (self, fidelity) {
            (BenchmarkCase::Forrester1d, Fidelity::High) => vec![forrester_high_grad(x[0])],
            (BenchmarkCase::Forrester1d, Fidelity::Low) => {
                vec![0.5 * forrester_high_grad(x[0]) + 10.0]
            }
            (BenchmarkCase::Rastrigin2d, fid) => x
                .iter()
                .map(|&xi| {
                    let g = 2.0 * xi + 20.0 * PI * math::sin(2.0 * PI * xi);
                    match fid {
                        Fidelity::High => g,
                        Fidelity::Low => 0.5 * g + 1.0,
                    }
                })
                .collect(),
            (BenchmarkCase::F20d, Fidelity::High) => f20d_high_grad(x),
            (BenchmarkCase::F20d, Fidelity::Low) => {
                let n = x.len();
                let mut g = f20d_high_grad(x);
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi *= 0.8;
                    let neighbours = if i == 0 {
                        x[1]
                    } else if i == n - 1 {
                        x[n - 2]
                    } else {
                        x[i - 1] + x[i + 1]
                    };
                    *gi -= 0.4 * neighbours;
                }
                g
            }
        }
    }

    /// Values and gradients for every row of `x`.
    pub fn eval(self, x: &Matrix, fidelity: Fidelity) -> Result<(Vec<f64>, Matrix)> {
        if x.cols() != self.dim() {
            return Err(Error::shape(
                format!("{} input columns", self.name()),
                self.dim(),
                x.cols(),
            ));
        }
        let domain = self.domain();
        let mut values = Vec::with_capacity(x.rows());
        let mut grads = Vec::with_capacity(x.rows() * x.cols());
        let mut outside = 0usize;
        for row in x.iter_rows() {
            if !domain.contains(row) {
                outside += 1;
            }
            values.push(self.value(row, fidelity));
            grads.extend(self.gradient(row, fidelity));
        }
        if outside > 0 {
            log::warn!(
                "{}: {outside} evaluation point(s) lie outside the domain",
                self.name()
            );
        }
        Ok((values, Matrix::from_vec(x.rows(), x.cols(), grads)?))
    }
}

/// Evaluates a case by name.
pub fn eval_case(case: &str, x: &Matrix, fidelity: Fidelity) -> Result<(Vec<f64>, Matrix)> {
    BenchmarkCase::parse(case)?.eval(x, fidelity)
}

fn forrester_high(x: f64) -> f64 {
    let a = 6.0 * x - 2.0;
    a * a * math::sin(12.0 * x - 4.0)
}

fn forrester_high_grad(x: f64) -> f64 {
    let a = 6.0 * x - 2.0;
    12.0 * a * math::sin(12.0 * x - 4.0) + 12.0 * a * a * math::cos(12.0 * x - 4.0)
}

fn rastrigin_high(x: &[f64]) -> f64 {
    20.0 + x
        .iter()
        .map(|&v| v * v - 10.0 * math::cos(2.0 * PI * v))
        .sum::<f64>()
}

fn f20d_high(x: &[f64]) -> f64 {
    let first = (x[0] - 1.0) * (x[0] - 1.0);
    first
        + x.windows(2)
            .map(|w| {
                let t = 2.0 * w[1] * w[1] - w[0];
                t * t
            })
            .sum::<f64>()
}

fn f20d_high_grad(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    // t_i = 2x_i² − x_{i−1} for i ≥ 1 (0-based)
    let t = |i: usize| 2.0 * x[i] * x[i] - x[i - 1];
    (0..n)
        .map(|i| {
            if i == 0 {
                2.0 * (x[0] - 1.0) - 2.0 * t(1)
            } else if i == n - 1 {
                8.0 * x[i] * t(i)
            } else {
                8.0 * x[i] * t(i) - 2.0 * t(i + 1)
            }
        })
        .collect()
}

/// Cartesian grid with endpoints, uniformly spaced per axis. The last
/// dimension varies fastest.
pub fn full_factorial(domain: &Domain, points_per_dim: &[usize]) -> Result<Matrix> {
    let dim = domain.dim();
    if points_per_dim.len() != dim {
        return Err(Error::shape("points per dimension", dim, points_per_dim.len()));
    }
    if let Some(k) = points_per_dim.iter().position(|&p| p < 2) {
        return Err(Error::config(format!(
            "full factorial axis {k} needs at least 2 points"
        )));
    }
    let total = points_per_dim
        .iter()
        .try_fold(1usize, |acc, &p| acc.checked_mul(p))
        .ok_or_else(|| Error::config("full factorial grid is too large"))?;
    let axes: Vec<Vec<f64>> = (0..dim)
        .map(|k| {
            let (l, u, p) = (domain.lower[k], domain.upper[k], points_per_dim[k]);
            (0..p)
                .map(|i| {
                    if i == p - 1 {
                        u
                    } else {
                        l + (u - l) * i as f64 / (p - 1) as f64
                    }
                })
                .collect()
        })
        .collect();
    let mut data = Vec::with_capacity(total * dim);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        data.extend(idx.iter().enumerate().map(|(k, &i)| axes[k][i]));
        for k in (0..dim).rev() {
            idx[k] += 1;
            if idx[k] < points_per_dim[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    Matrix::from_vec(total, dim, data)
}

/// Latin hypercube design: per dimension, one sample in each of the `m`
/// equal-width strata, uniformly jittered, strata shuffled independently.
pub fn lhs(domain: &Domain, m: usize, seed: u64) -> Result<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    lhs_with_rng(domain, m, &mut rng)
}

fn lhs_with_rng(domain: &Domain, m: usize, rng: &mut ChaCha8Rng) -> Result<Matrix> {
    if m == 0 {
        return Err(Error::config("latin hypercube needs at least one sample"));
    }
    let dim = domain.dim();
    let mut out = Matrix::zeros(m, dim);
    let mut perm: Vec<usize> = (0..m).collect();
    for k in 0..dim {
        perm.shuffle(rng);
        let (l, u) = (domain.lower[k], domain.upper[k]);
        let width = (u - l) / m as f64;
        for (i, &stratum) in perm.iter().enumerate() {
            let jitter: f64 = rng.random();
            let v = l + width * (stratum as f64 + jitter);
            out.set(i, k, v.min(u));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplingPlan {
    FullFactorial,
    LatinHypercube,
}

impl SamplingPlan {
    pub fn name(self) -> &'static str {
        match self {
            SamplingPlan::FullFactorial => "full_factorial",
            SamplingPlan::LatinHypercube => "lhs",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "full_factorial" | "full-factorial" | "ff" => Ok(SamplingPlan::FullFactorial),
            "lhs" | "latin_hypercube" => Ok(SamplingPlan::LatinHypercube),
            other => Err(Error::config(format!("unknown sampling plan `{other}`"))),
        }
    }
}

/// `m` points under `plan`. Full factorial designs need `m` to be a perfect
/// `D`-th power with at least two points per axis.
pub fn sample(plan: SamplingPlan, domain: &Domain, m: usize, seed: u64) -> Result<Matrix> {
    match plan {
        SamplingPlan::LatinHypercube => lhs(domain, m, seed),
        SamplingPlan::FullFactorial => {
            let dim = domain.dim();
            let per = grid_side(m, dim).ok_or_else(|| {
                Error::config(format!(
                    "full factorial with {m} samples in {dim} dimensions is not a grid of at least 2 points per axis"
                ))
            })?;
            full_factorial(domain, &vec![per; dim])
        }
    }
}

fn grid_side(m: usize, dim: usize) -> Option<usize> {
    let approx = math::round(math::powf(m as f64, 1.0 / dim as f64)) as usize;
    (approx.saturating_sub(1)..=approx + 1)
        .find(|&p| p >= 2 && (p as u128).checked_pow(dim as u32) == Some(m as u128))
}

/// Inputs, outputs and (optionally) output gradients of one fidelity level.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityBlock {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub grad: Option<Matrix>,
}

impl FidelityBlock {
    pub fn new(x: Matrix, y: Vec<f64>, grad: Option<Matrix>) -> Result<Self> {
        if y.len() != x.rows() {
            return Err(Error::shape("block outputs", x.rows(), y.len()));
        }
        if let Some(g) = &grad {
            if g.rows() != x.rows() {
                return Err(Error::shape("block gradient rows", x.rows(), g.rows()));
            }
            if g.cols() != x.cols() {
                return Err(Error::shape("block gradient columns", x.cols(), g.cols()));
            }
        }
        Ok(FidelityBlock { x, y, grad })
    }

    /// Evaluates `case` at every row of `x`.
    pub fn evaluate(case: BenchmarkCase, x: Matrix, fidelity: Fidelity) -> Result<Self> {
        let (y, grad) = case.eval(&x, fidelity)?;
        Self::new(x, y, Some(grad))
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Rows `[..n]`.
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        FidelityBlock {
            x: self.x.select_rows(&idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            grad: self.grad.as_ref().map(|g| g.select_rows(&idx)),
        }
    }
}

/// Training data at two fidelity levels plus an optional held-out HF test set.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiFidelityDataset {
    pub high: FidelityBlock,
    pub low: Option<FidelityBlock>,
    pub test: Option<FidelityBlock>,
}

impl MultiFidelityDataset {
    pub fn dim(&self) -> usize {
        self.high.dim()
    }
}

// RNG stream assignment for a single dataset seed.
const STREAM_HIGH: u64 = 0;
const STREAM_LOW: u64 = 1;
const STREAM_TEST: u64 = 2;

fn design(plan: SamplingPlan, domain: &Domain, m: usize, seed: u64, stream: u64) -> Result<Matrix> {
    match plan {
        SamplingPlan::FullFactorial => sample(plan, domain, m, seed),
        SamplingPlan::LatinHypercube => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            lhs_with_rng(domain, m, &mut rng)
        }
    }
}

/// HF and LF training inputs drawn independently under `plan`, both fidelity
/// models evaluated with gradients. `m_low = 0` gives a single-fidelity set.
pub fn build_training_set(
    case: BenchmarkCase,
    plan: SamplingPlan,
    m_high: usize,
    m_low: usize,
    seed: u64,
) -> Result<MultiFidelityDataset> {
    if m_high == 0 {
        return Err(Error::config("m_high must be at least 1"));
    }
    let domain = case.domain();
    let high = FidelityBlock::evaluate(
        case,
        design(plan, &domain, m_high, seed, STREAM_HIGH)?,
        Fidelity::High,
    )?;
    let low = if m_low > 0 {
        Some(FidelityBlock::evaluate(
            case,
            design(plan, &domain, m_low, seed, STREAM_LOW)?,
            Fidelity::Low,
        )?)
    } else {
        None
    };
    Ok(MultiFidelityDataset {
        high,
        low,
        test: None,
    })
}

/// High-fidelity test set (values and gradients).
pub fn build_test_set(case: BenchmarkCase, plan: SamplingPlan, m_test: usize, seed: u64) -> Result<FidelityBlock> {
    if m_test == 0 {
        return Err(Error::config("m_test must be at least 1"));
    }
    let x = design(plan, &case.domain(), m_test, seed, STREAM_TEST)?;
    FidelityBlock::evaluate(case, x, Fidelity::High)
}

pub fn build_dataset(
    case: BenchmarkCase,
    plan_train: SamplingPlan,
    m_high: usize,
    m_low: usize,
    plan_test: SamplingPlan,
    m_test: usize,
    seed: u64,
) -> Result<MultiFidelityDataset> {
    let mut data = build_training_set(case, plan_train, m_high, m_low, seed)?;
    data.test = Some(build_test_set(case, plan_test, m_test, seed)?);
    Ok(data)
}
