//! Finite-difference checks of every analytic derivative in the toolkit.
//!
//! A component passes when `|analytic − fd| ≤ rtol·max(|analytic|, |fd|) + atol·max(1, |f|)`,
//! where `f` is the function being differenced. Scaling the floor by `|f|` keeps
//! the check meaningful for large-valued benchmarks, whose central differences
//! carry round-off proportional to the function value.

use gemfnn_core::datagen::{BenchmarkCase, Fidelity};
use gemfnn_core::diffengine::loss_param_gradient;
use gemfnn_core::models::{compute_loss, Architecture, CompositeSurrogate, LossBatch, ModelVariant, SurrogateParams};
use gemfnn_core::network::{forward, forward_with_input_jacobian, init_mlp, Activation, LayerSpec};
use gemfnn_core::training::NormalizationScalers;
use gemfnn_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Step of the three-point stencil used for network and loss checks.
pub const FD_STEP: f64 = 1e-5;
/// Step of the five-point stencil used for scalar functions. The benchmark
/// functions have third derivatives near 1e5, which would put the truncation
/// error of a three-point stencil above the tolerance wherever the gradient
/// is close to zero.
pub const STENCIL_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { rtol: 1e-5, atol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Offender {
    pub trial: usize,
    pub component: usize,
    pub analytic: f64,
    pub reference: f64,
    /// Error divided by the allowed error; above 1 means failure.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: String,
    pub trials: usize,
    pub compared: usize,
    pub failed: usize,
    pub worst: Option<Offender>,
}

impl CheckReport {
    fn new(name: impl Into<String>) -> Self {
        CheckReport {
            name: name.into(),
            trials: 0,
            compared: 0,
            failed: 0,
            worst: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.failed == 0 && self.compared > 0
    }

    fn record(&mut self, trial: usize, component: usize, analytic: f64, reference: f64, f_scale: f64, tol: Tolerance) {
        let allowed = tol.rtol * analytic.abs().max(reference.abs()) + tol.atol * f_scale.abs().max(1.0);
        let err = (analytic - reference).abs();
        let ratio = if err.is_nan() { f64::INFINITY } else { err / allowed };
        self.compared += 1;
        if ratio > 1.0 {
            self.failed += 1;
        }
        if self.worst.as_ref().is_none_or(|w| ratio > w.ratio) {
            self.worst = Some(Offender {
                trial,
                component,
                analytic,
                reference,
                ratio,
            });
        }
    }

    /// `PASS`/`FAIL` line with the worst component.
    pub fn line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let worst = match &self.worst {
            Some(w) => format!(
                " worst: trial {} component {} analytic {:e} fd {:e} ratio {:.3e}",
                w.trial, w.component, w.analytic, w.reference, w.ratio
            ),
            None => String::new(),
        };
        format!(
            "{status} {}: {} trials, {} components, {} beyond tolerance;{worst}",
            self.name, self.trials, self.compared, self.failed
        )
    }
}

fn central(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    (f(x + FD_STEP) - f(x - FD_STEP)) / (2.0 * FD_STEP)
}

fn five_point(mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    let h = STENCIL_STEP;
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

/// Compares `grad` against five-point central differences of `value` at each point.
pub fn check_scalar_gradient(
    name: &str,
    points: &[Vec<f64>],
    value: impl Fn(&[f64]) -> f64,
    grad: impl Fn(&[f64]) -> Vec<f64>,
    tol: Tolerance,
) -> CheckReport {
    let mut report = CheckReport::new(name);
    for (trial, x) in points.iter().enumerate() {
        report.trials += 1;
        let g = grad(x);
        let fx = value(x);
        let mut xp = x.clone();
        for k in 0..x.len() {
            let r = five_point(
                |v| {
                    xp[k] = v;
                    value(&xp)
                },
                x[k],
            );
            xp[k] = x[k];
            report.record(trial, k, g.get(k).copied().unwrap_or(f64::NAN), r, fx, tol);
        }
    }
    report
}

fn interior_points(case: BenchmarkCase, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let dom = case.domain();
    (0..n)
        .map(|_| {
            (0..case.dim())
                .map(|k| {
                    let (l, u) = (dom.lower()[k], dom.upper()[k]);
                    let pad = 1e-3 * (u - l);
                    rng.random_range(l + pad..u - pad)
                })
                .collect()
        })
        .collect()
}

pub fn check_benchmarks(points: usize, seed: u64, tol: Tolerance) -> Vec<CheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for case in BenchmarkCase::ALL {
        let pts = interior_points(case, points, &mut rng);
        for (fid, tag) in [(Fidelity::High, "high"), (Fidelity::Low, "low")] {
            out.push(check_scalar_gradient(
                &format!("benchmark {} {tag}-fidelity gradient", case.name()),
                &pts,
                |x| case.value(x, fid),
                |x| case.gradient(x, fid),
                tol,
            ));
        }
    }
    out
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

fn random_hidden(rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..rng.random_range(1..=2)).map(|_| rng.random_range(2..=5)).collect()
}

fn random_params(rng: &mut ChaCha8Rng, variant: ModelVariant, dim: usize) -> SurrogateParams {
    let arch = Architecture {
        low_hidden: random_hidden(rng),
        linear_hidden: random_hidden(rng),
        nonlinear_hidden: random_hidden(rng),
    };
    let mut p = SurrogateParams::init(variant, dim, &arch, rng.random()).expect("valid architecture");
    // biases start at zero; perturb everything so no term is trivially inactive
    for s in p.slices_mut() {
        for v in s.iter_mut() {
            *v += rng.random_range(-0.3..0.3);
        }
    }
    p
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> LossBatch {
    LossBatch::new(
        random_matrix(rng, n, dim, 1.0),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        Some(random_matrix(rng, n, dim, 1.0)),
    )
    .expect("consistent batch")
}

/// Input Jacobians of random tanh/linear networks.
pub fn check_network_jacobians(trials: usize, seed: u64, tol: Tolerance) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CheckReport::new("network input jacobian");
    for trial in 0..trials {
        report.trials += 1;
        let dim = rng.random_range(1..=4);
        let mut specs: Vec<LayerSpec> = (0..rng.random_range(1..=3))
            .map(|_| {
                let act = if rng.random_bool(0.7) { Activation::Tanh } else { Activation::Linear };
                LayerSpec::new(rng.random_range(1..=6), act)
            })
            .collect();
        specs.push(LayerSpec::linear(rng.random_range(1..=3)));
        let mlp = init_mlp(dim, &specs, rng.random()).expect("valid specs");
        let x = random_matrix(&mut rng, 3, dim, 2.0);
        let (_, jac) = forward_with_input_jacobian(&mlp, &x).expect("shapes agree");
        let out_dim = mlp.output_dim();
        for b in 0..3 {
            for i in 0..dim {
                let mut xp = x.clone();
                let base = x.get(b, i);
                let mut eval = |v: f64| {
                    xp.set(b, i, v);
                    forward(&mlp, &xp).expect("shapes agree")
                };
                let hi = eval(base + FD_STEP);
                let lo = eval(base - FD_STEP);
                let y = forward(&mlp, &x).expect("shapes agree");
                for o in 0..out_dim {
                    let fd = (hi.get(b, o) - lo.get(b, o)) / (2.0 * FD_STEP);
                    let component = (b * out_dim + o) * dim + i;
                    report.record(trial, component, jac.get(b, o, i), fd, y.get(b, o), tol);
                }
            }
        }
    }
    report
}

/// Parameter gradients of the training loss of `variant`.
pub fn check_loss_gradient(variant: ModelVariant, trials: usize, seed: u64, tol: Tolerance) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CheckReport::new(format!("{variant} loss parameter gradient"));
    for trial in 0..trials {
        report.trials += 1;
        let dim = rng.random_range(1..=3);
        let params = random_params(&mut rng, variant, dim);
        let (n_high, n_low) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let high = random_batch(&mut rng, n_high, dim);
        let low = random_batch(&mut rng, n_low, dim);
        let low = variant.is_multifidelity().then_some(&low);
        let (loss, grad) = loss_param_gradient(variant, &params, &high, low).expect("valid inputs");
        let analytic = grad.to_flat();
        let mut p = params.clone();
        let mut component = 0;
        for s in 0..p.slices().len() {
            for j in 0..p.slices()[s].len() {
                let base = p.slices()[s][j];
                let fd = central(
                    |v| {
                        p.slices_mut()[s][j] = v;
                        compute_loss(variant, &p, &high, low).expect("valid inputs")
                    },
                    base,
                );
                p.slices_mut()[s][j] = base;
                report.record(trial, component, analytic[component], fd, loss, tol);
                component += 1;
            }
        }
    }
    report
}

/// Physical-space prediction gradients of the assembled surrogate, with
/// random non-identity scalers.
pub fn check_composite_gradient(variant: ModelVariant, trials: usize, seed: u64, tol: Tolerance) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = CheckReport::new(format!("{variant} prediction gradient"));
    for trial in 0..trials {
        report.trials += 1;
        let dim = rng.random_range(1..=3);
        let params = random_params(&mut rng, variant, dim);
        let scalers = NormalizationScalers {
            x_mean: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            x_std: (0..dim).map(|_| rng.random_range(0.5..2.0)).collect(),
            y_high: (rng.random_range(-3.0..3.0), rng.random_range(0.5..4.0)),
            y_low: variant
                .is_multifidelity()
                .then(|| (rng.random_range(-3.0..3.0), rng.random_range(0.5..4.0))),
        };
        let model = CompositeSurrogate::from_parts(variant, params, scalers).expect("consistent model");
        let pts: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let one = |x: &[f64]| Matrix::from_vec(1, x.len(), x.to_vec()).expect("sized");
        let sub = check_scalar_gradient(
            "",
            &pts,
            |x| model.predict_high(&one(x)).expect("shapes agree")[0],
            |x| {
                let (_, g) = model.predict_high_with_gradient(&one(x)).expect("shapes agree");
                g.row(0).to_vec()
            },
            tol,
        );
        report.compared += sub.compared;
        report.failed += sub.failed;
        if let Some(w) = sub.worst {
            if report.worst.as_ref().is_none_or(|r| w.ratio > r.ratio) {
                report.worst = Some(Offender {
                    trial,
                    component: w.trial * dim + w.component,
                    ..w
                });
            }
        }
    }
    report
}

/// How much of the toolkit `verify` exercises.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub trials: usize,
    pub benchmark_points: usize,
    pub seed: u64,
    pub tolerance: Tolerance,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            trials: 20,
            benchmark_points: 100,
            seed: 0,
            tolerance: Tolerance::default(),
        }
    }
}

/// All checks: network Jacobians, the four loss gradients, the four
/// prediction gradients and the six benchmark gradients.
pub fn verify_all(opts: &VerifyOptions) -> Vec<CheckReport> {
    let tol = opts.tolerance;
    let mut out = vec![check_network_jacobians(opts.trials, opts.seed, tol)];
    for (i, v) in ModelVariant::ALL.into_iter().enumerate() {
        let s = opts.seed.wrapping_add(1 + i as u64);
        out.push(check_loss_gradient(v, opts.trials, s, tol));
    }
    for (i, v) in ModelVariant::ALL.into_iter().enumerate() {
        let s = opts.seed.wrapping_add(11 + i as u64);
        out.push(check_composite_gradient(v, opts.trials, s, tol));
    }
    out.extend(check_benchmarks(opts.benchmark_points, opts.seed.wrapping_add(21), tol));
    out
}
