//! Sample-size studies over the benchmark cases.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::Instant;

use gemfnn_core::datagen::{build_test_set, build_training_set, BenchmarkCase, FidelityBlock, SamplingPlan};
use gemfnn_core::models::{Architecture, CompositeSurrogate, ModelVariant};
use gemfnn_core::training::{train, TrainConfig};
use gemfnn_core::validation::{aggregate, r_squared};
use rayon::prelude::*;

use crate::{Error, Result};

/// Default sampling, network and optimizer settings of one benchmark case.
#[derive(Debug, Clone, PartialEq)]
pub struct CasePreset {
    pub case: BenchmarkCase,
    pub train_plan: SamplingPlan,
    pub test_plan: SamplingPlan,
    pub m_high: usize,
    pub m_low: usize,
    pub m_test: usize,
    pub architecture: Architecture,
    pub train: TrainConfig,
    pub hf_schedule: Vec<usize>,
    /// Longer schedules for variants expected to need more samples.
    pub extended: Vec<(ModelVariant, Vec<usize>)>,
}

pub fn preset(case: BenchmarkCase) -> CasePreset {
    let optimizer = |batch_size, epochs| TrainConfig {
        learning_rate: 1e-3,
        batch_size,
        epochs,
        ..TrainConfig::default()
    };
    match case {
        BenchmarkCase::Forrester1d => CasePreset {
            case,
            train_plan: SamplingPlan::FullFactorial,
            test_plan: SamplingPlan::FullFactorial,
            m_high: 10,
            m_low: 50,
            m_test: 1000,
            architecture: Architecture {
                low_hidden: vec![20],
                linear_hidden: vec![10],
                nonlinear_hidden: vec![10],
            },
            train: optimizer(10, 15_000),
            hf_schedule: vec![4, 6, 8, 10, 12, 14, 16, 18, 20, 25, 30],
            extended: Vec::new(),
        },
        BenchmarkCase::Rastrigin2d => CasePreset {
            case,
            train_plan: SamplingPlan::LatinHypercube,
            test_plan: SamplingPlan::FullFactorial,
            m_high: 60,
            m_low: 500,
            m_test: 10_000,
            architecture: Architecture {
                low_hidden: vec![50, 50],
                linear_hidden: vec![10],
                nonlinear_hidden: vec![50, 50],
            },
            train: optimizer(32, 10_000),
            hf_schedule: vec![40, 60, 80, 100, 120, 150, 200],
            extended: Vec::new(),
        },
        BenchmarkCase::F20d => {
            let longer = vec![100, 200, 300, 500, 1000, 1500, 2500];
            CasePreset {
                case,
                train_plan: SamplingPlan::LatinHypercube,
                test_plan: SamplingPlan::LatinHypercube,
                m_high: 300,
                m_low: 30_000,
                m_test: 10_000,
                architecture: Architecture {
                    low_hidden: vec![128; 6],
                    linear_hidden: vec![10],
                    nonlinear_hidden: vec![64; 4],
                },
                train: optimizer(64, 10_000),
                hf_schedule: vec![100, 200, 300, 500, 1000],
                extended: [ModelVariant::Nn, ModelVariant::Genn, ModelVariant::Mfnn]
                    .into_iter()
                    .map(|v| (v, longer.clone()))
                    .collect(),
            }
        }
    }
}

/// High-fidelity evaluations charged to a model trained on `m_high` samples;
/// gradient variants pay for the function and its gradient.
pub fn modeling_cost(variant: ModelVariant, m_high: usize) -> usize {
    if variant.uses_gradients() {
        2 * m_high
    } else {
        m_high
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub case: BenchmarkCase,
    pub variants: Vec<ModelVariant>,
    pub hf_schedule: Vec<usize>,
    /// Per-variant replacements for `hf_schedule`.
    pub schedules: Vec<(ModelVariant, Vec<usize>)>,
    pub m_low: usize,
    pub n_t: usize,
    pub architecture: Architecture,
    pub train: TrainConfig,
    pub train_plan: SamplingPlan,
    pub test_plan: SamplingPlan,
    pub m_test: usize,
    pub base_seed: u64,
    pub target_r2: f64,
    /// Skip the rest of a variant's schedule once it reaches `target_r2`.
    pub stop_at_target: bool,
    /// Worker count; 0 uses the available parallelism.
    pub threads: usize,
}

impl StudyConfig {
    pub fn for_case(case: BenchmarkCase) -> Self {
        let p = preset(case);
        StudyConfig {
            case,
            variants: ModelVariant::ALL.to_vec(),
            hf_schedule: p.hf_schedule,
            schedules: p.extended,
            m_low: p.m_low,
            n_t: 10,
            architecture: p.architecture,
            train: p.train,
            train_plan: p.train_plan,
            test_plan: p.test_plan,
            m_test: p.m_test,
            base_seed: 0,
            target_r2: 0.99,
            stop_at_target: false,
            threads: 0,
        }
    }

    pub fn schedule(&self, variant: ModelVariant) -> &[usize] {
        self.schedules
            .iter()
            .find(|(v, _)| *v == variant)
            .map(|(_, s)| s.as_slice())
            .unwrap_or(&self.hf_schedule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.variants.is_empty() {
            return Err(Error::config("study.variants: at least one variant is required"));
        }
        if self.n_t == 0 {
            return Err(Error::config("study.n_t must be at least 1"));
        }
        for &v in &self.variants {
            let s = self.schedule(v);
            if s.is_empty() || s[0] == 0 || s.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::config(format!(
                    "study.hf_schedule for {v} must be strictly increasing positive counts"
                )));
            }
            if v.is_multifidelity() && self.m_low == 0 {
                return Err(Error::config(format!("case.m_low must be positive for {v}")));
            }
        }
        self.train.validate()?;
        Ok(())
    }
}

/// One repetition that did not produce an R² value.
#[derive(Debug, Clone, PartialEq)]
pub struct FailedRun {
    pub repetition: usize,
    pub reason: String,
}

/// Aggregated outcome of the `n_t` repetitions at one `(variant, m_high)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub variant: ModelVariant,
    pub m_high: usize,
    pub cost: usize,
    /// R² of the successful repetitions, in repetition order.
    pub r2_values: Vec<f64>,
    pub failures: Vec<FailedRun>,
    /// `None` when more than half of the repetitions failed.
    pub stats: Option<(f64, f64)>,
    /// Mean wall time of one training run, in seconds.
    pub wall_time_s: f64,
}

impl CellResult {
    pub fn mu_r2(&self) -> Option<f64> {
        self.stats.map(|s| s.0)
    }

    pub fn sigma_r2(&self) -> Option<f64> {
        self.stats.map(|s| s.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub case: BenchmarkCase,
    pub target_r2: f64,
    pub variants: Vec<ModelVariant>,
    pub cells: Vec<CellResult>,
}

impl StudyResult {
    /// The cheapest cell of `variant` whose mean R² reaches the target.
    pub fn first_at_target(&self, variant: ModelVariant) -> Option<&CellResult> {
        self.cells
            .iter()
            .filter(|c| c.variant == variant && c.mu_r2().is_some_and(|m| m >= self.target_r2))
            .min_by_key(|c| c.cost)
    }

    pub fn cost_to_target(&self, variant: ModelVariant) -> Option<usize> {
        self.first_at_target(variant).map(|c| c.cost)
    }

    pub fn cell(&self, variant: ModelVariant, m_high: usize) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.variant == variant && c.m_high == m_high)
    }
}

/// Trains one freshly initialized model on repetition `rep` and scores it on `test`.
pub fn run_once(
    cfg: &StudyConfig,
    variant: ModelVariant,
    m_high: usize,
    rep: usize,
    test: &FidelityBlock,
) -> Result<f64> {
    let seed = cfg.base_seed.wrapping_add(rep as u64);
    let m_low = if variant.is_multifidelity() { cfg.m_low } else { 0 };
    let data = build_training_set(cfg.case, cfg.train_plan, m_high, m_low, seed)?;
    let model = CompositeSurrogate::new(variant, cfg.case.dim(), &cfg.architecture, seed)?;
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let (model, _) = train(model, &data, &train_cfg)?;
    let pred = model.predict_high(&test.x)?;
    if pred.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numerical("non-finite test prediction".into()));
    }
    Ok(r_squared(&test.y, &pred)?)
}

fn summarize(variant: ModelVariant, m_high: usize, n_t: usize, runs: Vec<(Result<f64>, f64)>) -> CellResult {
    let mut r2_values = Vec::new();
    let mut failures = Vec::new();
    let mut wall = 0.0;
    for (rep, (outcome, secs)) in runs.into_iter().enumerate() {
        wall += secs;
        match outcome {
            Ok(r2) => r2_values.push(r2),
            Err(e) => {
                log::warn!("{variant} m_hf={m_high} repetition {rep} failed: {e}");
                failures.push(FailedRun {
                    repetition: rep,
                    reason: e.to_string(),
                })
            }
        }
    }
    let stats = if 2 * failures.len() > n_t {
        None
    } else {
        aggregate(&r2_values).ok()
    };
    CellResult {
        variant,
        m_high,
        cost: modeling_cost(variant, m_high),
        r2_values,
        failures,
        stats,
        wall_time_s: wall / n_t as f64,
    }
}

/// Runs every `(variant, m_high, repetition)` cell of the study.
///
/// Repetition `r` uses seed `base_seed + r` for its training data, network
/// initialization and mini-batch shuffling; the test set is drawn once from
/// `base_seed`. Cells are evaluated one schedule level at a time so that
/// `stop_at_target` can retire variants, and results are merged by cell index,
/// so the outcome does not depend on the worker count.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyResult> {
    run_study_observed(cfg, |_| {})
}

/// [`run_study`] with a callback invoked on every finished cell.
pub fn run_study_observed(cfg: &StudyConfig, mut on_cell: impl FnMut(&CellResult)) -> Result<StudyResult> {
    cfg.validate()?;
    let test = build_test_set(cfg.case, cfg.test_plan, cfg.m_test, cfg.base_seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::config(format!("worker pool: {e}")))?;

    let mut active: Vec<bool> = vec![true; cfg.variants.len()];
    let mut cells = Vec::new();
    let levels = cfg.variants.iter().map(|&v| cfg.schedule(v).len()).max().unwrap_or(0);
    for level in 0..levels {
        let jobs: Vec<(ModelVariant, usize, usize)> = cfg
            .variants
            .iter()
            .enumerate()
            .filter(|&(i, &v)| active[i] && level < cfg.schedule(v).len())
            .flat_map(|(_, &v)| {
                let m = cfg.schedule(v)[level];
                (0..cfg.n_t).map(move |rep| (v, m, rep))
            })
            .collect();
        let outcomes: Vec<(Result<f64>, f64)> = pool.install(|| {
            jobs.par_iter()
                .map(|&(v, m, rep)| {
                    let t = Instant::now();
                    let r = run_once(cfg, v, m, rep, &test);
                    (r, t.elapsed().as_secs_f64())
                })
                .collect()
        });
        let mut outcomes = outcomes.into_iter();
        for (i, &v) in cfg.variants.iter().enumerate() {
            if !active[i] || level >= cfg.schedule(v).len() {
                continue;
            }
            let m = cfg.schedule(v)[level];
            let runs: Vec<_> = outcomes.by_ref().take(cfg.n_t).collect();
            let cell = summarize(v, m, cfg.n_t, runs);
            log::info!(
                "{} {v} m_hf={m} cost={} mu_r2={} sigma_r2={}",
                cfg.case.name(),
                cell.cost,
                cell.mu_r2().map_or("invalid".into(), |x| format!("{x:.6}")),
                cell.sigma_r2().map_or("invalid".into(), |x| format!("{x:.6}")),
            );
            if cfg.stop_at_target && cell.mu_r2().is_some_and(|m| m >= cfg.target_r2) {
                active[i] = false;
            }
            on_cell(&cell);
            cells.push(cell);
        }
    }
    cells.sort_by_key(|c| {
        (
            cfg.variants.iter().position(|&v| v == c.variant).unwrap_or(usize::MAX),
            c.m_high,
        )
    });
    Ok(StudyResult {
        case: cfg.case,
        target_r2: cfg.target_r2,
        variants: cfg.variants.clone(),
        cells,
    })
}

pub const RESULTS_HEADER: &str = "case,variant,m_hf,cost,mu_r2,sigma_r2,wall_time_s";
pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const RUNS_FILE: &str = "runs.csv";

/// One row of `results.csv`. Invalid cells carry `NaN` statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub case: String,
    pub variant: String,
    pub m_hf: usize,
    pub cost: usize,
    pub mu_r2: f64,
    pub sigma_r2: f64,
    pub wall_time_s: f64,
}

impl ResultRow {
    pub fn to_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.case, self.variant, self.m_hf, self.cost, self.mu_r2, self.sigma_r2, self.wall_time_s
        )
    }
}

pub fn result_rows(result: &StudyResult) -> Vec<ResultRow> {
    result
        .cells
        .iter()
        .map(|c| ResultRow {
            case: result.case.name().into(),
            variant: c.variant.name().into(),
            m_hf: c.m_high,
            cost: c.cost,
            mu_r2: c.mu_r2().unwrap_or(f64::NAN),
            sigma_r2: c.sigma_r2().unwrap_or(f64::NAN),
            wall_time_s: c.wall_time_s,
        })
        .collect()
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes `results.csv`, `summary.csv` (cost to target per variant, or
/// `not reached`) and `runs.csv` (every repetition) into `dir`.
pub fn emit_results(result: &StudyResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut table = format!("{RESULTS_HEADER}\n");
    for row in result_rows(result) {
        table.push_str(&row.to_line());
        table.push('\n');
    }
    write_file(&dir.join(RESULTS_FILE), &table)?;

    let mut summary = String::from("case,variant,target_r2,cost_to_target,m_hf\n");
    for &v in &result.variants {
        let (cost, m) = match result.first_at_target(v) {
            Some(c) => (c.cost.to_string(), c.m_high.to_string()),
            None => ("not reached".into(), "not reached".into()),
        };
        summary.push_str(&format!("{},{v},{},{cost},{m}\n", result.case.name(), result.target_r2));
    }
    write_file(&dir.join(SUMMARY_FILE), &summary)?;

    let mut runs = String::from("case,variant,m_hf,repetition,r2,status\n");
    for c in &result.cells {
        let n_t = c.r2_values.len() + c.failures.len();
        let mut ok = c.r2_values.iter();
        for rep in 0..n_t {
            let line = match c.failures.iter().find(|f| f.repetition == rep) {
                Some(f) => format!("NaN,\"failed: {}\"", f.reason.replace('"', "'")),
                None => format!("{},ok", ok.next().copied().unwrap_or(f64::NAN)),
            };
            runs.push_str(&format!("{},{},{},{rep},{line}\n", result.case.name(), c.variant, c.m_high));
        }
    }
    write_file(&dir.join(RUNS_FILE), &runs)
}

/// Reads a `results.csv` written by [`emit_results`].
pub fn parse_results(path: &Path) -> Result<Vec<ResultRow>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(f).lines();
    let bad = |n: usize, what: &str| Error::data(format!("{}:{n}: {what}", path.display()));
    match lines.next() {
        Some(Ok(h)) if h.trim() == RESULTS_HEADER => {}
        _ => return Err(bad(1, "unexpected header")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad(n, "expected 7 fields"));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(n, "bad count"));
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(n, "bad number"));
        rows.push(ResultRow {
            case: f[0].into(),
            variant: f[1].into(),
            m_hf: int(f[2])?,
            cost: int(f[3])?,
            mu_r2: num(f[4])?,
            sigma_r2: num(f[5])?,
            wall_time_s: num(f[6])?,
        });
    }
    Ok(rows)
}
