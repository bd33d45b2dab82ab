//! TOML configuration shared by all subcommands.
//!
//! ```toml
//! seed = 0                      # one seed per invocation
//!
//! [case]
//! name = "rastrigin2d"          # forrester1d | rastrigin2d | f20d
//! train_plan = "lhs"            # lhs | full_factorial (default: case preset)
//! test_plan = "full_factorial"
//! m_high = 60
//! m_low = 500
//! m_test = 10000
//!
//! [model]
//! variant = "GEMFNN"            # NN | GENN | MFNN | GEMFNN
//! low_hidden = [50, 50]
//! linear_hidden = [10]
//! nonlinear_hidden = [50, 50]
//!
//! [optimizer]
//! learning_rate = 1e-3
//! batch_size = 32
//! epochs = 10000
//! beta1 = 0.9
//! beta2 = 0.999
//! epsilon = 1e-8
//!
//! [study]
//! variants = ["NN", "GENN", "MFNN", "GEMFNN"]
//! hf_schedule = [40, 60, 80, 100, 120, 150, 200]
//! n_t = 10
//! target_r2 = 0.99
//! stop_at_target = false
//! threads = 0
//!
//! [study.schedules]             # optional per-variant schedules
//! NN = [40, 80, 150, 300]
//! ```
//!
//! Everything except `case.name` falls back to the case preset.

use std::collections::BTreeMap;
use std::path::Path;

use gemfnn_core::datagen::{BenchmarkCase, SamplingPlan};
use gemfnn_core::models::{Architecture, ModelVariant};
use gemfnn_core::training::TrainConfig;
use serde::Deserialize;

use crate::experiment::{preset, StudyConfig};
use crate::{Error, Result};

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub case: Option<CaseSection>,
    pub model: Option<ModelSection>,
    pub optimizer: Option<OptimizerSection>,
    pub study: Option<StudySection>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSection {
    pub name: Option<String>,
    pub train_plan: Option<String>,
    pub test_plan: Option<String>,
    pub m_high: Option<usize>,
    pub m_low: Option<usize>,
    pub m_test: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub variant: Option<String>,
    pub low_hidden: Option<Vec<usize>>,
    pub linear_hidden: Option<Vec<usize>>,
    pub nonlinear_hidden: Option<Vec<usize>>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    pub variants: Option<Vec<String>>,
    pub hf_schedule: Option<Vec<usize>>,
    pub schedules: Option<BTreeMap<String, Vec<usize>>>,
    pub n_t: Option<usize>,
    pub target_r2: Option<f64>,
    pub stop_at_target: Option<bool>,
    pub threads: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ConfigFile::parse(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    fn case_section(&self) -> CaseSection {
        self.case.clone().unwrap_or_default()
    }

    pub fn benchmark(&self) -> Result<BenchmarkCase> {
        let name = self
            .case_section()
            .name
            .ok_or_else(|| Error::config("case.name is required (forrester1d, rastrigin2d or f20d)"))?;
        BenchmarkCase::parse(&name).map_err(|_| Error::config(format!("case.name: unknown case `{name}`")))
    }

    pub fn variant(&self) -> Result<ModelVariant> {
        let name = self
            .model
            .as_ref()
            .and_then(|m| m.variant.clone())
            .ok_or_else(|| Error::config("model.variant is required (NN, GENN, MFNN or GEMFNN)"))?;
        parse_variant(&name, "model.variant")
    }
}

fn parse_variant(name: &str, field: &str) -> Result<ModelVariant> {
    ModelVariant::parse(name).ok_or_else(|| Error::config(format!("{field}: unknown variant `{name}`")))
}

fn parse_plan(name: Option<String>, default: SamplingPlan, field: &str) -> Result<SamplingPlan> {
    match name {
        None => Ok(default),
        Some(n) => SamplingPlan::parse(&n).map_err(|_| Error::config(format!("{field}: unknown plan `{n}`"))),
    }
}

/// Everything needed to sample a dataset and train one model.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub case: BenchmarkCase,
    pub train_plan: SamplingPlan,
    pub test_plan: SamplingPlan,
    pub m_high: usize,
    pub m_low: usize,
    pub m_test: usize,
    pub architecture: Architecture,
    pub train: TrainConfig,
    pub seed: u64,
}

impl RunSettings {
    pub fn resolve(file: &ConfigFile) -> Result<Self> {
        let case = file.benchmark()?;
        let p = preset(case);
        let c = file.case_section();
        let m = file.model.clone().unwrap_or_default();
        let o = file.optimizer.clone().unwrap_or_default();
        let seed = file.seed.unwrap_or(0);
        let d = p.train;
        let train = TrainConfig {
            learning_rate: o.learning_rate.unwrap_or(d.learning_rate),
            batch_size: o.batch_size.unwrap_or(d.batch_size),
            epochs: o.epochs.unwrap_or(d.epochs),
            beta1: o.beta1.unwrap_or(d.beta1),
            beta2: o.beta2.unwrap_or(d.beta2),
            epsilon: o.epsilon.unwrap_or(d.epsilon),
            seed,
        };
        train.validate().map_err(|e| Error::config(format!("optimizer: {e}")))?;
        Ok(RunSettings {
            case,
            train_plan: parse_plan(c.train_plan, p.train_plan, "case.train_plan")?,
            test_plan: parse_plan(c.test_plan, p.test_plan, "case.test_plan")?,
            m_high: c.m_high.unwrap_or(p.m_high),
            m_low: c.m_low.unwrap_or(p.m_low),
            m_test: c.m_test.unwrap_or(p.m_test),
            architecture: Architecture {
                low_hidden: m.low_hidden.unwrap_or(p.architecture.low_hidden),
                linear_hidden: m.linear_hidden.unwrap_or(p.architecture.linear_hidden),
                nonlinear_hidden: m.nonlinear_hidden.unwrap_or(p.architecture.nonlinear_hidden),
            },
            train,
            seed,
        })
    }
}

pub fn study_config(file: &ConfigFile) -> Result<StudyConfig> {
    let run = RunSettings::resolve(file)?;
    let mut cfg = StudyConfig::for_case(run.case);
    cfg.architecture = run.architecture;
    cfg.train = run.train;
    cfg.train_plan = run.train_plan;
    cfg.test_plan = run.test_plan;
    cfg.m_low = run.m_low;
    cfg.m_test = run.m_test;
    cfg.base_seed = run.seed;
    let s = file.study.clone().unwrap_or_default();
    if let Some(names) = s.variants {
        cfg.variants = names
            .iter()
            .map(|n| parse_variant(n, "study.variants"))
            .collect::<Result<_>>()?;
    }
    if let Some(h) = s.hf_schedule {
        cfg.hf_schedule = h;
        cfg.schedules.clear();
    }
    if let Some(map) = s.schedules {
        for (name, sched) in map {
            let v = parse_variant(&name, "study.schedules")?;
            cfg.schedules.retain(|(w, _)| *w != v);
            cfg.schedules.push((v, sched));
        }
    }
    cfg.n_t = s.n_t.unwrap_or(cfg.n_t);
    cfg.target_r2 = s.target_r2.unwrap_or(cfg.target_r2);
    cfg.stop_at_target = s.stop_at_target.unwrap_or(cfg.stop_at_target);
    cfg.threads = s.threads.unwrap_or(cfg.threads);
    cfg.validate()?;
    Ok(cfg)
}
