//! Subcommands of the `gemfnn` binary.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gemfnn_core::datagen::build_dataset;
use gemfnn_core::models::CompositeSurrogate;
use gemfnn_core::training::train_observed;
use gemfnn_core::validation::r_squared;

use crate::config::{study_config, ConfigFile, RunSettings};
use crate::dataset::{load_dataset, save_dataset};
use crate::experiment::{emit_results, run_study_observed};
use crate::model_file::{load_model, save_history, save_model};
use crate::verify::{verify_all, Tolerance, VerifyOptions};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "gemfnn", version, about = "Gradient-enhanced multifidelity neural network surrogates")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a benchmark case and write the dataset file.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model on a dataset file.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Loss history file (default: `<out>.history.csv`).
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a saved model on the test rows of a dataset file (or its
    /// high-fidelity rows when it has no test block).
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also write the report row to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a sample-size study and write its result tables.
    Study {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out_dir: PathBuf,
        /// Worker threads (0: available parallelism).
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        n_t: Option<usize>,
        #[arg(long)]
        stop_at_target: bool,
    },
    /// Check every analytic derivative against finite differences.
    VerifyGrads {
        #[arg(long, default_value_t = 1e-5)]
        rtol: f64,
        #[arg(long, default_value_t = 1e-8)]
        atol: f64,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 100)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `case.name`.
    #[arg(long)]
    pub case: Option<String>,
}

impl Common {
    fn load(&self) -> Result<ConfigFile> {
        let mut file = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        if let Some(s) = self.seed {
            file.seed = Some(s);
        }
        if let Some(c) = &self.case {
            file.case.get_or_insert_with(Default::default).name = Some(c.clone());
        }
        Ok(file)
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample { common, out } => cmd_sample(&common.load()?, &out),
        Command::Train {
            common,
            data,
            out,
            history,
            variant,
            epochs,
        } => {
            let mut file = common.load()?;
            let model = file.model.get_or_insert_with(Default::default);
            if variant.is_some() {
                model.variant = variant;
            }
            if epochs.is_some() {
                file.optimizer.get_or_insert_with(Default::default).epochs = epochs;
            }
            let history = history.unwrap_or_else(|| default_history_path(&out));
            cmd_train(&file, &data, &out, &history)
        }
        Command::Evaluate { model, data, out } => cmd_evaluate(&model, &data, out.as_deref()).map(|_| ()),
        Command::Study {
            common,
            out_dir,
            threads,
            n_t,
            stop_at_target,
        } => {
            let mut file = common.load()?;
            let s = file.study.get_or_insert_with(Default::default);
            if threads.is_some() {
                s.threads = threads;
            }
            if n_t.is_some() {
                s.n_t = n_t;
            }
            if stop_at_target {
                s.stop_at_target = Some(true);
            }
            cmd_study(&file, &out_dir)
        }
        Command::VerifyGrads {
            rtol,
            atol,
            trials,
            points,
            seed,
        } => cmd_verify_grads(&VerifyOptions {
            trials,
            benchmark_points: points,
            seed,
            tolerance: Tolerance { rtol, atol },
        }),
    }
}

pub fn default_history_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".history.csv");
    PathBuf::from(s)
}

pub fn cmd_sample(file: &ConfigFile, out: &Path) -> Result<()> {
    let s = RunSettings::resolve(file)?;
    let mut data = build_dataset(
        s.case,
        s.train_plan,
        s.m_high,
        s.m_low,
        s.test_plan,
        s.m_test.max(1),
        s.seed,
    )?;
    if s.m_test == 0 {
        data.test = None;
    }
    save_dataset(&data, out)?;
    log::info!(
        "wrote {} high, {} low, {} test rows to {}",
        data.high.len(),
        data.low.as_ref().map_or(0, |b| b.len()),
        data.test.as_ref().map_or(0, |b| b.len()),
        out.display()
    );
    Ok(())
}

pub fn cmd_train(file: &ConfigFile, data: &Path, out: &Path, history: &Path) -> Result<()> {
    let s = RunSettings::resolve(file)?;
    let variant = file.variant()?;
    let data = load_dataset(data)?;
    let model = CompositeSurrogate::new(variant, data.dim(), &s.architecture, s.seed)?;
    let every = (s.train.epochs / 10).max(1);
    let (model, hist) = train_observed(model, &data, &s.train, |epoch, loss| {
        if (epoch + 1) % every == 0 {
            log::info!("epoch {} loss {loss:e}", epoch + 1);
        }
    })?;
    save_model(&model, out)?;
    save_history(&hist, history)
}

/// Prints and returns the R² of `model` on the dataset's test rows.
pub fn cmd_evaluate(model_path: &Path, data: &Path, out: Option<&Path>) -> Result<f64> {
    let model = load_model(model_path)?;
    let ds = load_dataset(data)?;
    let (tag, block) = match &ds.test {
        Some(t) => ("test", t),
        None => ("high", &ds.high),
    };
    if block.dim() != model.input_dim() {
        return Err(Error::data(format!(
            "dataset has {} inputs but the model expects {}",
            block.dim(),
            model.input_dim()
        )));
    }
    let pred = model.predict_high(&block.x)?;
    let r2 = r_squared(&block.y, &pred)?;
    println!("r2 {r2} rows {} block {tag}", block.len());
    if let Some(path) = out {
        let body = format!(
            "model,data,block,rows,r2\n{},{},{tag},{},{r2}\n",
            model_path.display(),
            data.display(),
            block.len()
        );
        std::fs::write(path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(r2)
}

pub fn cmd_study(file: &ConfigFile, out_dir: &Path) -> Result<()> {
    let cfg = study_config(file)?;
    let result = run_study_observed(&cfg, |c| {
        eprintln!(
            "{} {} m_hf={} cost={} mu_r2={} sigma_r2={} failed={}",
            cfg.case.name(),
            c.variant,
            c.m_high,
            c.cost,
            c.mu_r2().map_or("invalid".into(), |m| m.to_string()),
            c.sigma_r2().map_or("invalid".into(), |m| m.to_string()),
            c.failures.len()
        )
    })?;
    emit_results(&result, out_dir)?;
    for &v in &result.variants {
        match result.cost_to_target(v) {
            Some(c) => println!("{v}: cost to R2 >= {} is {c}", result.target_r2),
            None => println!("{v}: R2 >= {} not reached", result.target_r2),
        }
    }
    Ok(())
}

pub fn cmd_verify_grads(opts: &VerifyOptions) -> Result<()> {
    let reports = verify_all(opts);
    for r in &reports {
        println!("{}", r.line());
    }
    let failing: Vec<_> = reports.iter().filter(|r| !r.passed()).collect();
    if failing.is_empty() {
        return Ok(());
    }
    let worst = failing
        .iter()
        .filter_map(|r| r.worst.as_ref().map(|w| (r, w)))
        .max_by(|a, b| a.1.ratio.total_cmp(&b.1.ratio));
    let detail = match worst {
        Some((r, w)) => format!(
            "; worst offender {} trial {} component {} (ratio {:.3e})",
            r.name, w.trial, w.component, w.ratio
        ),
        None => String::new(),
    };
    Err(Error::Numerical(format!(
        "{} of {} gradient checks failed{detail}",
        failing.len(),
        reports.len()
    )))
}
