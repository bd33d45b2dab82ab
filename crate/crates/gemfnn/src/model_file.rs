//! Plain-text model files.
//!
//! ```text
//! gemfnn-model 1
//! variant GEMFNN
//! omega 5e-1
//! x_mean <D numbers>
//! x_std <D numbers>
//! y_high <mean> <std>
//! y_low <mean> <std>          (multifidelity only)
//! net <low|linear|nonlinear> <input_dim> <layer count>
//! layer <width> <tanh|linear>
//! weights <width * fan_in numbers, row-major>
//! bias <width numbers>
//! ```
//!
//! Numbers use the shortest representation that parses back to the same
//! `f64`, so saving and loading is lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gemfnn_core::models::{CompositeSurrogate, ModelVariant, SurrogateParams};
use gemfnn_core::network::{Activation, Dense, Mlp};
use gemfnn_core::training::NormalizationScalers;
use gemfnn_core::Matrix;

use crate::{Error, Result};

const MAGIC: &str = "gemfnn-model 1";

fn push_numbers(out: &mut String, key: &str, values: &[f64]) {
    out.push_str(key);
    for v in values {
        let _ = write!(out, " {v:e}");
    }
    out.push('\n');
}

fn push_net(out: &mut String, name: &str, mlp: &Mlp) {
    let _ = writeln!(out, "net {name} {} {}", mlp.input_dim(), mlp.layers().len());
    for layer in mlp.layers() {
        let _ = writeln!(out, "layer {} {}", layer.width(), layer.activation().name());
        push_numbers(out, "weights", layer.weights());
        push_numbers(out, "bias", layer.bias());
    }
}

pub fn model_to_string(model: &CompositeSurrogate) -> String {
    let mut out = String::new();
    let s = &model.scalers;
    let p = &model.params;
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "variant {}", model.variant.name());
    push_numbers(&mut out, "omega", &[p.omega]);
    push_numbers(&mut out, "x_mean", &s.x_mean);
    push_numbers(&mut out, "x_std", &s.x_std);
    push_numbers(&mut out, "y_high", &[s.y_high.0, s.y_high.1]);
    if let Some((m, sd)) = s.y_low {
        push_numbers(&mut out, "y_low", &[m, sd]);
    }
    if let Some(low) = &p.low {
        push_net(&mut out, "low", low);
    }
    if let Some(linear) = &p.linear {
        push_net(&mut out, "linear", linear);
    }
    push_net(&mut out, "nonlinear", &p.nonlinear);
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_fields(&mut self) -> Option<Vec<&'a str>> {
        for (i, l) in self.inner.by_ref() {
            self.line = i + 1;
            let l = l.trim();
            if !l.is_empty() && !l.starts_with('#') {
                return Some(l.split_whitespace().collect());
            }
        }
        None
    }

    fn err(&self, msg: impl std::fmt::Display) -> Error {
        Error::data(format!("model file line {}: {msg}", self.line))
    }

    fn expect(&mut self, key: &str) -> Result<Vec<&'a str>> {
        match self.next_fields() {
            Some(f) if f[0] == key => Ok(f[1..].to_vec()),
            Some(f) => Err(self.err(format!("expected `{key}`, found `{}`", f[0]))),
            None => Err(self.err(format!("expected `{key}`, found end of file"))),
        }
    }

    fn all_numbers(&mut self, key: &str) -> Result<Vec<f64>> {
        let f = self.expect(key)?;
        f.iter()
            .map(|t| t.parse::<f64>().map_err(|_| self.err(format!("`{t}` is not a number"))))
            .collect()
    }

    fn numbers(&mut self, key: &str, count: usize) -> Result<Vec<f64>> {
        let f = self.expect(key)?;
        if f.len() != count {
            return Err(self.err(format!("`{key}` needs {count} numbers, found {}", f.len())));
        }
        f.iter()
            .map(|t| t.parse::<f64>().map_err(|_| self.err(format!("`{t}` is not a number"))))
            .collect()
    }

    fn int(&self, t: &str) -> Result<usize> {
        t.parse().map_err(|_| self.err(format!("`{t}` is not a count")))
    }
}

fn parse_net(lines: &mut Lines, fields: &[&str]) -> Result<Mlp> {
    if fields.len() != 3 {
        return Err(lines.err("`net` needs a name, input dimension and layer count"));
    }
    let input_dim = lines.int(fields[1])?;
    let count = lines.int(fields[2])?;
    let mut fan_in = input_dim;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let f = lines.expect("layer")?;
        if f.len() != 2 {
            return Err(lines.err("`layer` needs a width and an activation"));
        }
        let width = lines.int(f[0])?;
        let act = Activation::parse(f[1]).ok_or_else(|| lines.err(format!("unknown activation `{}`", f[1])))?;
        let w = lines.numbers("weights", width * fan_in)?;
        let b = lines.numbers("bias", width)?;
        layers.push(Dense::new(Matrix::from_vec(width, fan_in, w)?, b, act)?);
        fan_in = width;
    }
    Ok(Mlp::from_layers(input_dim, layers)?)
}

pub fn model_from_str(text: &str) -> Result<CompositeSurrogate> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    match lines.next_fields() {
        Some(f) if f.join(" ") == MAGIC => {}
        _ => return Err(lines.err(format!("missing `{MAGIC}` header"))),
    }
    let v = lines.expect("variant")?;
    let variant = v
        .first()
        .and_then(|s| ModelVariant::parse(s))
        .ok_or_else(|| lines.err("unknown variant"))?;
    let omega = lines.numbers("omega", 1)?[0];
    let x_mean = lines.all_numbers("x_mean")?;
    let x_std = lines.numbers("x_std", x_mean.len())?;
    let yh = lines.numbers("y_high", 2)?;

    let mf = variant.is_multifidelity();
    let y_low = if mf {
        let yl = lines.numbers("y_low", 2)?;
        Some((yl[0], yl[1]))
    } else {
        None
    };
    let mut take = |name: &str| -> Result<Mlp> {
        let f = lines.expect("net")?;
        if f.first() != Some(&name) {
            return Err(lines.err(format!("expected network `{name}`")));
        }
        parse_net(&mut lines, &f)
    };
    let (low, linear) = if mf {
        (Some(take("low")?), Some(take("linear")?))
    } else {
        (None, None)
    };
    let nonlinear = take("nonlinear")?;
    let params = SurrogateParams {
        low,
        linear,
        nonlinear,
        omega,
    };
    let scalers = NormalizationScalers {
        x_mean,
        x_std,
        y_high: (yh[0], yh[1]),
        y_low,
    };
    Ok(CompositeSurrogate::from_parts(variant, params, scalers)?)
}

pub fn save_model(model: &CompositeSurrogate, path: &Path) -> Result<()> {
    fs::write(path, model_to_string(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<CompositeSurrogate> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_str(&text)
}

/// `(epoch, mean_loss)` rows, epochs counted from 1.
pub fn history_to_string(history: &[f64]) -> String {
    let mut out = String::from("epoch,mean_loss\n");
    for (i, l) in history.iter().enumerate() {
        let _ = writeln!(out, "{},{l:e}", i + 1);
    }
    out
}

pub fn save_history(history: &[f64], path: &Path) -> Result<()> {
    fs::write(path, history_to_string(history)).map_err(|e| Error::io(path, e))
}
