//! Delimited-text dataset files.
//!
//! One header row `x_1..x_D,y,dy_1..dy_D,fidelity`, then one sample per row.
//! The fidelity tag is `high`, `low` or `test`. Numbers carry 17 significant
//! digits, so a write/read cycle is exact. A block stored without gradients
//! leaves the `dy_*` fields empty on every one of its rows.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use gemfnn_core::datagen::{FidelityBlock, MultiFidelityDataset};
use gemfnn_core::Matrix;

use crate::{Error, Result};

const TAGS: [&str; 3] = ["high", "low", "test"];

fn header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=dim).map(|k| format!("x_{k}")).collect();
    h.push("y".into());
    h.extend((1..=dim).map(|k| format!("dy_{k}")));
    h.push("fidelity".into());
    h
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_dataset<W: Write>(data: &MultiFidelityDataset, out: W) -> Result<()> {
    let dim = data.dim();
    let mut w = csv::Writer::from_writer(out);
    let fail = |e: csv::Error| Error::data(format!("writing dataset: {e}"));
    w.write_record(header(dim)).map_err(fail)?;
    let blocks = [Some(&data.high), data.low.as_ref(), data.test.as_ref()];
    for (tag, block) in TAGS.iter().zip(blocks) {
        let Some(block) = block else { continue };
        for i in 0..block.len() {
            let mut rec: Vec<String> = block.x.row(i).iter().map(|&v| num(v)).collect();
            rec.push(num(block.y[i]));
            match &block.grad {
                Some(g) => rec.extend(g.row(i).iter().map(|&v| num(v))),
                None => rec.extend(std::iter::repeat_n(String::new(), dim)),
            }
            rec.push((*tag).into());
            w.write_record(&rec).map_err(fail)?;
        }
    }
    w.flush().map_err(|e| Error::data(format!("writing dataset: {e}")))
}

#[derive(Default)]
struct BlockRows {
    x: Vec<f64>,
    y: Vec<f64>,
    grad: Vec<f64>,
    with_grad: Option<bool>,
}

impl BlockRows {
    fn finish(self, dim: usize, tag: &str) -> Result<Option<FidelityBlock>> {
        if self.y.is_empty() {
            return Ok(None);
        }
        let n = self.y.len();
        let x = Matrix::from_vec(n, dim, self.x)?;
        let grad = match self.with_grad {
            Some(true) => Some(Matrix::from_vec(n, dim, self.grad)?),
            _ => None,
        };
        FidelityBlock::new(x, self.y, grad)
            .map(Some)
            .map_err(|e| Error::data(format!("{tag} block: {e}")))
    }
}

pub fn read_dataset<R: Read>(input: R) -> Result<MultiFidelityDataset> {
    let mut r = csv::Reader::from_reader(input);
    let head = r
        .headers()
        .map_err(|e| Error::data(format!("dataset header: {e}")))?
        .clone();
    if head.len() < 4 || (head.len() - 2) % 2 != 0 {
        return Err(Error::data(format!("dataset header has {} columns", head.len())));
    }
    let dim = (head.len() - 2) / 2;
    let expected = header(dim);
    if head.iter().zip(&expected).any(|(a, b)| a.trim() != b) {
        return Err(Error::data(format!(
            "dataset header must read {}",
            expected.join(",")
        )));
    }

    let mut blocks: [BlockRows; 3] = Default::default();
    for (line, rec) in r.records().enumerate() {
        let row = line + 2;
        let rec = rec.map_err(|e| Error::data(format!("dataset row {row}: {e}")))?;
        let tag = rec[2 * dim + 1].trim();
        let slot = TAGS
            .iter()
            .position(|t| *t == tag)
            .ok_or_else(|| Error::data(format!("dataset row {row}: unknown fidelity tag `{tag}`")))?;
        let field = |j: usize| -> Result<f64> {
            rec[j]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::data(format!("dataset row {row}, column {}: not a number", head[j].trim())))
        };
        let b = &mut blocks[slot];
        for j in 0..dim {
            b.x.push(field(j)?);
        }
        b.y.push(field(dim)?);
        let blank = (dim + 1..=2 * dim).all(|j| rec[j].trim().is_empty());
        match b.with_grad {
            Some(g) if g == blank => {
                return Err(Error::data(format!(
                    "dataset row {row}: {tag} rows mix present and absent gradients"
                )))
            }
            _ => b.with_grad = Some(!blank),
        }
        if !blank {
            for j in dim + 1..=2 * dim {
                b.grad.push(field(j)?);
            }
        }
    }

    let [high, low, test] = blocks;
    let high = high
        .finish(dim, "high")?
        .ok_or_else(|| Error::data("dataset has no high-fidelity rows"))?;
    Ok(MultiFidelityDataset {
        high,
        low: low.finish(dim, "low")?,
        test: test.finish(dim, "test")?,
    })
}

pub fn save_dataset(data: &MultiFidelityDataset, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset(data, std::io::BufWriter::new(f))
}

pub fn load_dataset(path: &Path) -> Result<MultiFidelityDataset> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(std::io::BufReader::new(f))
}
