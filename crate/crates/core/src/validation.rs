//! Coefficient of determination and its spread over repeated datasets.

use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// `1 − SS_res / SS_tot`; negative for models worse than the mean predictor.
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::shape("r_squared predictions", y_true.len(), y_pred.len()));
    }
    if y_true.len() < 2 {
        return Err(Error::data("r_squared needs at least two samples"));
    }
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (t, p) in y_true.iter().zip(y_pred) {
        ss_res += (t - p) * (t - p);
        ss_tot += (t - mean) * (t - mean);
    }
    if ss_tot.is_nan() || ss_tot <= 0.0 {
        return Err(Error::data("r_squared is undefined for a constant target"));
    }
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean and population standard deviation.
pub fn aggregate(r2_values: &[f64]) -> Result<(f64, f64)> {
    if r2_values.is_empty() {
        return Err(Error::data("aggregate needs at least one value"));
    }
    let n = r2_values.len() as f64;
    let mu = r2_values.iter().sum::<f64>() / n;
    let var = r2_values.iter().map(|r| (r - mu) * (r - mu)).sum::<f64>() / n;
    Ok((mu, math::sqrt(var)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub r2_values: Vec<f64>,
    pub mu_r2: f64,
    pub sigma_r2: f64,
    pub n_t: usize,
    /// Test-set size.
    pub n_test: usize,
}

impl ValidationReport {
    pub fn new(r2_values: Vec<f64>, n_test: usize) -> Result<Self> {
        let (mu_r2, sigma_r2) = aggregate(&r2_values)?;
        Ok(ValidationReport {
            n_t: r2_values.len(),
            r2_values,
            mu_r2,
            sigma_r2,
            n_test,
        })
    }
}
