use serde::Serialize;

use crate::error::{Error, Result};
use crate::sum::pairwise_sum;

/// Quality of a set of replicate estimates against a known truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub bias: f64,
    pub mae: f64,
    pub mse: f64,
    /// Sample standard deviation of the estimates (`n − 1` denominator).
    pub sd: f64,
    /// Standard error of the mean estimate, `sd / √replicates`.
    pub se: f64,
    pub replicates: usize,
}

pub fn metrics(estimates: &[f64], truth: f64) -> Result<Metrics> {
    if estimates.is_empty() {
        return Err(Error::NoSamples);
    }
    let n = estimates.len() as f64;
    let errors: Vec<f64> = estimates.iter().map(|e| e - truth).collect();
    let bias = pairwise_sum(&errors) / n;
    let abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    let mae = pairwise_sum(&abs) / n;
    let centered: Vec<f64> = errors.iter().map(|e| (e - bias) * (e - bias)).collect();
    let ss = pairwise_sum(&centered);
    // mean squared error as bias² plus the population variance keeps
    // mse >= bias² exact in floating point
    let mse = bias * bias + ss / n;
    let sd = if estimates.len() > 1 {
        (ss / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(Metrics {
        bias,
        mae,
        mse,
        sd,
        se: sd / n.sqrt(),
        replicates: estimates.len(),
    })
}

/// Approximate standard error of a sample standard deviation under
/// normality, `sd / √(2(n − 1))`.
pub fn sd_standard_error(sd: f64, replicates: usize) -> f64 {
    if replicates < 2 {
        return f64::NAN;
    }
    sd / (2.0 * (replicates as f64 - 1.0)).sqrt()
}

/// Sample variance and the standard error of that variance estimate,
/// using the sample fourth central moment.
pub fn variance_with_se(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 4 {
        return Err(Error::invalid("values", "need at least four values"));
    }
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let d2: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let d4: Vec<f64> = d2.iter().map(|v| v * v).collect();
    let m2 = pairwise_sum(&d2) / n;
    let m4 = pairwise_sum(&d4) / n;
    let var = m2 * n / (n - 1.0);
    let se = ((m4 - m2 * m2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt();
    Ok((var, se))
}
