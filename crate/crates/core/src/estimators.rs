//! Point estimators of the population mean.
//!
//! None of these clamp their output to `[0, 1]`: the offset estimator in
//! particular can step slightly outside the value space and clamping would
//! bias it.

use crate::error::{Error, Result};
use crate::model::PairedSampleSet;

pub(crate) fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::NoSamples);
    }
    Ok(crate::sum::pairwise_sum(values) / values.len() as f64)
}

/// Mean of primary annotations.
pub fn conventional_mean(primary_values: &[f64]) -> Result<f64> {
    mean(primary_values)
}

/// Auxiliary mean minus the offset estimated on the paired prefix.
pub fn offset_mean(samples: &PairedSampleSet) -> Result<f64> {
    if samples.n_a() == 0 {
        return Err(Error::NoPairedSamples);
    }
    let aux_mean = mean(samples.aux())?;
    let offset = mean(samples.paired_aux())? - mean(samples.primary())?;
    Ok(aux_mean - offset)
}

/// Ratio `Σ f_a / Σ f_b` on the paired prefix, `1` when either sum is zero.
pub fn ratio_estimate(samples: &PairedSampleSet) -> Result<f64> {
    if samples.n_a() == 0 {
        return Err(Error::NoPairedSamples);
    }
    let num = crate::sum::pairwise_sum(samples.primary());
    let den = crate::sum::pairwise_sum(samples.paired_aux());
    Ok(if num == 0.0 || den == 0.0 { 1.0 } else { num / den })
}

/// Ratio estimator: auxiliary mean scaled by [`ratio_estimate`].
pub fn ratio_mean(samples: &PairedSampleSet) -> Result<f64> {
    Ok(ratio_estimate(samples)? * mean(samples.aux())?)
}

/// Mean of auxiliary annotations only. Biased by the auxiliary offset.
pub fn auxiliary_mean(aux_values: &[f64]) -> Result<f64> {
    mean(aux_values)
}

/// Fraction of positive point labels in one sample.
pub fn aggregate_points(point_labels: &[u8]) -> Result<f64> {
    if point_labels.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut ones = 0usize;
    for (index, &label) in point_labels.iter().enumerate() {
        match label {
            0 => {}
            1 => ones += 1,
            other => {
                return Err(Error::NonBinary {
                    index,
                    value: other as f64,
                })
            }
        }
    }
    Ok(ones as f64 / point_labels.len() as f64)
}
