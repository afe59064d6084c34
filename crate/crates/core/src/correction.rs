//! Confusion-matrix abundance correction for binary auxiliary annotators.
//!
//! A binary classifier with sensitivity `α` and specificity `β` reports a
//! positive with probability `α` on a true positive and `1 − β` on a true
//! negative. Inverting that 2×2 matrix gives the per-sample correction
//! `ỹ = (v + β − 1) / (α + β − 1)`, unbiased for `y` when `α` and `β` are
//! the classifier's true rates on the sampled data.
//!
//! Everything that relies on the binary model takes a [`ValueSpace`] so that
//! applying it to real-valued data is an explicit caller decision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators;
use crate::model::{Design, PairedSampleSet, PrecisionTarget, SamplingPlan};
use crate::planner::PlanningInputs;

/// Smallest `α + β − 1` accepted before refusing to invert.
pub const MIN_DENOMINATOR: f64 = 1e-6;

/// Acknowledges (or not) that values are binary and the confusion matrix
/// holds on the sampled data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueSpace {
    Binary,
    RealValued,
}

impl ValueSpace {
    fn require_binary(self) -> Result<()> {
        match self {
            ValueSpace::Binary => Ok(()),
            ValueSpace::RealValued => Err(Error::RequiresBinarySpace),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub alpha: f64,
    pub beta: f64,
}

impl ConfusionMatrix {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        for (field, v) in [("alpha", alpha), ("beta", beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(field, format!("must lie in [0, 1], got {v}")));
            }
        }
        Ok(Self { alpha, beta })
    }

    pub fn perfect() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
        }
    }

    pub fn denominator(&self) -> f64 {
        self.alpha + self.beta - 1.0
    }

    pub fn is_invertible(&self) -> bool {
        self.denominator() >= MIN_DENOMINATOR
    }

    fn checked_denominator(&self) -> Result<f64> {
        let den = self.denominator();
        if den < MIN_DENOMINATOR {
            return Err(Error::NotInvertible { denominator: den });
        }
        Ok(den)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoStageConfig {
    s: u32,
    pub confusion: ConfusionMatrix,
}

impl TwoStageConfig {
    pub fn new(s: u32, confusion: ConfusionMatrix) -> Result<Self> {
        if s == 0 {
            return Err(Error::invalid("s", "need at least one point per sample"));
        }
        Ok(Self { s, confusion })
    }

    pub fn points_per_sample(&self) -> u32 {
        self.s
    }
}

/// Corrected value `(v + β − 1) / (α + β − 1)`. Not clamped.
pub fn abundance_correct(value: f64, cm: &ConfusionMatrix) -> Result<f64> {
    let den = cm.checked_denominator()?;
    Ok((value - (1.0 - cm.beta)) / den)
}

/// Mean of corrected auxiliary values.
pub fn bias_corrected_mean(aux_values: &[f64], cm: &ConfusionMatrix) -> Result<f64> {
    let den = cm.checked_denominator()?;
    let corrected: Vec<f64> = aux_values.iter().map(|v| (v - (1.0 - cm.beta)) / den).collect();
    estimators::mean(&corrected)
}

/// Variance added by the correction,
/// `(μ_p α(1−α) + (1−μ_p) β(1−β)) / (α+β−1)²`.
pub fn sigma_s_squared(mu_p: f64, cm: &ConfusionMatrix) -> Result<f64> {
    if !(0.0..=1.0).contains(&mu_p) {
        return Err(Error::invalid("mu_p", format!("must lie in [0, 1], got {mu_p}")));
    }
    let den = cm.checked_denominator()?;
    let (a, b) = (cm.alpha, cm.beta);
    Ok((mu_p * a * (1.0 - a) + (1.0 - mu_p) * (1.0 - b) * b) / (den * den))
}

fn known_mean(inputs: &PlanningInputs) -> Result<f64> {
    inputs.population.mu_p().ok_or(Error::Missing("mu_p"))
}

/// Samples needed by the auxiliary-only bias-corrected design,
/// `ζ²(σ_s² + σ_p²)/d²`, rounded up.
pub fn auxiliary_sample_size(
    inputs: &PlanningInputs,
    cm: &ConfusionMatrix,
    space: ValueSpace,
) -> Result<u64> {
    space.require_binary()?;
    let per_sample = sigma_s_squared(known_mean(inputs)?, cm)? + inputs.population.variance();
    Ok(size_for(per_sample, &inputs.target))
}

pub fn auxiliary_plan(
    inputs: &PlanningInputs,
    cm: &ConfusionMatrix,
    space: ValueSpace,
) -> Result<SamplingPlan> {
    let n_b = auxiliary_sample_size(inputs, cm, space)?;
    let per_sample = sigma_s_squared(known_mean(inputs)?, cm)? + inputs.population.variance();
    SamplingPlan::new(
        Design::AuxiliaryBiasCorrected,
        0,
        n_b,
        per_sample / n_b as f64,
        &inputs.costs,
    )
}

/// Right-hand side of `k' > (σ_p² + σ_s²) / (σ_p² + σ_a²)`: the auxiliary-only
/// design is cheaper than the conventional one exactly when `k'` exceeds it.
pub fn auxiliary_tsc_threshold(
    inputs: &PlanningInputs,
    cm: &ConfusionMatrix,
    space: ValueSpace,
) -> Result<f64> {
    space.require_binary()?;
    let conventional = inputs.population.variance() + inputs.primary.variance();
    if conventional == 0.0 {
        return Err(Error::invalid(
            "sigma_p",
            "sigma_p² + sigma_a² must be positive for the threshold",
        ));
    }
    let s2 = sigma_s_squared(known_mean(inputs)?, cm)?;
    Ok((inputs.population.variance() + s2) / conventional)
}

fn check_two_stage_moments(mu_p: f64, sigma_p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&mu_p) {
        return Err(Error::invalid("mu_p", format!("must lie in [0, 1], got {mu_p}")));
    }
    if !(sigma_p >= 0.0) || sigma_p * sigma_p > mu_p * (1.0 - mu_p) * (1.0 + 1e-12) {
        return Err(Error::invalid(
            "sigma_p",
            format!("need 0 <= sigma_p² <= mu_p(1 - mu_p), got sigma_p = {sigma_p}"),
        ));
    }
    Ok(())
}

/// Variance of one corrected first-stage value `ỹ_i` when each sample has
/// true cover `y_i` (mean `μ_p`, variance `σ_p²`) and `s` point labels drawn
/// as `Ber(y_i)` are classified through the confusion matrix:
///
/// ```text
/// var ỹ = (σ_s² + E[y(1−y)]) / s + σ_p²,   E[y(1−y)] = μ_p(1−μ_p) − σ_p²
/// ```
pub fn two_stage_unit_variance(mu_p: f64, sigma_p: f64, cfg: &TwoStageConfig) -> Result<f64> {
    check_two_stage_moments(mu_p, sigma_p)?;
    let s2 = sigma_s_squared(mu_p, &cfg.confusion)?;
    let var_p = sigma_p * sigma_p;
    let within = (mu_p * (1.0 - mu_p) - var_p).max(0.0);
    Ok((s2 + within) / cfg.s as f64 + var_p)
}

/// Variance of the two-stage bias-corrected mean over `n_b` samples.
pub fn two_stage_variance(
    mu_p: f64,
    sigma_p: f64,
    cfg: &TwoStageConfig,
    n_b: u64,
) -> Result<f64> {
    if n_b == 0 {
        return Err(Error::invalid("n_b", "must be at least 1"));
    }
    Ok(two_stage_unit_variance(mu_p, sigma_p, cfg)? / n_b as f64)
}

/// `(1/n_b)((σ_s² + μ_p(1−μ_p))/s + σ_p²)`: bounds [`two_stage_variance`]
/// from above by `σ_p² / (s n_b)`, since it takes `E[y(1−y)]` at its
/// largest value `μ_p(1−μ_p)`.
pub fn two_stage_variance_upper_bound(
    mu_p: f64,
    sigma_p: f64,
    cfg: &TwoStageConfig,
    n_b: u64,
) -> Result<f64> {
    check_two_stage_moments(mu_p, sigma_p)?;
    if n_b == 0 {
        return Err(Error::invalid("n_b", "must be at least 1"));
    }
    let s2 = sigma_s_squared(mu_p, &cfg.confusion)?;
    let unit = (s2 + mu_p * (1.0 - mu_p)) / cfg.s as f64 + sigma_p * sigma_p;
    Ok(unit / n_b as f64)
}

/// Two-stage sample size meeting the precision target, rounded up.
pub fn two_stage_sample_size(
    mu_p: f64,
    sigma_p: f64,
    cfg: &TwoStageConfig,
    target: &PrecisionTarget,
) -> Result<u64> {
    Ok(size_for(two_stage_unit_variance(mu_p, sigma_p, cfg)?, target))
}

/// Sample size from the [`two_stage_variance_upper_bound`] expression.
pub fn two_stage_sample_size_upper_bound(
    mu_p: f64,
    sigma_p: f64,
    cfg: &TwoStageConfig,
    target: &PrecisionTarget,
) -> Result<u64> {
    let unit = two_stage_variance_upper_bound(mu_p, sigma_p, cfg, 1)?;
    Ok(size_for(unit, target))
}

fn size_for(per_sample_variance: f64, target: &PrecisionTarget) -> u64 {
    let raw = target.size_factor() * per_sample_variance;
    let r = raw.round();
    let n = if (raw - r).abs() <= 1e-9 * raw.max(1.0) {
        r
    } else {
        raw.ceil()
    };
    (n as u64).max(1)
}

/// Sensitivity and specificity estimated from `(primary, aux)` label pairs.
pub fn estimate_confusion(paired_binary: &[(bool, bool)]) -> Result<ConfusionMatrix> {
    let (mut pos, mut true_pos, mut neg, mut true_neg) = (0usize, 0usize, 0usize, 0usize);
    for &(primary, aux) in paired_binary {
        if primary {
            pos += 1;
            true_pos += aux as usize;
        } else {
            neg += 1;
            true_neg += !aux as usize;
        }
    }
    if pos == 0 {
        return Err(Error::CannotEstimate {
            which: "sensitivity",
            label: 1,
        });
    }
    if neg == 0 {
        return Err(Error::CannotEstimate {
            which: "specificity",
            label: 0,
        });
    }
    Ok(ConfusionMatrix {
        alpha: true_pos as f64 / pos as f64,
        beta: true_neg as f64 / neg as f64,
    })
}

fn as_binary(values: &[f64], offset: usize) -> Result<Vec<bool>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v == 0.0 {
                Ok(false)
            } else if v == 1.0 {
                Ok(true)
            } else {
                Err(Error::NonBinary {
                    index: offset + i,
                    value: v,
                })
            }
        })
        .collect()
}

/// [`estimate_confusion`] on the paired prefix of a binary sample set.
pub fn estimate_confusion_from(samples: &PairedSampleSet) -> Result<ConfusionMatrix> {
    let primary = as_binary(samples.primary(), 0)?;
    let aux = as_binary(samples.paired_aux(), 0)?;
    let pairs: Vec<(bool, bool)> = primary.into_iter().zip(aux).collect();
    estimate_confusion(&pairs)
}

/// Primary labels on the paired prefix plus corrected auxiliary labels on
/// the rest, averaged over all `n_b` samples. Biased when `cm_hat` is itself
/// estimated from the prefix.
pub fn hybrid_bias_corrected_mean(
    samples: &PairedSampleSet,
    cm_hat: &ConfusionMatrix,
) -> Result<f64> {
    if samples.n_b() == 0 {
        return Err(Error::NoSamples);
    }
    as_binary(samples.primary(), 0)?;
    as_binary(samples.aux(), 0)?;
    let den = cm_hat.checked_denominator()?;
    let paired: f64 = samples.primary().iter().sum();
    let corrected: f64 = samples
        .unpaired_aux()
        .iter()
        .map(|v| (v - (1.0 - cm_hat.beta)) / den)
        .sum();
    Ok((paired + corrected) / samples.n_b() as f64)
}
