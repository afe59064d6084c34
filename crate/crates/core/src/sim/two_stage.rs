//! Two-stage sampling: each collected sample is summarised by `s` point
//! labels from a binary classifier and then corrected.

use rand_distr::{Beta, Binomial, Distribution};
use rayon::prelude::*;

use crate::correction::{self, TwoStageConfig};
use crate::error::{Error, Result};

use super::rng::replicate_rng;

const TWO_STAGE_STREAM: u64 = 0x7473_7467;

/// Replicate estimates of the two-stage bias-corrected mean. Each replicate
/// draws `n_b` true covers from a Beta with mean `mu_p` and sd `sigma_p`,
/// classifies `s` random points per sample (a point is positive with
/// probability `y`) and averages the corrected fractions.
pub fn two_stage_estimates(
    mu_p: f64,
    sigma_p: f64,
    cfg: &TwoStageConfig,
    n_b: usize,
    replicates: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_b == 0 || replicates == 0 {
        return Err(Error::invalid("n_b", "sample size and replicates must be positive"));
    }
    if !(0.0 < mu_p && mu_p < 1.0) || !(sigma_p > 0.0) || sigma_p * sigma_p >= mu_p * (1.0 - mu_p) {
        return Err(Error::invalid(
            "sigma_p",
            "need 0 < mu_p < 1 and 0 < sigma_p² < mu_p(1 - mu_p)",
        ));
    }
    let cm = cfg.confusion;
    // fail early on a singular matrix
    correction::abundance_correct(0.0, &cm)?;
    let spread = mu_p * (1.0 - mu_p) / (sigma_p * sigma_p) - 1.0;
    let cover = Beta::new(mu_p * spread, (1.0 - mu_p) * spread)
        .map_err(|e| Error::invalid("sigma_p", e.to_string()))?;
    let s = cfg.points_per_sample() as u64;

    (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, TWO_STAGE_STREAM, r);
            let values: Vec<f64> = (0..n_b)
                .map(|_| {
                    let y: f64 = cover.sample(&mut rng);
                    let p = (y * cm.alpha + (1.0 - y) * (1.0 - cm.beta)).clamp(0.0, 1.0);
                    let positives = Binomial::new(s, p).expect("p in [0, 1]").sample(&mut rng);
                    positives as f64 / s as f64
                })
                .collect();
            correction::bias_corrected_mean(&values, &cm)
        })
        .collect()
}
