//! Synthetic populations and synthetic annotators.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::correction::ConfusionMatrix;
use crate::error::{Error, Result};
use crate::normal::standard_normal_quantile;
use crate::sum::pairwise_sum;

use super::rng::replicate_rng;

const POPULATION_STREAM: u64 = 0x0070_6f70;
const ANNOTATOR_STREAM: u64 = 0x0061_6e6e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PopulationShape {
    /// Beta distribution fitted by the method of moments.
    Beta,
    /// 0/1 values; `σ_p²` must equal `μ_p(1 − μ_p)`.
    Bernoulli,
    /// Normal restricted to `[0, 1]`, with location and scale solved so the
    /// truncated moments match.
    TruncatedGaussian,
}

fn check_moments(mu: f64, sigma: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::invalid("mu_p", format!("must lie in [0, 1], got {mu}")));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid("sigma_p", format!("must be nonnegative, got {sigma}")));
    }
    if sigma * sigma > mu * (1.0 - mu) * (1.0 + 1e-12) {
        return Err(Error::invalid(
            "sigma_p",
            format!("sigma_p² = {} exceeds mu_p(1 - mu_p) = {}", sigma * sigma, mu * (1.0 - mu)),
        ));
    }
    Ok(())
}

/// `n` i.i.d. values in `[0, 1]` with mean `mu` and standard deviation
/// `sigma`.
pub fn generate_population(
    mu: f64,
    sigma: f64,
    n: usize,
    shape: PopulationShape,
    seed: u64,
) -> Result<Vec<f64>> {
    check_moments(mu, sigma)?;
    let mut rng = replicate_rng(seed, POPULATION_STREAM, 0);
    if sigma == 0.0 && shape != PopulationShape::Bernoulli {
        return Ok(vec![mu; n]);
    }
    match shape {
        PopulationShape::Beta => {
            let spread = mu * (1.0 - mu) / (sigma * sigma) - 1.0;
            if spread <= 0.0 {
                return Err(Error::invalid(
                    "sigma_p",
                    "a Beta shape needs sigma_p² < mu_p(1 - mu_p); use the Bernoulli shape",
                ));
            }
            let beta = Beta::new(mu * spread, (1.0 - mu) * spread)
                .map_err(|e| Error::invalid("sigma_p", e.to_string()))?;
            Ok((0..n).map(|_| beta.sample(&mut rng)).collect())
        }
        PopulationShape::Bernoulli => {
            if (sigma * sigma - mu * (1.0 - mu)).abs() > 1e-9 {
                return Err(Error::invalid(
                    "sigma_p",
                    format!("Bernoulli({mu}) has sigma_p = {}", (mu * (1.0 - mu)).sqrt()),
                ));
            }
            Ok((0..n)
                .map(|_| if rng.random_bool(mu) { 1.0 } else { 0.0 })
                .collect())
        }
        PopulationShape::TruncatedGaussian => {
            let t = TruncatedNormal::matching(mu, sigma)?;
            Ok((0..n).map(|_| t.sample(rng.random::<f64>())).collect())
        }
    }
}

/// Normal(`m`, `s`) restricted to `[0, 1]`.
#[derive(Debug, Clone, Copy)]
struct TruncatedNormal {
    m: f64,
    s: f64,
}

fn std_normal() -> Normal {
    Normal::standard()
}

impl TruncatedNormal {
    fn bounds(&self) -> (f64, f64) {
        ((0.0 - self.m) / self.s, (1.0 - self.m) / self.s)
    }

    /// Probability mass inside `[0, 1]`, computed from the tail closer to
    /// the interval to avoid cancellation.
    fn mass(&self) -> f64 {
        let n = std_normal();
        let (a, b) = self.bounds();
        if a > 0.0 {
            n.cdf(-a) - n.cdf(-b)
        } else {
            n.cdf(b) - n.cdf(a)
        }
    }

    fn moments(&self) -> (f64, f64) {
        let n = std_normal();
        let (a, b) = self.bounds();
        let z = self.mass();
        let (pa, pb) = (n.pdf(a), n.pdf(b));
        let r = (pa - pb) / z;
        let mean = self.m + self.s * r;
        let var = self.s * self.s * (1.0 + (a * pa - b * pb) / z - r * r);
        (mean, var)
    }

    fn matching(mu: f64, sigma: f64) -> Result<Self> {
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::invalid(
                "mu_p",
                "a truncated Gaussian needs 0 < mu_p < 1 when sigma_p > 0",
            ));
        }
        let target = (mu, sigma * sigma);
        let residual = |m: f64, ln_s: f64| {
            let (mean, var) = TruncatedNormal { m, s: ln_s.exp() }.moments();
            ((mean - target.0) / sigma, (var - target.1) / target.1)
        };
        let norm = |r: (f64, f64)| r.0.hypot(r.1);

        let (mut m, mut ln_s) = (mu, sigma.ln());
        let mut r = residual(m, ln_s);
        for _ in 0..200 {
            if norm(r) < 1e-11 {
                return Ok(TruncatedNormal { m, s: ln_s.exp() });
            }
            let h = 1e-6;
            let rm = residual(m + h * sigma, ln_s);
            let rs = residual(m, ln_s + h);
            let j = [
                [(rm.0 - r.0) / (h * sigma), (rs.0 - r.0) / h],
                [(rm.1 - r.1) / (h * sigma), (rs.1 - r.1) / h],
            ];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if !det.is_finite() || det == 0.0 {
                break;
            }
            let dm = (r.0 * j[1][1] - r.1 * j[0][1]) / det;
            let ds = (j[0][0] * r.1 - j[1][0] * r.0) / det;
            let mut step = 1.0;
            loop {
                let (m2, s2) = (m - step * dm, ln_s - step * ds);
                let r2 = residual(m2, s2);
                if r2.0.is_finite() && r2.1.is_finite() && norm(r2) < norm(r) {
                    m = m2;
                    ln_s = s2;
                    r = r2;
                    break;
                }
                step *= 0.5;
                if step < 1e-8 {
                    return Err(not_attainable(mu, sigma));
                }
            }
        }
        if norm(r) < 1e-9 {
            return Ok(TruncatedNormal { m, s: ln_s.exp() });
        }
        Err(not_attainable(mu, sigma))
    }

    /// Inverse-CDF draw from a uniform `u` in `[0, 1)`.
    fn sample(&self, u: f64) -> f64 {
        let n = std_normal();
        let (a, _) = self.bounds();
        let z = self.mass();
        let x = if a > 0.0 {
            let upper = n.cdf(-a) - u * z;
            -standard_normal_quantile(upper)
        } else {
            standard_normal_quantile(n.cdf(a) + u * z)
        };
        (self.m + self.s * x).clamp(0.0, 1.0)
    }
}

fn not_attainable(mu: f64, sigma: f64) -> Error {
    Error::invalid(
        "sigma_p",
        format!("mean {mu} and sd {sigma} are not attainable by a truncated Gaussian on [0, 1]"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AnnotatorKind {
    /// `f_b = y + ε` with `E[ε] = bias` and `sd(ε) = sigma`.
    AdditiveNoise { bias: f64, sigma: f64 },
    /// Binary labels flipped according to the confusion matrix.
    ConfusionBernoulli(ConfusionMatrix),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAnnotatorSpec {
    pub kind: AnnotatorKind,
    correlation: f64,
    clamp: bool,
}

impl SyntheticAnnotatorSpec {
    pub fn additive(bias: f64, sigma: f64) -> Result<Self> {
        if !bias.is_finite() {
            return Err(Error::invalid("bias", "must be finite"));
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::invalid("sigma_b", format!("must be nonnegative, got {sigma}")));
        }
        Ok(Self {
            kind: AnnotatorKind::AdditiveNoise { bias, sigma },
            correlation: 0.0,
            clamp: false,
        })
    }

    pub fn confusion(cm: ConfusionMatrix) -> Self {
        Self {
            kind: AnnotatorKind::ConfusionBernoulli(cm),
            correlation: 0.0,
            clamp: false,
        }
    }

    /// Correlation between the additive error and the true value.
    pub fn with_correlation(mut self, rho: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::invalid("correlation", format!("must lie in [-1, 1], got {rho}")));
        }
        self.correlation = rho;
        Ok(self)
    }

    /// Clamp additive-noise outputs into `[0, 1]`. This shifts the realised
    /// error moments slightly near the boundaries.
    pub fn clamped(mut self) -> Self {
        self.clamp = true;
        self
    }

    pub fn correlation(&self) -> f64 {
        self.correlation
    }
}

/// Auxiliary annotations for `values` under `spec`.
pub fn apply_annotator(values: &[f64], spec: &SyntheticAnnotatorSpec, seed: u64) -> Result<Vec<f64>> {
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
        return Err(Error::invalid("values", format!("value {v} at index {i} is outside [0, 1]")));
    }
    let mut rng = replicate_rng(seed, ANNOTATOR_STREAM, 0);
    match spec.kind {
        AnnotatorKind::AdditiveNoise { bias, sigma } => {
            let rho = spec.correlation;
            let (mean, sd) = if values.is_empty() {
                (0.0, 0.0)
            } else {
                let n = values.len() as f64;
                let mean = pairwise_sum(values) / n;
                let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
                (mean, (pairwise_sum(&sq) / n).sqrt())
            };
            let free = (1.0 - rho * rho).sqrt();
            Ok(values
                .iter()
                .map(|&y| {
                    let zy = if sd > 0.0 { (y - mean) / sd } else { 0.0 };
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let out = y + bias + sigma * (rho * zy + free * z);
                    if spec.clamp {
                        out.clamp(0.0, 1.0)
                    } else {
                        out
                    }
                })
                .collect())
        }
        AnnotatorKind::ConfusionBernoulli(cm) => values
            .iter()
            .enumerate()
            .map(|(index, &y)| {
                let p = if y == 1.0 {
                    cm.alpha
                } else if y == 0.0 {
                    1.0 - cm.beta
                } else {
                    return Err(Error::NonBinary { index, value: y });
                };
                Ok(if rng.random_bool(p) { 1.0 } else { 0.0 })
            })
            .collect(),
    }
}
