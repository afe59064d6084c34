//! Resampling a fully annotated pool at fixed budgets.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::correction::{self, ConfusionMatrix};
use crate::error::{Error, Result};
use crate::estimators;
use crate::model::{
    AnnotatorProfile, CostModel, Design, PairedSampleSet, PopulationModel, PrecisionTarget,
};
use crate::planner::{self, floor_tolerant, PlanningInputs};
use crate::sum::pairwise_sum;

use super::metrics::{metrics, Metrics};
use super::rng::replicate_rng;

pub const DEFAULT_POOL_REPLICATES: usize = 500;

/// Standard deviations used to split a budget between the two annotators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoolMoments {
    pub sigma_p: f64,
    pub sigma_a: f64,
    pub sigma_b: f64,
}

impl PoolMoments {
    /// Pool standard deviation of the primary values and of the auxiliary
    /// error `aux − primary`. The primary annotator is taken as exact.
    pub fn estimate(pool: &PairedSampleSet) -> Result<Self> {
        if pool.n_a() == 0 {
            return Err(Error::NoPairedSamples);
        }
        let errors: Vec<f64> = pool
            .paired_aux()
            .iter()
            .zip(pool.primary())
            .map(|(b, a)| b - a)
            .collect();
        Ok(Self {
            sigma_p: population_sd(pool.primary()),
            sigma_a: 0.0,
            sigma_b: population_sd(&errors),
        })
    }
}

pub(crate) fn population_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    (pairwise_sum(&sq) / n).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolBootstrapConfig {
    pub designs: Vec<Design>,
    pub budgets: Vec<f64>,
    pub costs: CostModel,
    pub replicates: usize,
    pub seed: u64,
    /// Overrides [`PoolMoments::estimate`] when splitting hybrid budgets.
    pub moments: Option<PoolMoments>,
    /// Required by the auxiliary bias-corrected design.
    pub confusion: Option<ConfusionMatrix>,
}

impl PoolBootstrapConfig {
    pub fn new(designs: Vec<Design>, budgets: Vec<f64>, costs: CostModel) -> Self {
        Self {
            designs,
            budgets,
            costs,
            replicates: DEFAULT_POOL_REPLICATES,
            seed: 0,
            moments: None,
            confusion: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum CellOutcome {
    Completed(Metrics),
    Infeasible { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationCell {
    pub design: Design,
    pub budget: f64,
    pub n_a: u64,
    pub n_b: u64,
    pub outcome: CellOutcome,
    /// Replicates without a usable estimate (degenerate estimated confusion
    /// matrix).
    pub dropped: usize,
}

impl SimulationCell {
    pub fn metrics(&self) -> Option<&Metrics> {
        match &self.outcome {
            CellOutcome::Completed(m) => Some(m),
            CellOutcome::Infeasible { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    /// Mean of the pool's primary annotations.
    pub truth: f64,
    pub moments: PoolMoments,
    pub cells: Vec<SimulationCell>,
}

impl SimulationReport {
    pub fn cell(&self, design: Design, budget: f64) -> Option<&SimulationCell> {
        self.cells
            .iter()
            .find(|c| c.design == design && c.budget == budget)
    }
}

fn is_binary(values: &[f64]) -> bool {
    values.iter().all(|&v| v == 0.0 || v == 1.0)
}

fn validate(pool: &PairedSampleSet, config: &PoolBootstrapConfig) -> Result<()> {
    if pool.n_b() == 0 {
        return Err(Error::NoSamples);
    }
    if pool.n_a() != pool.n_b() {
        return Err(Error::invalid(
            "pool",
            format!(
                "every pool sample needs a primary annotation ({} of {} have one)",
                pool.n_a(),
                pool.n_b()
            ),
        ));
    }
    if config.replicates == 0 {
        return Err(Error::invalid("replicates", "must be at least 1"));
    }
    if config.designs.is_empty() {
        return Err(Error::invalid("design", "no designs to simulate"));
    }
    if let Some(b) = config.budgets.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
        return Err(Error::invalid("budget", format!("must be positive, got {b}")));
    }
    if config.budgets.is_empty() {
        return Err(Error::invalid("budget", "no budgets to simulate"));
    }
    for design in &config.designs {
        match design {
            Design::AuxiliaryBiasCorrected if config.confusion.is_none() => {
                return Err(Error::Missing("confusion matrix (alpha and beta)"));
            }
            Design::HybridBiasCorrected if !(is_binary(pool.aux()) && is_binary(pool.primary())) => {
                return Err(Error::UnsupportedDesign(
                    "hybrid-bias-corrected needs a pool of binary values".into(),
                ));
            }
            _ => {}
        }
    }
    Ok(())
}

fn split_inputs(moments: &PoolMoments, costs: &CostModel) -> Result<PlanningInputs> {
    // the precision target plays no part in a budget split
    PlanningInputs::new(
        PopulationModel::new(moments.sigma_p)?,
        AnnotatorProfile::primary(moments.sigma_a, costs.primary)?,
        AnnotatorProfile::auxiliary(0.0, moments.sigma_b, costs.auxiliary)?,
        costs.collection,
        PrecisionTarget::new(1.0, 0.05)?,
    )
}

fn per_sample_count(budget: f64, unit: f64) -> Result<u64> {
    let n = floor_tolerant(budget / unit);
    if n == 0 {
        return Err(Error::InfeasibleBudget {
            budget,
            reason: format!("one sample costs {unit}"),
        });
    }
    Ok(n)
}

/// `(n_a, n_b)` a design can afford.
pub fn sizes_for_budget(
    design: Design,
    budget: f64,
    costs: &CostModel,
    moments: &PoolMoments,
) -> Result<(u64, u64)> {
    match design {
        Design::Conventional => {
            let n = per_sample_count(budget, costs.primary + costs.collection)?;
            Ok((n, n))
        }
        Design::Auxiliary | Design::AuxiliaryBiasCorrected => {
            Ok((0, per_sample_count(budget, costs.collection + costs.auxiliary)?))
        }
        Design::HybridOffset | Design::HybridRatio | Design::HybridBiasCorrected => {
            let plan = planner::plan_from_budget(budget, &split_inputs(moments, costs)?)?;
            Ok((plan.n_a, plan.n_b))
        }
    }
}

fn design_index(design: Design) -> u64 {
    Design::ALL.iter().position(|d| *d == design).unwrap_or(0) as u64
}

/// Stream key for a cell, stable when other designs or budgets are added.
fn cell_key(design: Design, budget: f64) -> u64 {
    (design_index(design) << 56) ^ budget.to_bits()
}

/// One resampled estimate. `None` when the estimator cannot be evaluated
/// on this draw.
fn replicate_estimate(
    pool: &PairedSampleSet,
    design: Design,
    n_a: usize,
    n_b: usize,
    confusion: Option<&ConfusionMatrix>,
    rng: &mut impl Rng,
) -> Result<Option<f64>> {
    let size = pool.n_b();
    let idx: Vec<usize> = (0..n_b).map(|_| rng.random_range(0..size)).collect();
    let aux: Vec<f64> = idx.iter().map(|&i| pool.aux()[i]).collect();
    let primary: Vec<f64> = idx[..n_a].iter().map(|&i| pool.primary()[i]).collect();
    let estimate = match design {
        Design::Conventional => estimators::conventional_mean(&primary)?,
        Design::Auxiliary => estimators::auxiliary_mean(&aux)?,
        Design::AuxiliaryBiasCorrected => {
            let cm = confusion.ok_or(Error::Missing("confusion matrix (alpha and beta)"))?;
            correction::bias_corrected_mean(&aux, cm)?
        }
        Design::HybridOffset => estimators::offset_mean(&PairedSampleSet::new(aux, primary)?)?,
        Design::HybridRatio => estimators::ratio_mean(&PairedSampleSet::new(aux, primary)?)?,
        Design::HybridBiasCorrected => {
            let samples = PairedSampleSet::new(aux, primary)?;
            let cm = match correction::estimate_confusion_from(&samples) {
                Ok(cm) if cm.is_invertible() => cm,
                Ok(_) | Err(Error::CannotEstimate { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            correction::hybrid_bias_corrected_mean(&samples, &cm)?
        }
    };
    Ok(Some(estimate))
}

/// Bias, MAE and MSE of each design at each budget, resampling the pool
/// with replacement. The truth is the mean of the pool's primary values.
/// Cells a design cannot afford are reported as infeasible.
pub fn run_pool_bootstrap(
    pool: &PairedSampleSet,
    config: &PoolBootstrapConfig,
) -> Result<SimulationReport> {
    validate(pool, config)?;
    let truth = estimators::conventional_mean(pool.primary())?;
    let moments = match config.moments {
        Some(m) => m,
        None => PoolMoments::estimate(pool)?,
    };

    let mut cells = Vec::with_capacity(config.designs.len() * config.budgets.len());
    for &design in &config.designs {
        for &budget in &config.budgets {
            let (n_a, n_b) = match sizes_for_budget(design, budget, &config.costs, &moments) {
                Ok(sizes) => sizes,
                Err(e) if e.is_infeasible() => {
                    log::debug!("{design} at budget {budget}: {e}");
                    cells.push(SimulationCell {
                        design,
                        budget,
                        n_a: 0,
                        n_b: 0,
                        outcome: CellOutcome::Infeasible {
                            reason: e.to_string(),
                        },
                        dropped: 0,
                    });
                    continue;
                }
                Err(e) => return Err(e),
            };
            let key = cell_key(design, budget);
            let estimates: Vec<Option<f64>> = (0..config.replicates as u64)
                .into_par_iter()
                .map(|r| {
                    let mut rng = replicate_rng(config.seed, key, r);
                    replicate_estimate(
                        pool,
                        design,
                        n_a as usize,
                        n_b as usize,
                        config.confusion.as_ref(),
                        &mut rng,
                    )
                })
                .collect::<Result<_>>()?;
            let kept: Vec<f64> = estimates.iter().flatten().copied().collect();
            let dropped = estimates.len() - kept.len();
            let outcome = if kept.is_empty() {
                CellOutcome::Infeasible {
                    reason: "every replicate was degenerate".into(),
                }
            } else {
                CellOutcome::Completed(metrics(&kept, truth)?)
            };
            cells.push(SimulationCell {
                design,
                budget,
                n_a,
                n_b,
                outcome,
                dropped,
            });
        }
    }
    Ok(SimulationReport {
        truth,
        moments,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::generate::{apply_annotator, generate_population, PopulationShape, SyntheticAnnotatorSpec};

    fn synthetic_pool(n: usize, bias: f64, sigma_b: f64, seed: u64) -> PairedSampleSet {
        let y = generate_population(0.3, 0.16, n, PopulationShape::Beta, seed).unwrap();
        let spec = SyntheticAnnotatorSpec::additive(bias, sigma_b).unwrap().clamped();
        let aux = apply_annotator(&y, &spec, seed + 1).unwrap();
        PairedSampleSet::new(aux, y).unwrap()
    }

    fn minutes() -> CostModel {
        CostModel::new(1.0, 10.0, 0.0).unwrap()
    }

    #[test]
    fn sizes_follow_costs() {
        let m = PoolMoments {
            sigma_p: 0.16,
            sigma_a: 0.0,
            sigma_b: 0.047,
        };
        let c = minutes();
        assert_eq!(sizes_for_budget(Design::Conventional, 440.0, &c, &m).unwrap(), (40, 40));
        assert_eq!(sizes_for_budget(Design::Auxiliary, 440.0, &c, &m).unwrap(), (0, 440));
        let (n_a, n_b) = sizes_for_budget(Design::HybridOffset, 440.0, &c, &m).unwrap();
        assert!(10.0 * n_a as f64 + n_b as f64 <= 440.0);
        assert!(n_a >= 1 && n_b >= n_a);
        assert!(sizes_for_budget(Design::Conventional, 5.0, &c, &m)
            .unwrap_err()
            .is_infeasible());
    }

    #[test]
    fn report_is_reproducible() {
        let pool = synthetic_pool(200, 0.05, 0.047, 1);
        let mut cfg = PoolBootstrapConfig::new(
            vec![Design::Conventional, Design::HybridOffset, Design::Auxiliary],
            vec![60.0, 300.0],
            minutes(),
        );
        cfg.replicates = 1;
        cfg.seed = 42;
        assert_eq!(run_pool_bootstrap(&pool, &cfg).unwrap(), run_pool_bootstrap(&pool, &cfg).unwrap());
        cfg.replicates = 50;
        let a = run_pool_bootstrap(&pool, &cfg).unwrap();
        cfg.seed = 43;
        assert_ne!(a, run_pool_bootstrap(&pool, &cfg).unwrap());
    }

    #[test]
    fn infeasible_cells_are_reported() {
        let pool = synthetic_pool(50, 0.0, 0.02, 2);
        let mut cfg = PoolBootstrapConfig::new(
            vec![Design::Conventional, Design::HybridOffset],
            vec![8.0, 200.0],
            minutes(),
        );
        cfg.replicates = 10;
        let r = run_pool_bootstrap(&pool, &cfg).unwrap();
        assert!(r.cell(Design::Conventional, 8.0).unwrap().metrics().is_none());
        assert!(r.cell(Design::HybridOffset, 8.0).unwrap().metrics().is_none());
        assert!(r.cell(Design::Conventional, 200.0).unwrap().metrics().is_some());
    }

    #[test]
    fn truth_is_pool_primary_mean() {
        let pool = synthetic_pool(40, 0.0, 0.02, 3);
        let mut cfg = PoolBootstrapConfig::new(vec![Design::Conventional], vec![110.0], minutes());
        cfg.replicates = 5;
        let r = run_pool_bootstrap(&pool, &cfg).unwrap();
        assert_eq!(r.truth, estimators::conventional_mean(pool.primary()).unwrap());
    }

    #[test]
    fn rejects_partial_pool_and_missing_confusion() {
        let partial = PairedSampleSet::new(vec![0.1, 0.2, 0.3], vec![0.1]).unwrap();
        let cfg = PoolBootstrapConfig::new(vec![Design::Conventional], vec![100.0], minutes());
        assert!(run_pool_bootstrap(&partial, &cfg).is_err());

        let pool = synthetic_pool(20, 0.0, 0.02, 4);
        let cfg = PoolBootstrapConfig::new(vec![Design::AuxiliaryBiasCorrected], vec![100.0], minutes());
        assert!(matches!(run_pool_bootstrap(&pool, &cfg), Err(Error::Missing(_))));
        let cfg = PoolBootstrapConfig::new(vec![Design::HybridBiasCorrected], vec![100.0], minutes());
        assert!(matches!(run_pool_bootstrap(&pool, &cfg), Err(Error::UnsupportedDesign(_))));
    }

    #[test]
    fn perfect_auxiliary_helps_offset() {
        let y = generate_population(0.3, 0.16, 300, PopulationShape::Beta, 5).unwrap();
        let pool = PairedSampleSet::new(y.clone(), y).unwrap();
        let mut cfg = PoolBootstrapConfig::new(
            vec![Design::Conventional, Design::HybridOffset],
            vec![220.0],
            minutes(),
        );
        cfg.replicates = 400;
        let r = run_pool_bootstrap(&pool, &cfg).unwrap();
        let conv = r.cell(Design::Conventional, 220.0).unwrap().metrics().unwrap().mae;
        let hyb = r.cell(Design::HybridOffset, 220.0).unwrap().metrics().unwrap().mae;
        assert!(hyb <= conv, "{hyb} > {conv}");
    }

    #[test]
    fn binary_pool_runs_bias_corrected_designs() {
        let y = generate_population(0.4, 0.24f64.sqrt(), 400, PopulationShape::Bernoulli, 6).unwrap();
        let cm = ConfusionMatrix::new(0.85, 0.9).unwrap();
        let aux = apply_annotator(&y, &SyntheticAnnotatorSpec::confusion(cm), 7).unwrap();
        let pool = PairedSampleSet::new(aux, y).unwrap();
        let mut cfg = PoolBootstrapConfig::new(
            vec![Design::AuxiliaryBiasCorrected, Design::HybridBiasCorrected],
            vec![300.0],
            minutes(),
        );
        cfg.confusion = Some(cm);
        cfg.replicates = 50;
        let r = run_pool_bootstrap(&pool, &cfg).unwrap();
        assert!(r.cells.iter().all(|c| c.metrics().is_some()));
    }
}
