//! Closed-form sample-size planning for the conventional and hybrid-offset
//! designs.
//!
//! The hybrid-offset design collects `n_b` samples, annotates all of them
//! with the auxiliary annotator and a subset of `n_a` with the primary one.
//! Its estimator variance is
//!
//! ```text
//! var = (σ_p² − σ_b²) / n_b + (σ_a² + σ_b²) / n_a
//! ```
//!
//! and the functions below pick `(n_a, n_b)` to meet a precision target at
//! minimum total sampling cost, or to minimise the variance under a budget.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::correction::{self, ConfusionMatrix, ValueSpace};
use crate::error::{Error, Result};
use crate::model::{
    AnnotatorProfile, AnnotatorRole, CostModel, Design, PopulationModel, PrecisionTarget,
    SamplingPlan,
};

/// Relative slack allowed when checking a variance against `d²/ζ²`.
const VARIANCE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanningInputs {
    pub population: PopulationModel,
    pub primary: AnnotatorProfile,
    pub auxiliary: AnnotatorProfile,
    pub costs: CostModel,
    pub target: PrecisionTarget,
}

impl PlanningInputs {
    /// Annotation costs are taken from the two profiles; `collection_cost`
    /// is the per-sample cost of collecting.
    pub fn new(
        population: PopulationModel,
        primary: AnnotatorProfile,
        auxiliary: AnnotatorProfile,
        collection_cost: f64,
        target: PrecisionTarget,
    ) -> Result<Self> {
        if primary.role() != AnnotatorRole::Primary {
            return Err(Error::invalid("primary", "profile is not marked primary"));
        }
        let costs = CostModel::new(
            collection_cost,
            primary.cost_per_sample(),
            auxiliary.cost_per_sample(),
        )?;
        Ok(Self {
            population,
            primary,
            auxiliary,
            costs,
            target,
        })
    }

    /// Same inputs with different annotation and collection costs.
    pub fn with_costs(&self, costs: CostModel) -> Result<Self> {
        let primary = AnnotatorProfile::primary(self.primary.sigma(), costs.primary)?;
        let auxiliary = AnnotatorProfile::auxiliary(
            self.auxiliary.bias(),
            self.auxiliary.sigma(),
            costs.auxiliary,
        )?;
        Self::new(self.population, primary, auxiliary, costs.collection, self.target)
    }

    pub fn k(&self) -> f64 {
        self.costs.k()
    }

    pub fn k_prime(&self) -> f64 {
        self.costs.k_prime()
    }

    /// `σ_p² − σ_b²`, the share of the data variance the auxiliary
    /// annotator can explain. Nonpositive means a hybrid cannot help.
    pub fn offset_gain(&self) -> f64 {
        self.population.variance() - self.auxiliary.variance()
    }

    /// `σ_a² + σ_b²`, the variance of the paired offset.
    pub fn offset_noise(&self) -> f64 {
        self.primary.variance() + self.auxiliary.variance()
    }

    fn conventional_noise(&self) -> f64 {
        self.population.variance() + self.primary.variance()
    }
}

/// How real-valued sample sizes become integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RoundingPolicy {
    /// Round `n_b` then `n_a` half-up. May miss the precision target by a
    /// hair.
    Nearest,
    /// Round half-up, then grow `n_a` or `n_b` (whichever is cheaper) until
    /// the precision target holds.
    #[default]
    NearestWithRepair,
}

fn round_half_up(x: f64) -> u64 {
    (x + 0.5).floor().max(0.0) as u64
}

/// Ceiling that ignores floating-point fuzz just above an integer.
fn ceil_tolerant(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r.max(0.0) as u64
    } else {
        x.ceil().max(0.0) as u64
    }
}

pub(crate) fn floor_tolerant(x: f64) -> u64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r.max(0.0) as u64
    } else {
        x.floor().max(0.0) as u64
    }
}

fn meets_target(variance: f64, inputs: &PlanningInputs) -> bool {
    variance <= inputs.target.variance_budget() * (1.0 + VARIANCE_SLACK)
}

/// Real-valued conventional sample size `n_a* = ζ²(σ_p² + σ_a²)/d²`.
pub fn conventional_sample_size_raw(inputs: &PlanningInputs) -> f64 {
    inputs.target.size_factor() * inputs.conventional_noise()
}

/// Smallest integer sample size meeting the target, at least one.
pub fn conventional_sample_size(inputs: &PlanningInputs) -> u64 {
    ceil_tolerant(conventional_sample_size_raw(inputs)).max(1)
}

pub fn conventional_variance(n_a: u64, inputs: &PlanningInputs) -> Result<f64> {
    if n_a == 0 {
        return Err(Error::invalid("n_a", "must be at least 1"));
    }
    Ok(inputs.conventional_noise() / n_a as f64)
}

pub fn conventional_plan(inputs: &PlanningInputs) -> Result<SamplingPlan> {
    let n = conventional_sample_size(inputs);
    SamplingPlan::new(
        Design::Conventional,
        n,
        0,
        conventional_variance(n, inputs)?,
        &inputs.costs,
    )
}

/// Variance of the offset estimator. Valid for any `σ_b`; the first term
/// goes negative when `σ_b > σ_p`.
pub fn offset_variance(n_a: u64, n_b: u64, inputs: &PlanningInputs) -> Result<f64> {
    if n_a == 0 || n_b < n_a {
        return Err(Error::HybridOrder { n_a, n_b });
    }
    Ok(inputs.offset_gain() / n_b as f64 + inputs.offset_noise() / n_a as f64)
}

/// Primary annotations needed to hit the target with `n_b` auxiliary ones.
/// Real-valued; the caller rounds.
pub fn tradeoff_n_a(n_b: f64, inputs: &PlanningInputs) -> Result<f64> {
    let denom = inputs.target.variance_budget() - inputs.offset_gain() / n_b;
    if !(n_b > 0.0) || denom <= 0.0 {
        return Err(Error::AuxiliaryTooSmall { n_b });
    }
    Ok(inputs.offset_noise() / denom)
}

/// Hybrid-offset cost as a function of `n_b` alone, with `n_a` eliminated
/// through [`tradeoff_n_a`].
pub fn offset_cost_curve(n_b: f64, inputs: &PlanningInputs) -> Result<f64> {
    let c = &inputs.costs;
    let n_a = tradeoff_n_a(n_b, inputs)?;
    Ok((c.collection + c.auxiliary) * (n_b + inputs.k() * n_a))
}

pub fn tsc(plan: &SamplingPlan, costs: &CostModel) -> f64 {
    costs.total(plan.n_a, plan.n_b)
}

/// Real-valued cost-optimal `n_b`, before the `max` with `n_a*`. `None`
/// when the auxiliary annotator is no better than the data variance.
pub fn unconstrained_optimal_n_b(inputs: &PlanningInputs) -> Option<f64> {
    let gain = inputs.offset_gain();
    if gain <= 0.0 {
        return None;
    }
    let root = (inputs.k() * inputs.offset_noise() * gain).sqrt();
    Some(inputs.target.size_factor() * (gain + root))
}

/// Real-valued cost-optimal `n_b`, never below `n_a*`.
pub fn optimal_n_b(inputs: &PlanningInputs) -> Option<f64> {
    unconstrained_optimal_n_b(inputs).map(|n| n.max(conventional_sample_size_raw(inputs)))
}

pub fn optimal_offset_plan(inputs: &PlanningInputs) -> Result<SamplingPlan> {
    optimal_offset_plan_with(inputs, RoundingPolicy::default())
}

/// Cost-optimal hybrid-offset plan meeting the precision target.
///
/// Falls back to the conventional plan when `σ_b >= σ_p`. When collecting
/// extra samples does not pay off (`k <= σ_Δ` for `c_b = 0`) the plan
/// degenerates to `n_a = n_b = n_a*`.
pub fn optimal_offset_plan_with(
    inputs: &PlanningInputs,
    policy: RoundingPolicy,
) -> Result<SamplingPlan> {
    let gain = inputs.offset_gain();
    if gain <= 0.0 {
        return conventional_plan(inputs);
    }
    let noise = inputs.offset_noise();
    let costs = &inputs.costs;
    let budget = inputs.target.variance_budget();

    if noise == 0.0 {
        // error-free annotators: one paired sample pins the offset exactly
        let n_b = ceil_tolerant(inputs.target.size_factor() * gain).max(1);
        let var = offset_variance(1, n_b, inputs)?;
        return SamplingPlan::new(Design::HybridOffset, 1, n_b, var, costs);
    }

    let raw = unconstrained_optimal_n_b(inputs).expect("gain is positive");
    if raw <= conventional_sample_size_raw(inputs) {
        let n = conventional_sample_size(inputs);
        let var = offset_variance(n, n, inputs)?;
        return SamplingPlan::new(Design::HybridOffset, n, n, var, costs);
    }

    let mut n_b = round_half_up(raw).max(1);
    while budget - gain / n_b as f64 <= 0.0 {
        n_b += 1;
    }
    let mut n_a = round_half_up(tradeoff_n_a(n_b as f64, inputs)?).clamp(1, n_b);

    if policy == RoundingPolicy::NearestWithRepair
        && !meets_target(offset_variance(n_a, n_b, inputs)?, inputs)
    {
        (n_a, n_b) = repair(n_a, n_b, inputs)?;
    }
    let var = offset_variance(n_a, n_b, inputs)?;
    SamplingPlan::new(Design::HybridOffset, n_a, n_b, var, costs)
}

/// Cheapest of "more primary annotations" and "more collected samples" that
/// restores the precision target.
fn repair(n_a: u64, n_b: u64, inputs: &PlanningInputs) -> Result<(u64, u64)> {
    let budget = inputs.target.variance_budget();
    let gain = inputs.offset_gain();
    let noise = inputs.offset_noise();
    let mut candidates = Vec::with_capacity(2);

    let headroom = budget - gain / n_b as f64;
    if headroom > 0.0 {
        let mut a = ceil_tolerant(noise / headroom).max(n_a);
        while a <= n_b && !meets_target(offset_variance(a, n_b, inputs)?, inputs) {
            a += 1;
        }
        if a <= n_b {
            candidates.push((a, n_b));
        }
    }
    let headroom = budget - noise / n_a as f64;
    if headroom > 0.0 {
        let mut b = ceil_tolerant(gain / headroom).max(n_b);
        while !meets_target(offset_variance(n_a, b, inputs)?, inputs) {
            b += 1;
        }
        candidates.push((n_a, b));
    }

    let costs = &inputs.costs;
    candidates
        .into_iter()
        .min_by(|x, y| {
            costs
                .total(x.0, x.1)
                .total_cmp(&costs.total(y.0, y.1))
                .then(x.0.cmp(&y.0))
        })
        .map_or_else(
            || {
                let n = conventional_sample_size(inputs);
                Ok((n, n))
            },
            Ok,
        )
}

/// Relative cost above which the hybrid-offset design is cheaper when
/// `c_b = 0`: `σ_Δ = (σ_a² + σ_b²) / (σ_p² − σ_b²)`.
pub fn tsc_threshold(inputs: &PlanningInputs) -> Result<f64> {
    let gain = inputs.offset_gain();
    if gain <= 0.0 {
        return Err(Error::ThresholdUndefined {
            sigma_p: inputs.population.sigma_p(),
            sigma_b: inputs.auxiliary.sigma(),
        });
    }
    if inputs.costs.auxiliary != 0.0 {
        log::warn!("the sigma_delta threshold only decides the design when c_b = 0");
    }
    Ok(inputs.offset_noise() / gain)
}

/// Real-valued variance-minimising split of a budget, ignoring `n_b >= n_a`.
///
/// Algebraically this is `n_b = b / (C + √(c_a C σ_Δ))` with
/// `C = c_b + c_c`, which has no singularity at `c_a σ_Δ = C`.
pub fn budget_split(budget: f64, inputs: &PlanningInputs) -> Result<(f64, f64)> {
    let sigma_delta = tsc_threshold_quiet(inputs)?;
    let c = &inputs.costs;
    let per_aux = c.collection + c.auxiliary;
    let n_b = budget / (per_aux + (c.primary * per_aux * sigma_delta).sqrt());
    let n_a = if c.primary > 0.0 {
        (budget - per_aux * n_b) / c.primary
    } else {
        n_b
    };
    Ok((n_a, n_b))
}

fn tsc_threshold_quiet(inputs: &PlanningInputs) -> Result<f64> {
    let gain = inputs.offset_gain();
    if gain <= 0.0 {
        return Err(Error::ThresholdUndefined {
            sigma_p: inputs.population.sigma_p(),
            sigma_b: inputs.auxiliary.sigma(),
        });
    }
    Ok(inputs.offset_noise() / gain)
}

/// Variance-minimising integer hybrid-offset plan whose cost does not exceed
/// `budget`.
///
/// For a fixed `n_a` the best `n_b` spends the rest of the budget, so the
/// search runs over `n_a` only. Beyond a few million candidates it is
/// restricted to a window around the real-valued optimum.
pub fn plan_from_budget(budget: f64, inputs: &PlanningInputs) -> Result<SamplingPlan> {
    if !(budget.is_finite() && budget > 0.0) {
        return Err(Error::invalid("budget", format!("must be positive, got {budget}")));
    }
    let (cont_n_a, cont_n_b) = budget_split(budget, inputs)?;
    let c = &inputs.costs;
    let per_aux = c.collection + c.auxiliary;
    let max_n_a = floor_tolerant(budget / (c.primary + per_aux));
    if max_n_a == 0 {
        return Err(Error::InfeasibleBudget {
            budget,
            reason: format!(
                "one paired sample costs {}",
                c.primary + c.auxiliary + c.collection
            ),
        });
    }

    const FULL_SCAN: u64 = 4_000_000;
    const HALF_WINDOW: u64 = 1_000_000;
    let (lo, hi) = if max_n_a <= FULL_SCAN {
        (1, max_n_a)
    } else {
        let center = round_half_up(cont_n_a.min(cont_n_b)).clamp(1, max_n_a);
        (
            center.saturating_sub(HALF_WINDOW).max(1),
            (center + HALF_WINDOW).min(max_n_a),
        )
    };

    let gain = inputs.offset_gain();
    let noise = inputs.offset_noise();
    let mut best: Option<(f64, u64, u64)> = None;
    for n_a in lo..=hi {
        let n_b = floor_tolerant((budget - c.primary * n_a as f64) / per_aux);
        if n_b < n_a {
            continue;
        }
        let var = gain / n_b as f64 + noise / n_a as f64;
        if best.is_none_or(|(v, _, _)| var < v) {
            best = Some((var, n_a, n_b));
        }
    }
    let (var, n_a, n_b) = best.ok_or_else(|| Error::InfeasibleBudget {
        budget,
        reason: "no plan with n_b >= n_a >= 1 fits".into(),
    })?;
    SamplingPlan::new(Design::HybridOffset, n_a, n_b, var, c)
}

/// Largest conventional plan whose cost does not exceed `budget`.
pub fn conventional_plan_from_budget(budget: f64, inputs: &PlanningInputs) -> Result<SamplingPlan> {
    if !(budget.is_finite() && budget > 0.0) {
        return Err(Error::invalid("budget", format!("must be positive, got {budget}")));
    }
    let c = &inputs.costs;
    let unit = c.primary + c.collection;
    let n = if unit > 0.0 { floor_tolerant(budget / unit) } else { 0 };
    if n == 0 {
        return Err(Error::InfeasibleBudget {
            budget,
            reason: format!("one conventional sample costs {unit}"),
        });
    }
    SamplingPlan::new(Design::Conventional, n, 0, conventional_variance(n, inputs)?, c)
}

fn approx_eq(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Order plans by cost, then variance, then total number of annotations.
pub fn plan_order(x: &SamplingPlan, y: &SamplingPlan) -> Ordering {
    let by_cost = if approx_eq(x.tsc, y.tsc, 1e-9) {
        Ordering::Equal
    } else {
        x.tsc.total_cmp(&y.tsc)
    };
    let by_var = if approx_eq(x.predicted_variance, y.predicted_variance, 1e-9) {
        Ordering::Equal
    } else {
        x.predicted_variance.total_cmp(&y.predicted_variance)
    };
    by_cost
        .then(by_var)
        .then((x.n_a + x.n_b).cmp(&(y.n_a + y.n_b)))
}

/// Candidate plans meeting the precision target, cheapest first.
///
/// Always includes the conventional plan, adds the hybrid-offset plan when
/// `σ_b < σ_p`, and the auxiliary bias-corrected plan when a confusion
/// matrix is supplied (binary value space only).
pub fn compare_designs(
    inputs: &PlanningInputs,
    confusion: Option<(&ConfusionMatrix, ValueSpace)>,
) -> Result<Vec<SamplingPlan>> {
    let mut plans = vec![conventional_plan(inputs)?];
    if inputs.offset_gain() > 0.0 {
        plans.push(optimal_offset_plan(inputs)?);
    }
    if let Some((cm, space)) = confusion {
        plans.push(correction::auxiliary_plan(inputs, cm, space)?);
    }
    plans.sort_by(plan_order);
    Ok(plans)
}

/// Points `(n_b, n_a)` along the precision trade-off curve, starting at the
/// boundary `n_b = n_a = n_a*` and continuing over integer `n_b` up to
/// `max_n_b`.
pub fn tradeoff_curve(inputs: &PlanningInputs, max_n_b: u64) -> Vec<(f64, f64)> {
    let start = conventional_sample_size_raw(inputs);
    let mut points = vec![(start, start)];
    let first = floor_tolerant(start) + 1;
    for n_b in first..=max_n_b {
        if let Ok(n_a) = tradeoff_n_a(n_b as f64, inputs) {
            points.push((n_b as f64, n_a));
        }
    }
    points
}

/// Conventional and hybrid-offset costs at relative primary cost `k`,
/// holding `c_c` and `c_b` fixed.
pub fn costs_at_relative_cost(inputs: &PlanningInputs, k: f64) -> Result<(f64, f64)> {
    let c = inputs.costs;
    let scaled = CostModel::new(c.collection, k * (c.collection + c.auxiliary), c.auxiliary)?;
    let at_k = inputs.with_costs(scaled)?;
    let conventional = conventional_plan(&at_k)?.tsc;
    let hybrid = optimal_offset_plan(&at_k)?.tsc;
    Ok((conventional, hybrid))
}
