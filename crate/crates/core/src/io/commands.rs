//! The `plan`, `estimate` and `simulate` commands.

use std::path::PathBuf;

use serde::Serialize;

use crate::correction::{self, ConfusionMatrix, TwoStageConfig, ValueSpace};
use crate::error::{Error, Result};
use crate::estimators;
use crate::model::{Design, PairedSampleSet, SamplingPlan};
use crate::planner::{self, PlanningInputs};
use crate::sim::{
    self, BernoulliGrid, PoolBootstrapConfig, PoolMoments, PopulationShape, SyntheticAnnotatorSpec,
};

use super::config::{Command, Protocol, RunConfig};
use super::emit::{self, BudgetPlans, Diagnostics, PlanReport};
use super::ingest;

/// What a command produced.
#[derive(Debug, Clone, Default)]
pub struct Summary {
    pub files: Vec<PathBuf>,
    /// Human-readable result lines for stdout.
    pub lines: Vec<String>,
    /// Budgets or designs that could not be satisfied. A nonempty list
    /// maps to the "infeasible" exit status.
    pub infeasible: Vec<String>,
}

pub fn run(config: &RunConfig) -> Result<Summary> {
    match config.command {
        Command::Plan => plan(config),
        Command::Estimate => estimate(config),
        Command::Simulate => simulate(config),
    }
}

fn value_space(config: &RunConfig) -> ValueSpace {
    if config.binary {
        ValueSpace::Binary
    } else {
        ValueSpace::RealValued
    }
}

fn candidates(config: &RunConfig, inputs: &PlanningInputs) -> Result<Vec<SamplingPlan>> {
    let confusion = config.confusion()?;
    let wanted = |d: Design| config.designs.is_empty() || config.designs.contains(&d);
    for d in &config.designs {
        let plannable = matches!(
            d,
            Design::Conventional | Design::HybridOffset | Design::AuxiliaryBiasCorrected
        );
        if !plannable {
            return Err(Error::UnsupportedDesign(format!("no sample-size rule for {d}")));
        }
    }
    let mut plans = Vec::new();
    if wanted(Design::Conventional) {
        plans.push(planner::conventional_plan(inputs)?);
    }
    if wanted(Design::HybridOffset) {
        if inputs.offset_gain() > 0.0 {
            plans.push(planner::optimal_offset_plan_with(inputs, config.rounding)?);
        } else if !config.designs.is_empty() {
            return Err(Error::ThresholdUndefined {
                sigma_p: inputs.population.sigma_p(),
                sigma_b: inputs.auxiliary.sigma(),
            });
        }
    }
    match confusion {
        Some(cm) if wanted(Design::AuxiliaryBiasCorrected) => {
            plans.push(correction::auxiliary_plan(inputs, &cm, value_space(config))?);
        }
        None if config.designs.contains(&Design::AuxiliaryBiasCorrected) => {
            return Err(Error::Missing("alpha"));
        }
        _ => {}
    }
    plans.sort_by(planner::plan_order);
    Ok(plans)
}

fn plan(config: &RunConfig) -> Result<Summary> {
    let inputs = config.planning_inputs()?;
    let plans = candidates(config, &inputs)?;
    let chosen = *plans.first().ok_or(Error::Missing("design"))?;

    let gain = inputs.offset_gain();
    let cm = config.confusion()?;
    let space = value_space(config);
    let two_stage_n_b = match (config.points, cm, config.single_mu_p()?) {
        (Some(s), Some(cm), Some(mu)) => Some(correction::two_stage_sample_size(
            mu,
            inputs.population.sigma_p(),
            &TwoStageConfig::new(s, cm)?,
            &inputs.target,
        )?),
        _ => None,
    };
    let diagnostics = Diagnostics {
        sigma_delta: (gain > 0.0).then(|| inputs.offset_noise() / gain),
        k: inputs.k(),
        k_prime: inputs.k_prime(),
        zeta: inputs.target.zeta(),
        variance_budget: inputs.target.variance_budget(),
        conventional_n_raw: planner::conventional_sample_size_raw(&inputs),
        optimal_n_b_raw: planner::optimal_n_b(&inputs),
        auxiliary_tsc_threshold: match cm {
            Some(cm) => Some(correction::auxiliary_tsc_threshold(&inputs, &cm, space)?),
            None => None,
        },
        two_stage_n_b,
    };

    let mut summary = Summary::default();
    for p in &plans {
        let mark = if *p == chosen { "*" } else { " " };
        summary.lines.push(format!(
            "{mark} {}: n_a = {} n_b = {} tsc = {} variance = {}",
            p.design,
            p.n_a,
            p.n_b,
            emit::fmt12(p.tsc),
            emit::fmt12(p.predicted_variance)
        ));
    }
    let mut budgets = Vec::new();
    for &b in &config.budgets {
        let conventional = planner::conventional_plan_from_budget(b, &inputs);
        let hybrid = planner::plan_from_budget(b, &inputs);
        let any_ok = conventional.is_ok() || hybrid.is_ok();
        if !any_ok {
            summary.infeasible.push(format!("budget {b}: no plan fits"));
        }
        for (label, plan) in [("conventional", &conventional), ("hybrid-offset", &hybrid)] {
            match plan {
                Ok(p) => summary.lines.push(format!(
                    "budget {b}: {label} n_a = {} n_b = {} variance = {}",
                    p.n_a,
                    p.n_b,
                    emit::fmt12(p.predicted_variance)
                )),
                Err(e) => summary.lines.push(format!("budget {b}: {label} infeasible ({e})")),
            }
        }
        budgets.push(BudgetPlans {
            budget: b,
            conventional: conventional.into(),
            hybrid_offset: hybrid.into(),
        });
    }

    let report = PlanReport {
        inputs,
        chosen,
        candidates: plans.clone(),
        diagnostics,
        budgets,
    };
    summary.files.push(emit::write_plan(&config.outdir, &report)?);

    let n_star = planner::conventional_sample_size_raw(&inputs);
    let hybrid_n_b = plans
        .iter()
        .find(|p| p.design == Design::HybridOffset)
        .map_or(0, |p| p.n_b);
    let max_n_b = (2 * hybrid_n_b).max((4.0 * n_star).ceil() as u64).min(100_000);
    let curve = planner::tradeoff_curve(&inputs, max_n_b);
    summary.files.push(emit::write_tradeoff(&config.outdir, &curve)?);

    let mut diff = Vec::with_capacity(200);
    for k in 1..=200 {
        let (c, h) = planner::costs_at_relative_cost(&inputs, k as f64)?;
        diff.push((k as f64, c, h));
    }
    summary.files.push(emit::write_tsc_diff(&config.outdir, &diff)?);

    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
struct EstimateRow {
    design: Design,
    estimate: f64,
    clamped: bool,
}

#[derive(Debug, Clone, Serialize)]
struct EstimateReport {
    input: PathBuf,
    n_a: usize,
    n_b: usize,
    confusion: Option<ConfusionMatrix>,
    estimates: Vec<EstimateRow>,
}

fn is_binary(values: &[f64]) -> bool {
    values.iter().all(|&v| v == 0.0 || v == 1.0)
}

fn estimate_one(
    design: Design,
    samples: &PairedSampleSet,
    cm: Option<ConfusionMatrix>,
    space: ValueSpace,
) -> Result<f64> {
    let require_binary = || match space {
        ValueSpace::Binary => Ok(()),
        ValueSpace::RealValued => Err(Error::RequiresBinarySpace),
    };
    match design {
        Design::Conventional => estimators::conventional_mean(samples.primary()),
        Design::HybridOffset => estimators::offset_mean(samples),
        Design::HybridRatio => estimators::ratio_mean(samples),
        Design::Auxiliary => estimators::auxiliary_mean(samples.aux()),
        Design::AuxiliaryBiasCorrected => {
            require_binary()?;
            let cm = cm.ok_or(Error::Missing("alpha"))?;
            correction::bias_corrected_mean(samples.aux(), &cm)
        }
        Design::HybridBiasCorrected => {
            require_binary()?;
            let cm = match cm {
                Some(cm) => cm,
                None => correction::estimate_confusion_from(samples)?,
            };
            correction::hybrid_bias_corrected_mean(samples, &cm)
        }
    }
}

fn estimate(config: &RunConfig) -> Result<Summary> {
    let input = config.input.clone().ok_or(Error::Missing("input"))?;
    let table = ingest::ingest_any(&input)?;
    let samples = &table.samples;
    let cm = config.confusion()?;
    let space = value_space(config);

    let designs: Vec<Design> = if config.designs.is_empty() {
        let paired = samples.n_a() > 0;
        let binary = config.binary && is_binary(samples.aux()) && is_binary(samples.primary());
        Design::ALL
            .into_iter()
            .filter(|d| match d {
                Design::Conventional | Design::HybridOffset | Design::HybridRatio => paired,
                Design::Auxiliary => true,
                Design::AuxiliaryBiasCorrected => config.binary && cm.is_some(),
                Design::HybridBiasCorrected => paired && binary,
            })
            .collect()
    } else {
        config.designs.clone()
    };

    let mut rows = Vec::new();
    let mut summary = Summary::default();
    for design in designs {
        let raw = estimate_one(design, samples, cm, space)?;
        let value = if config.clamp { raw.clamp(0.0, 1.0) } else { raw };
        summary.lines.push(format!("{design}\t{}", emit::fmt12(value)));
        rows.push(EstimateRow {
            design,
            estimate: value,
            clamped: value != raw,
        });
    }
    let report = EstimateReport {
        input,
        n_a: samples.n_a(),
        n_b: samples.n_b(),
        confusion: cm,
        estimates: rows,
    };
    std::fs::create_dir_all(&config.outdir)?;
    let path = config.outdir.join(emit::ESTIMATE_FILE);
    emit::write_json(&path, &report)?;
    summary.files.push(path);
    Ok(summary)
}

fn synthetic_pool(config: &RunConfig) -> Result<PairedSampleSet> {
    let mu = config.single_mu_p()?.ok_or(Error::Missing("mu-p"))?;
    let sigma_p = config.sigma_p.ok_or(Error::Missing("sigma-p"))?;
    let sigma_b = config.sigma_b.ok_or(Error::Missing("sigma-b"))?;
    let y = sim::generate_population(mu, sigma_p, config.pool_size, PopulationShape::Beta, config.seed)?;
    let spec = SyntheticAnnotatorSpec::additive(config.aux_bias, sigma_b)?
        .with_correlation(config.correlation)?
        .clamped();
    let aux = sim::apply_annotator(&y, &spec, config.seed)?;
    PairedSampleSet::new(aux, y)
}

fn simulate(config: &RunConfig) -> Result<Summary> {
    let mut summary = Summary::default();
    match config.protocol {
        Protocol::Pool => {
            let pool = match &config.input {
                Some(p) => ingest::ingest_any(p)?.samples,
                None => synthetic_pool(config)?,
            };
            let confusion = config.confusion()?;
            let designs = if config.designs.is_empty() {
                let mut d = vec![
                    Design::Conventional,
                    Design::HybridOffset,
                    Design::HybridRatio,
                    Design::Auxiliary,
                ];
                if confusion.is_some() && config.binary {
                    d.push(Design::AuxiliaryBiasCorrected);
                }
                d
            } else {
                config.designs.clone()
            };
            let mut cfg = PoolBootstrapConfig::new(designs, config.budgets.clone(), config.cost_model()?);
            cfg.seed = config.seed;
            if let Some(r) = config.replicates {
                cfg.replicates = r;
            }
            cfg.confusion = confusion;
            if let (Some(sigma_p), Some(sigma_b)) = (config.sigma_p, config.sigma_b) {
                cfg.moments = Some(PoolMoments {
                    sigma_p,
                    sigma_a: config.sigma_a,
                    sigma_b,
                });
            }
            let report = sim::run_pool_bootstrap(&pool, &cfg)?;
            for c in &report.cells {
                match c.metrics() {
                    Some(m) => summary.lines.push(format!(
                        "{} budget {}: bias = {} mae = {} (n_a = {}, n_b = {})",
                        c.design,
                        emit::fmt12(c.budget),
                        emit::fmt12(m.bias),
                        emit::fmt12(m.mae),
                        c.n_a,
                        c.n_b
                    )),
                    None => summary
                        .lines
                        .push(format!("{} budget {}: infeasible", c.design, emit::fmt12(c.budget))),
                }
            }
            summary.files.push(emit::write_simulation(&config.outdir, &report)?);
        }
        Protocol::Bernoulli => {
            let mut grid = BernoulliGrid::reference();
            if !config.alpha.is_empty() {
                grid.alphas = config.alpha.clone();
            }
            if !config.beta.is_empty() {
                grid.betas = config.beta.clone();
            }
            if !config.mu_p.is_empty() {
                grid.mus = config.mu_p.clone();
            }
            if !config.n_a.is_empty() {
                grid.n_as = config.n_a.clone();
            }
            if let Some(n_b) = config.n_b {
                grid.n_b = n_b;
            }
            if let Some(r) = config.replicates {
                grid.replicates = r;
            }
            grid.seed = config.seed;
            let cells = sim::run_bernoulli_comparison(&grid)?;
            let negative = cells
                .iter()
                .filter(|c| c.sd_difference.is_some_and(|d| d <= 0.0))
                .count();
            summary.lines.push(format!(
                "offset sd <= bias-corrected sd in {negative} of {} cells",
                cells.len()
            ));
            summary.files.push(emit::write_comparison(&config.outdir, &cells)?);
        }
    }
    Ok(summary)
}
