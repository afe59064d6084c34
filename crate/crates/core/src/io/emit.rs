//! Plot-ready output files. Every number is written with 12 significant
//! digits.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::error::Result;
use crate::model::SamplingPlan;
use crate::planner::PlanningInputs;
use crate::sim::{CellOutcome, ComparisonCell, SimulationReport};

pub const PLAN_FILE: &str = "plan.json";
pub const TRADEOFF_FILE: &str = "tradeoff.csv";
pub const TSC_DIFF_FILE: &str = "tsc_diff.csv";
pub const SIMULATION_FILE: &str = "simulation.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const ESTIMATE_FILE: &str = "estimate.json";

/// `x` rounded to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

/// Shortest decimal text of [`round12`]`(x)`.
pub fn fmt12(x: f64) -> String {
    round12(x).to_string()
}

fn round_json(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(x) = n.as_f64() {
                if let Some(r) = serde_json::Number::from_f64(round12(x)) {
                    *n = r;
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_json),
        Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

/// Writes `value` as pretty JSON with floats rounded to 12 digits.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut v = serde_json::to_value(value)?;
    round_json(&mut v);
    let mut text = serde_json::to_string_pretty(&v)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn prepare(outdir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(outdir)?;
    Ok(outdir.join(name))
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    /// `(σ_a² + σ_b²)/(σ_p² − σ_b²)`; absent when `σ_b ≥ σ_p`.
    pub sigma_delta: Option<f64>,
    pub k: f64,
    pub k_prime: f64,
    pub zeta: f64,
    pub variance_budget: f64,
    pub conventional_n_raw: f64,
    pub optimal_n_b_raw: Option<f64>,
    pub auxiliary_tsc_threshold: Option<f64>,
    pub two_stage_n_b: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum PlanOrReason {
    Plan(SamplingPlan),
    Infeasible { infeasible: String },
}

impl From<crate::error::Result<SamplingPlan>> for PlanOrReason {
    fn from(r: crate::error::Result<SamplingPlan>) -> Self {
        match r {
            Ok(p) => PlanOrReason::Plan(p),
            Err(e) => PlanOrReason::Infeasible {
                infeasible: e.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BudgetPlans {
    pub budget: f64,
    pub conventional: PlanOrReason,
    pub hybrid_offset: PlanOrReason,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlanReport {
    pub inputs: PlanningInputs,
    /// Cheapest candidate meeting the precision target.
    pub chosen: SamplingPlan,
    pub candidates: Vec<SamplingPlan>,
    pub diagnostics: Diagnostics,
    pub budgets: Vec<BudgetPlans>,
}

pub fn write_plan(outdir: &Path, report: &PlanReport) -> Result<PathBuf> {
    let path = prepare(outdir, PLAN_FILE)?;
    write_json(&path, report)?;
    Ok(path)
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `(n_b, n_a)` points along the precision trade-off curve.
pub fn write_tradeoff(outdir: &Path, points: &[(f64, f64)]) -> Result<PathBuf> {
    let path = prepare(outdir, TRADEOFF_FILE)?;
    write_rows(
        &path,
        &["n_b", "n_a"],
        points.iter().map(|(b, a)| vec![fmt12(*b), fmt12(*a)]),
    )?;
    Ok(path)
}

/// `(k, conventional TSC, hybrid TSC)` rows; the difference column is
/// conventional minus hybrid.
pub fn write_tsc_diff(outdir: &Path, rows: &[(f64, f64, f64)]) -> Result<PathBuf> {
    let path = prepare(outdir, TSC_DIFF_FILE)?;
    write_rows(
        &path,
        &["k", "tsc_conventional", "tsc_hybrid_offset", "difference"],
        rows.iter()
            .map(|(k, c, h)| vec![fmt12(*k), fmt12(*c), fmt12(*h), fmt12(c - h)]),
    )?;
    Ok(path)
}

pub fn write_simulation(outdir: &Path, report: &SimulationReport) -> Result<PathBuf> {
    let path = prepare(outdir, SIMULATION_FILE)?;
    let rows = report.cells.iter().map(|c| {
        let mut row = vec![c.design.name().to_string(), fmt12(c.budget), c.n_a.to_string(), c.n_b.to_string()];
        match &c.outcome {
            CellOutcome::Completed(m) => {
                row.extend([fmt12(m.bias), fmt12(m.mae), fmt12(m.mse), fmt12(m.se)]);
                row.extend([m.replicates.to_string(), c.dropped.to_string(), "ok".into()]);
            }
            CellOutcome::Infeasible { .. } => {
                row.extend(["", "", "", "", "0"].map(String::from));
                row.extend([c.dropped.to_string(), "infeasible".into()]);
            }
        }
        row
    });
    write_rows(
        &path,
        &["design", "budget", "n_a", "n_b", "bias", "mae", "mse", "se", "replicates", "dropped", "status"],
        rows,
    )?;
    Ok(path)
}

pub fn write_comparison(outdir: &Path, cells: &[ComparisonCell]) -> Result<PathBuf> {
    let path = prepare(outdir, COMPARISON_FILE)?;
    let opt = |x: Option<f64>| x.map(fmt12).unwrap_or_default();
    let rows = cells.iter().map(|c| {
        vec![
            fmt12(c.alpha),
            fmt12(c.beta),
            fmt12(c.mu_p),
            c.n_a.to_string(),
            c.n_b.to_string(),
            opt(c.offset.map(|m| m.sd)),
            opt(c.bias_corrected.map(|m| m.sd)),
            opt(c.sd_difference),
            opt(c.sd_difference_se),
            opt(c.offset.map(|m| m.bias)),
            opt(c.bias_corrected.map(|m| m.bias)),
            c.dropped.to_string(),
            c.replicates.to_string(),
        ]
    });
    write_rows(
        &path,
        &[
            "alpha",
            "beta",
            "mu_p",
            "n_a",
            "n_b",
            "sd_offset",
            "sd_bias_corrected",
            "sd_difference",
            "sd_difference_se",
            "bias_offset",
            "bias_bias_corrected",
            "dropped",
            "replicates",
        ],
        rows,
    )?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(fmt12(0.1), "0.1");
        assert_eq!(fmt12(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt12(2.0 / 3.0), "0.666666666667");
        assert_eq!(fmt12(123_456_789.123_456_78), "123456789.123");
        assert_eq!(fmt12(0.0), "0");
        assert_eq!(fmt12(-1e-20 / 3.0), "-0.00000000000000000000333333333333");
        assert_eq!(fmt12(53.0), "53");
    }

    #[test]
    fn json_floats_are_rounded() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        write_json(&p, &serde_json::json!({"a": 1.0 / 3.0, "n": 5, "v": [2.0 / 3.0]})).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("0.333333333333") && !text.contains("0.3333333333333"));
        assert!(text.contains("\"n\": 5"));
    }
}
