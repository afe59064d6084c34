//! Domain types shared by the planner, the estimators and the simulator.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::two_sided_critical_value;

fn check_finite(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite, got {value}")))
    }
}

fn check_nonnegative(field: &'static str, value: f64) -> Result<()> {
    check_finite(field, value)?;
    if value < 0.0 {
        return Err(Error::invalid(field, format!("must be nonnegative, got {value}")));
    }
    Ok(())
}

fn check_unit(field: &'static str, value: f64) -> Result<()> {
    check_finite(field, value)?;
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::invalid(field, format!("must lie in [0, 1], got {value}")));
    }
    Ok(())
}

/// First and second moments of the sampled values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationModel {
    mu_p: Option<f64>,
    sigma_p: f64,
}

impl PopulationModel {
    pub fn new(sigma_p: f64) -> Result<Self> {
        check_nonnegative("sigma_p", sigma_p)?;
        Ok(Self { mu_p: None, sigma_p })
    }

    /// Population with a known mean. For values in `[0, 1]` the variance can
    /// not exceed `mu_p (1 - mu_p)`.
    pub fn with_mean(mu_p: f64, sigma_p: f64) -> Result<Self> {
        check_unit("mu_p", mu_p)?;
        check_nonnegative("sigma_p", sigma_p)?;
        let cap = mu_p * (1.0 - mu_p);
        if sigma_p * sigma_p > cap * (1.0 + 1e-12) {
            return Err(Error::invalid(
                "sigma_p",
                format!("variance {} exceeds mu_p(1 - mu_p) = {cap}", sigma_p * sigma_p),
            ));
        }
        Ok(Self {
            mu_p: Some(mu_p),
            sigma_p,
        })
    }

    pub fn mu_p(&self) -> Option<f64> {
        self.mu_p
    }

    pub fn sigma_p(&self) -> f64 {
        self.sigma_p
    }

    pub fn variance(&self) -> f64 {
        self.sigma_p * self.sigma_p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotatorRole {
    Primary,
    Auxiliary,
}

/// Error moments and per-sample cost of one annotator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    role: AnnotatorRole,
    bias: f64,
    sigma: f64,
    cost_per_sample: f64,
}

impl AnnotatorProfile {
    pub fn new(role: AnnotatorRole, bias: f64, sigma: f64, cost_per_sample: f64) -> Result<Self> {
        check_finite("bias", bias)?;
        check_nonnegative("sigma", sigma)?;
        check_nonnegative("cost_per_sample", cost_per_sample)?;
        if role == AnnotatorRole::Primary && bias != 0.0 {
            return Err(Error::invalid("bias", "the primary annotator must be unbiased"));
        }
        Ok(Self {
            role,
            bias,
            sigma,
            cost_per_sample,
        })
    }

    pub fn primary(sigma: f64, cost_per_sample: f64) -> Result<Self> {
        Self::new(AnnotatorRole::Primary, 0.0, sigma, cost_per_sample)
    }

    pub fn auxiliary(bias: f64, sigma: f64, cost_per_sample: f64) -> Result<Self> {
        Self::new(AnnotatorRole::Auxiliary, bias, sigma, cost_per_sample)
    }

    pub fn role(&self) -> AnnotatorRole {
        self.role
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }

    pub fn cost_per_sample(&self) -> f64 {
        self.cost_per_sample
    }
}

/// Per-sample costs of collection (`c_c`), primary annotation (`c_a`) and
/// auxiliary annotation (`c_b`), in any consistent unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub collection: f64,
    pub primary: f64,
    pub auxiliary: f64,
}

impl CostModel {
    pub fn new(collection: f64, primary: f64, auxiliary: f64) -> Result<Self> {
        check_nonnegative("cost_collect", collection)?;
        check_nonnegative("cost_primary", primary)?;
        check_nonnegative("cost_aux", auxiliary)?;
        if collection + auxiliary <= 0.0 {
            return Err(Error::invalid(
                "cost_collect",
                "collection plus auxiliary cost must be positive",
            ));
        }
        if primary <= auxiliary {
            log::warn!(
                "primary annotation cost {primary} does not exceed auxiliary cost {auxiliary}"
            );
        }
        Ok(Self {
            collection,
            primary,
            auxiliary,
        })
    }

    /// Relative cost of primary annotation, `c_a / (c_c + c_b)`.
    pub fn k(&self) -> f64 {
        self.primary / (self.collection + self.auxiliary)
    }

    /// `(c_c + c_a) / (c_c + c_b)`, the ratio that decides between the
    /// conventional and the auxiliary-only designs.
    pub fn k_prime(&self) -> f64 {
        (self.collection + self.primary) / (self.collection + self.auxiliary)
    }

    /// Total sampling cost `c_a n_a + c_b n_b + max(n_a, n_b) c_c`.
    pub fn total(&self, n_a: u64, n_b: u64) -> f64 {
        self.primary * n_a as f64
            + self.auxiliary * n_b as f64
            + self.collection * n_a.max(n_b) as f64
    }
}

/// Target half-width `d` at confidence `1 - delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionTarget {
    d: f64,
    delta: f64,
    zeta: f64,
}

impl PrecisionTarget {
    pub fn new(d: f64, delta: f64) -> Result<Self> {
        check_finite("d", d)?;
        if d <= 0.0 {
            return Err(Error::invalid("d", format!("must be positive, got {d}")));
        }
        let zeta = two_sided_critical_value(delta)?;
        Ok(Self { d, delta, zeta })
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    /// Largest estimator variance compatible with the target, `d² / ζ²`.
    pub fn variance_budget(&self) -> f64 {
        (self.d * self.d) / (self.zeta * self.zeta)
    }

    /// `ζ² / d²`, the factor turning a per-sample variance into a sample size.
    pub fn size_factor(&self) -> f64 {
        (self.zeta * self.zeta) / (self.d * self.d)
    }
}

/// Samples annotated by the auxiliary annotator, the first `n_a` of which
/// also carry a primary annotation.
///
/// The paired subset is always the prefix; callers shuffle records before
/// construction if their order is not already random.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedSampleSet {
    aux: Vec<f64>,
    primary: Vec<f64>,
}

impl PairedSampleSet {
    pub fn new(aux: Vec<f64>, primary: Vec<f64>) -> Result<Self> {
        if primary.len() > aux.len() {
            return Err(Error::HybridOrder {
                n_a: primary.len() as u64,
                n_b: aux.len() as u64,
            });
        }
        for &v in &aux {
            check_unit("aux_value", v)?;
        }
        for &v in &primary {
            check_unit("primary_value", v)?;
        }
        Ok(Self { aux, primary })
    }

    /// Build from `(aux, primary)` records whose primary annotations form a
    /// prefix.
    pub fn from_records(records: &[(f64, Option<f64>)]) -> Result<Self> {
        let n_a = records.iter().take_while(|(_, p)| p.is_some()).count();
        if records[n_a..].iter().any(|(_, p)| p.is_some()) {
            return Err(Error::invalid(
                "records",
                "primary annotations must form a prefix of the records",
            ));
        }
        let aux = records.iter().map(|(a, _)| *a).collect();
        let primary = records[..n_a].iter().filter_map(|(_, p)| *p).collect();
        Self::new(aux, primary)
    }

    pub fn n_a(&self) -> usize {
        self.primary.len()
    }

    pub fn n_b(&self) -> usize {
        self.aux.len()
    }

    pub fn aux(&self) -> &[f64] {
        &self.aux
    }

    pub fn primary(&self) -> &[f64] {
        &self.primary
    }

    /// Auxiliary values of the paired prefix.
    pub fn paired_aux(&self) -> &[f64] {
        &self.aux[..self.primary.len()]
    }

    /// Auxiliary values without a primary annotation.
    pub fn unpaired_aux(&self) -> &[f64] {
        &self.aux[self.primary.len()..]
    }

    pub fn records(&self) -> impl Iterator<Item = (f64, Option<f64>)> + '_ {
        self.aux
            .iter()
            .enumerate()
            .map(|(i, &a)| (a, self.primary.get(i).copied()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    Conventional,
    HybridOffset,
    HybridRatio,
    Auxiliary,
    AuxiliaryBiasCorrected,
    HybridBiasCorrected,
}

impl Design {
    pub const ALL: [Design; 6] = [
        Design::Conventional,
        Design::HybridOffset,
        Design::HybridRatio,
        Design::Auxiliary,
        Design::AuxiliaryBiasCorrected,
        Design::HybridBiasCorrected,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Design::Conventional => "conventional",
            Design::HybridOffset => "hybrid-offset",
            Design::HybridRatio => "hybrid-ratio",
            Design::Auxiliary => "auxiliary",
            Design::AuxiliaryBiasCorrected => "auxiliary-bias-corrected",
            Design::HybridBiasCorrected => "hybrid-bias-corrected",
        }
    }

    pub fn is_hybrid(&self) -> bool {
        matches!(
            self,
            Design::HybridOffset | Design::HybridRatio | Design::HybridBiasCorrected
        )
    }

    pub fn is_auxiliary_only(&self) -> bool {
        matches!(self, Design::Auxiliary | Design::AuxiliaryBiasCorrected)
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Design::ALL
            .iter()
            .copied()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::invalid("design", format!("unknown design '{s}'")))
    }
}

/// Sample sizes chosen under a design, with their predicted variance and
/// total sampling cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub design: Design,
    pub n_a: u64,
    pub n_b: u64,
    pub predicted_variance: f64,
    pub tsc: f64,
}

impl SamplingPlan {
    pub fn new(
        design: Design,
        n_a: u64,
        n_b: u64,
        predicted_variance: f64,
        costs: &CostModel,
    ) -> Result<Self> {
        match design {
            Design::Conventional if n_b != 0 || n_a == 0 => {
                return Err(Error::invalid("n_b", "conventional plans have n_b = 0 and n_a >= 1"));
            }
            d if d.is_auxiliary_only() && (n_a != 0 || n_b == 0) => {
                return Err(Error::invalid("n_a", "auxiliary plans have n_a = 0 and n_b >= 1"));
            }
            d if d.is_hybrid() && (n_a == 0 || n_b < n_a) => {
                return Err(Error::HybridOrder { n_a, n_b });
            }
            _ => {}
        }
        Ok(Self {
            design,
            n_a,
            n_b,
            predicted_variance,
            tsc: costs.total(n_a, n_b),
        })
    }

    pub fn collected(&self) -> u64 {
        self.n_a.max(self.n_b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeta_for_95_percent() {
        let t = PrecisionTarget::new(0.058, 0.05).unwrap();
        assert!((t.zeta() - 1.959_964).abs() < 1e-6);
        assert!((t.variance_budget() * t.size_factor() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn population_variance_cap() {
        assert!(PopulationModel::with_mean(0.3, 0.16).is_ok());
        assert!(PopulationModel::with_mean(0.3, 0.21f64.sqrt()).is_ok());
        assert!(PopulationModel::with_mean(0.3, 0.5).is_err());
        assert!(PopulationModel::with_mean(1.2, 0.1).is_err());
        assert!(PopulationModel::new(-0.1).is_err());
    }

    #[test]
    fn primary_must_be_unbiased() {
        assert!(AnnotatorProfile::new(AnnotatorRole::Primary, 0.01, 0.0, 10.0).is_err());
        assert!(AnnotatorProfile::auxiliary(0.05, 0.047, 0.0).is_ok());
    }

    #[test]
    fn cost_model_ratios() {
        let c = CostModel::new(1.0, 10.0, 0.0).unwrap();
        assert_eq!(c.k(), 10.0);
        assert_eq!(c.k_prime(), 11.0);
        assert!(CostModel::new(0.0, 10.0, 0.0).is_err());
        let err = CostModel::new(-1.0, 10.0, 0.0).unwrap_err().to_string();
        assert!(err.contains("cost_collect"), "{err}");
    }

    #[test]
    fn total_cost_counts_collection_once() {
        let c = CostModel::new(1.0, 10.0, 0.5).unwrap();
        assert_eq!(c.total(5, 53), 50.0 + 26.5 + 53.0);
        assert_eq!(c.total(40, 0), 440.0);
        assert_eq!(c.total(0, 0), 0.0);
    }

    #[test]
    fn paired_set_prefix_rules() {
        let s = PairedSampleSet::from_records(&[(0.2, Some(0.1)), (0.3, None)]).unwrap();
        assert_eq!((s.n_a(), s.n_b()), (1, 2));
        assert_eq!(s.unpaired_aux(), &[0.3]);
        assert!(PairedSampleSet::from_records(&[(0.2, None), (0.3, Some(0.1))]).is_err());
        assert!(PairedSampleSet::new(vec![0.2], vec![0.1, 0.2]).is_err());
        assert!(PairedSampleSet::new(vec![1.2], vec![]).is_err());
    }

    #[test]
    fn plan_invariants() {
        let c = CostModel::new(1.0, 10.0, 0.0).unwrap();
        assert!(SamplingPlan::new(Design::Conventional, 40, 0, 0.0, &c).is_ok());
        assert!(SamplingPlan::new(Design::Conventional, 40, 3, 0.0, &c).is_err());
        assert!(SamplingPlan::new(Design::HybridOffset, 6, 5, 0.0, &c).is_err());
        assert!(SamplingPlan::new(Design::Auxiliary, 1, 5, 0.0, &c).is_err());
        let p = SamplingPlan::new(Design::HybridOffset, 5, 53, 0.0, &c).unwrap();
        assert_eq!(p.tsc, 103.0);
    }

    #[test]
    fn design_names_round_trip() {
        for d in Design::ALL {
            assert_eq!(d.name().parse::<Design>().unwrap(), d);
        }
    }
}
