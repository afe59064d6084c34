//! Command-line flags and the flat `key = value` config file.
//!
//! Both sources are reduced to the same string map keyed by flag name and
//! then validated once, so the file accepts exactly the flags' names
//! (underscores may stand in for hyphens). Flags win over the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::correction::ConfusionMatrix;
use crate::error::{Error, Result};
use crate::model::{AnnotatorProfile, CostModel, Design, PopulationModel, PrecisionTarget};
use crate::planner::{PlanningInputs, RoundingPolicy};

/// Environment variable giving the default output directory.
pub const OUTDIR_ENV: &str = "SURVEY_DESIGN_OUTDIR";
const DEFAULT_OUTDIR: &str = "output";

#[derive(Debug, Parser)]
#[command(name = "survey-design", version, about = "Cost-optimal hybrid survey designs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Sample sizes meeting a precision target, or the best split of a budget
    Plan(Flags),
    /// Population mean from annotated samples in a CSV file
    Estimate(Flags),
    /// Replicated resampling or the binary estimator comparison
    Simulate(Flags),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Flat `key = value` file with any of the options below
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Standard deviation of the true values
    #[arg(long, value_name = "X", allow_negative_numbers = true)]
    pub sigma_p: Option<String>,
    /// Noise of the primary annotator
    #[arg(long, value_name = "X", allow_negative_numbers = true)]
    pub sigma_a: Option<String>,
    /// Error standard deviation of the auxiliary annotator
    #[arg(long, value_name = "X", allow_negative_numbers = true)]
    pub sigma_b: Option<String>,
    /// Population mean (list for the binary comparison grid)
    #[arg(long, value_name = "X[,X...]", allow_negative_numbers = true)]
    pub mu_p: Option<String>,
    /// Confidence-interval half-width
    #[arg(long, value_name = "X", allow_negative_numbers = true)]
    pub d: Option<String>,
    /// One minus the confidence level
    #[arg(long, value_name = "X", allow_negative_numbers = true)]
    pub delta: Option<String>,
    /// Cost of collecting one sample
    #[arg(long, value_name = "X", allow_negative_numbers = true)]
    pub cost_collect: Option<String>,
    /// Cost of one primary annotation
    #[arg(long, value_name = "X", allow_negative_numbers = true)]
    pub cost_primary: Option<String>,
    /// Cost of one auxiliary annotation
    #[arg(long, value_name = "X", allow_negative_numbers = true)]
    pub cost_aux: Option<String>,
    /// Classifier sensitivity (list for the binary comparison grid)
    #[arg(long, value_name = "X[,X...]", allow_negative_numbers = true)]
    pub alpha: Option<String>,
    /// Classifier specificity (list for the binary comparison grid)
    #[arg(long, value_name = "X[,X...]", allow_negative_numbers = true)]
    pub beta: Option<String>,
    /// Budget or budgets in cost units
    #[arg(long, value_name = "B[,B...]", allow_negative_numbers = true)]
    pub budget: Option<String>,
    #[arg(long, value_name = "N", allow_negative_numbers = true)]
    pub replicates: Option<String>,
    #[arg(long, value_name = "N", allow_negative_numbers = true)]
    pub seed: Option<String>,
    /// Design or designs, e.g. conventional,hybrid-offset
    #[arg(long, value_name = "NAME[,NAME...]")]
    pub design: Option<String>,
    /// Paired CSV (sample_id,aux_value,primary_value) or point CSV
    /// (sample_id,point_id,aux_label,primary_label)
    #[arg(long, value_name = "PATH")]
    pub input: Option<String>,
    /// Output directory [default: $SURVEY_DESIGN_OUTDIR or ./output]
    #[arg(long, value_name = "DIR")]
    pub outdir: Option<String>,
    /// Clamp reported estimates into [0, 1]
    #[arg(long)]
    pub clamp: bool,
    /// Values are binary and the confusion matrix holds on this data
    #[arg(long)]
    pub binary: bool,
    /// Simulation protocol: pool or bernoulli
    #[arg(long, value_name = "NAME")]
    pub protocol: Option<String>,
    /// Mean auxiliary error of the synthetic pool
    #[arg(long, value_name = "X", allow_negative_numbers = true)]
    pub aux_bias: Option<String>,
    /// Correlation between auxiliary error and true value in the synthetic pool
    #[arg(long, value_name = "X", allow_negative_numbers = true)]
    pub correlation: Option<String>,
    /// Size of the synthetic pool
    #[arg(long, value_name = "N", allow_negative_numbers = true)]
    pub pool_size: Option<String>,
    /// Primary sample sizes for the binary comparison grid
    #[arg(long, value_name = "N[,N...]", allow_negative_numbers = true)]
    pub n_a: Option<String>,
    /// Total sample size for the binary comparison grid
    #[arg(long, value_name = "N", allow_negative_numbers = true)]
    pub n_b: Option<String>,
    /// Integer rounding of planned sizes: repair or nearest
    #[arg(long, value_name = "NAME")]
    pub rounding: Option<String>,
    /// Points classified per sample, for two-stage sizing
    #[arg(long, value_name = "N", allow_negative_numbers = true)]
    pub points: Option<String>,
}

const KEYS: &[&str] = &[
    "sigma-p",
    "sigma-a",
    "sigma-b",
    "mu-p",
    "d",
    "delta",
    "cost-collect",
    "cost-primary",
    "cost-aux",
    "alpha",
    "beta",
    "budget",
    "replicates",
    "seed",
    "design",
    "input",
    "outdir",
    "clamp",
    "binary",
    "protocol",
    "aux-bias",
    "correlation",
    "pool-size",
    "n-a",
    "n-b",
    "rounding",
    "points",
];

impl Flags {
    fn to_map(&self) -> BTreeMap<&'static str, String> {
        let pairs: [(&'static str, &Option<String>); 25] = [
            ("sigma-p", &self.sigma_p),
            ("sigma-a", &self.sigma_a),
            ("sigma-b", &self.sigma_b),
            ("mu-p", &self.mu_p),
            ("d", &self.d),
            ("delta", &self.delta),
            ("cost-collect", &self.cost_collect),
            ("cost-primary", &self.cost_primary),
            ("cost-aux", &self.cost_aux),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("budget", &self.budget),
            ("replicates", &self.replicates),
            ("seed", &self.seed),
            ("design", &self.design),
            ("input", &self.input),
            ("outdir", &self.outdir),
            ("protocol", &self.protocol),
            ("aux-bias", &self.aux_bias),
            ("correlation", &self.correlation),
            ("pool-size", &self.pool_size),
            ("n-a", &self.n_a),
            ("n-b", &self.n_b),
            ("rounding", &self.rounding),
            ("points", &self.points),
        ];
        let mut map: BTreeMap<&'static str, String> = pairs
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
            .collect();
        if self.clamp {
            map.insert("clamp", "true".into());
        }
        if self.binary {
            map.insert("binary", "true".into());
        }
        map
    }
}

/// Reads a config file of `key = value` lines. `#` starts a comment.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<&'static str, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config_text(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn parse_config_text(text: &str) -> std::result::Result<BTreeMap<&'static str, String>, String> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected `key = value`", i + 1))?;
        let normalized = key.trim().replace('_', "-");
        let key = KEYS
            .iter()
            .find(|k| **k == normalized)
            .ok_or_else(|| format!("line {}: unknown key `{}`", i + 1, key.trim()))?;
        if map.insert(*key, value.trim().to_string()).is_some() {
            return Err(format!("line {}: `{key}` set twice", i + 1));
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Plan,
    Estimate,
    Simulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    /// Resample a fully annotated pool (from `--input` or synthetic).
    Pool,
    /// Compare the two binary hybrid estimators on simulated labels.
    Bernoulli,
}

/// Fully validated settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub sigma_p: Option<f64>,
    pub sigma_a: f64,
    pub sigma_b: Option<f64>,
    pub mu_p: Vec<f64>,
    pub d: Option<f64>,
    pub delta: f64,
    pub cost_collect: Option<f64>,
    pub cost_primary: Option<f64>,
    pub cost_aux: Option<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Strictly positive and strictly increasing.
    pub budgets: Vec<f64>,
    pub replicates: Option<usize>,
    pub seed: u64,
    pub designs: Vec<Design>,
    pub input: Option<PathBuf>,
    pub outdir: PathBuf,
    pub clamp: bool,
    pub binary: bool,
    pub protocol: Protocol,
    pub aux_bias: f64,
    pub correlation: f64,
    pub pool_size: usize,
    pub n_a: Vec<usize>,
    pub n_b: Option<usize>,
    pub rounding: RoundingPolicy,
    pub points: Option<u32>,
}

fn field(key: &'static str, reason: impl Into<String>) -> Error {
    Error::invalid(key, reason)
}

fn real(map: &BTreeMap<&'static str, String>, key: &'static str) -> Result<Option<f64>> {
    map.get(key)
        .map(|v| {
            let x: f64 = v
                .trim()
                .parse()
                .map_err(|_| field(key, format!("`{v}` is not a number")))?;
            if !x.is_finite() {
                return Err(field(key, "must be finite"));
            }
            Ok(x)
        })
        .transpose()
}

fn nonnegative(map: &BTreeMap<&'static str, String>, key: &'static str) -> Result<Option<f64>> {
    let x = real(map, key)?;
    if let Some(v) = x {
        if v < 0.0 {
            return Err(field(key, format!("must be nonnegative, got {v}")));
        }
    }
    Ok(x)
}

fn list<T: std::str::FromStr>(
    map: &BTreeMap<&'static str, String>,
    key: &'static str,
) -> Result<Vec<T>> {
    match map.get(key) {
        None => Ok(Vec::new()),
        Some(v) => v
            .split(',')
            .map(|s| {
                let s = s.trim();
                s.parse()
                    .map_err(|_| field(key, format!("`{s}` is not a valid value")))
            })
            .collect(),
    }
}

fn integer<T: std::str::FromStr>(
    map: &BTreeMap<&'static str, String>,
    key: &'static str,
) -> Result<Option<T>> {
    map.get(key)
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| field(key, format!("`{v}` is not a nonnegative integer")))
        })
        .transpose()
}

fn boolean(map: &BTreeMap<&'static str, String>, key: &'static str) -> Result<bool> {
    match map.get(key).map(|s| s.trim()) {
        None => Ok(false),
        Some("true" | "yes" | "1") => Ok(true),
        Some("false" | "no" | "0") => Ok(false),
        Some(other) => Err(field(key, format!("`{other}` is not true or false"))),
    }
}

impl RunConfig {
    /// Validates merged settings. `env_outdir` is the value of
    /// [`OUTDIR_ENV`], if set.
    pub fn from_map(
        command: Command,
        map: &BTreeMap<&'static str, String>,
        env_outdir: Option<String>,
    ) -> Result<Self> {
        let mut budgets: Vec<f64> = list(map, "budget")?;
        if let Some(b) = budgets.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(field("budget", format!("must be positive, got {b}")));
        }
        budgets.sort_by(f64::total_cmp);
        budgets.dedup();

        let input = map.get("input").map(PathBuf::from);
        if let Some(p) = &input {
            if !p.is_file() {
                return Err(field("input", format!("{} does not exist", p.display())));
            }
        }
        let outdir = map
            .get("outdir")
            .cloned()
            .or(env_outdir)
            .unwrap_or_else(|| DEFAULT_OUTDIR.into());

        let protocol = match map.get("protocol").map(|s| s.trim()) {
            None | Some("pool") => Protocol::Pool,
            Some("bernoulli") => Protocol::Bernoulli,
            Some(other) => return Err(field("protocol", format!("unknown protocol `{other}`"))),
        };
        let rounding = match map.get("rounding").map(|s| s.trim()) {
            None | Some("repair") => RoundingPolicy::NearestWithRepair,
            Some("nearest") => RoundingPolicy::Nearest,
            Some(other) => return Err(field("rounding", format!("unknown policy `{other}`"))),
        };
        let replicates: Option<usize> = integer(map, "replicates")?;
        if replicates == Some(0) {
            return Err(field("replicates", "must be at least 1"));
        }
        let points: Option<u32> = integer(map, "points")?;
        if points == Some(0) {
            return Err(field("points", "must be at least 1"));
        }
        let correlation = real(map, "correlation")?.unwrap_or(0.0);
        if !(-1.0..=1.0).contains(&correlation) {
            return Err(field("correlation", "must lie in [-1, 1]"));
        }
        let delta = real(map, "delta")?.unwrap_or(0.05);
        if !(delta > 0.0 && delta < 1.0) {
            return Err(field("delta", format!("must lie in (0, 1), got {delta}")));
        }
        if let Some(d) = real(map, "d")? {
            if d <= 0.0 {
                return Err(field("d", format!("must be positive, got {d}")));
            }
        }

        let config = RunConfig {
            command,
            sigma_p: nonnegative(map, "sigma-p")?,
            sigma_a: nonnegative(map, "sigma-a")?.unwrap_or(0.0),
            sigma_b: nonnegative(map, "sigma-b")?,
            mu_p: list(map, "mu-p")?,
            d: real(map, "d")?,
            delta,
            cost_collect: nonnegative(map, "cost-collect")?,
            cost_primary: nonnegative(map, "cost-primary")?,
            cost_aux: nonnegative(map, "cost-aux")?,
            alpha: list(map, "alpha")?,
            beta: list(map, "beta")?,
            budgets,
            replicates,
            seed: integer(map, "seed")?.unwrap_or(0),
            designs: list(map, "design")?,
            input,
            outdir: PathBuf::from(outdir),
            clamp: boolean(map, "clamp")?,
            binary: boolean(map, "binary")?,
            protocol,
            aux_bias: real(map, "aux-bias")?.unwrap_or(0.0),
            correlation,
            pool_size: integer(map, "pool-size")?.unwrap_or(1000),
            n_a: list(map, "n-a")?,
            n_b: integer(map, "n-b")?,
            rounding,
            points,
        };
        for (key, values) in [("mu-p", &config.mu_p), ("alpha", &config.alpha), ("beta", &config.beta)] {
            if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(field(key, format!("must lie in [0, 1], got {v}")));
            }
        }
        config.check_required()?;
        Ok(config)
    }

    fn check_required(&self) -> Result<()> {
        let need = |present: bool, key: &'static str| {
            if present {
                Ok(())
            } else {
                Err(Error::Missing(key))
            }
        };
        let costs = || -> Result<()> {
            need(self.cost_collect.is_some(), "cost-collect")?;
            need(self.cost_primary.is_some(), "cost-primary")?;
            need(self.cost_aux.is_some(), "cost-aux")
        };
        match self.command {
            Command::Plan => {
                need(self.sigma_p.is_some(), "sigma-p")?;
                need(self.sigma_b.is_some(), "sigma-b")?;
                need(self.d.is_some(), "d")?;
                costs()?;
            }
            Command::Estimate => need(self.input.is_some(), "input")?,
            Command::Simulate => match self.protocol {
                Protocol::Pool => {
                    costs()?;
                    need(!self.budgets.is_empty(), "budget")?;
                    if self.input.is_none() {
                        need(self.sigma_p.is_some(), "sigma-p")?;
                        need(self.sigma_b.is_some(), "sigma-b")?;
                        need(!self.mu_p.is_empty(), "mu-p")?;
                    }
                }
                Protocol::Bernoulli => {}
            },
        }
        Ok(())
    }

    fn single(values: &[f64], key: &'static str) -> Result<Option<f64>> {
        match values {
            [] => Ok(None),
            [x] => Ok(Some(*x)),
            _ => Err(field(key, "expected a single value")),
        }
    }

    pub fn single_mu_p(&self) -> Result<Option<f64>> {
        Self::single(&self.mu_p, "mu-p")
    }

    pub fn cost_model(&self) -> Result<CostModel> {
        CostModel::new(
            self.cost_collect.ok_or(Error::Missing("cost-collect"))?,
            self.cost_primary.ok_or(Error::Missing("cost-primary"))?,
            self.cost_aux.ok_or(Error::Missing("cost-aux"))?,
        )
    }

    /// Single confusion matrix from `--alpha` and `--beta`, if both given.
    pub fn confusion(&self) -> Result<Option<ConfusionMatrix>> {
        match (Self::single(&self.alpha, "alpha")?, Self::single(&self.beta, "beta")?) {
            (Some(a), Some(b)) => Ok(Some(ConfusionMatrix::new(a, b)?)),
            (None, None) => Ok(None),
            (Some(_), None) => Err(Error::Missing("beta")),
            (None, Some(_)) => Err(Error::Missing("alpha")),
        }
    }

    pub fn planning_inputs(&self) -> Result<PlanningInputs> {
        let sigma_p = self.sigma_p.ok_or(Error::Missing("sigma-p"))?;
        let population = match self.single_mu_p()? {
            Some(mu) => PopulationModel::with_mean(mu, sigma_p)?,
            None => PopulationModel::new(sigma_p)?,
        };
        let costs = self.cost_model()?;
        PlanningInputs::new(
            population,
            AnnotatorProfile::primary(self.sigma_a, costs.primary)?,
            AnnotatorProfile::auxiliary(self.aux_bias, self.sigma_b.ok_or(Error::Missing("sigma-b"))?, costs.auxiliary)?,
            costs.collection,
            PrecisionTarget::new(self.d.ok_or(Error::Missing("d"))?, self.delta)?,
        )
    }
}

/// Merges a parsed command line with its config file, if any.
pub fn config_from_cli(cli: Cli, env_outdir: Option<String>) -> Result<RunConfig> {
    let (command, flags) = match cli.command {
        CliCommand::Plan(f) => (Command::Plan, f),
        CliCommand::Estimate(f) => (Command::Estimate, f),
        CliCommand::Simulate(f) => (Command::Simulate, f),
    };
    let mut map = match &flags.config {
        Some(path) => read_config_file(path)?,
        None => BTreeMap::new(),
    };
    for (key, value) in flags.to_map() {
        if let Some(old) = map.insert(key, value.clone()) {
            if old != value {
                log::warn!("--{key} {value} overrides `{key} = {old}` from the config file");
            }
        }
    }
    RunConfig::from_map(command, &map, env_outdir)
}

/// Parses `args` (program name first) into a validated [`RunConfig`],
/// reading the default output directory from [`OUTDIR_ENV`].
pub fn parse_config<I, T>(args: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    config_from_cli(cli, std::env::var(OUTDIR_ENV).ok())
}
