//! Sample-size planning and mean estimation for surveys that pair an
//! accurate, expensive primary annotator with a cheap, noisy auxiliary one.
//!
//! The planner picks how many samples to collect (`n_b`) and how many of
//! those to send to the primary annotator (`n_a`) so that a target
//! confidence interval is met at minimum cost. Estimators turn the
//! collected annotations into a population mean; [`sim`] replays designs on
//! synthetic or resampled data.

// `!(x > 0.0)` style checks are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correction;
pub mod error;
pub mod estimators;
pub mod io;
pub mod model;
pub mod normal;
pub mod planner;
pub mod sim;
pub mod sum;

pub use correction::{ConfusionMatrix, TwoStageConfig, ValueSpace};
pub use error::{Error, Result};
pub use model::{
    AnnotatorProfile, AnnotatorRole, CostModel, Design, PairedSampleSet, PopulationModel,
    PrecisionTarget, SamplingPlan,
};
pub use planner::{PlanningInputs, RoundingPolicy};
