//! Seeded Monte Carlo harness. Every replicate owns its random stream, so
//! results are identical whatever the number of worker threads.

pub mod bernoulli;
pub mod bootstrap;
pub mod generate;
pub mod metrics;
pub mod rng;
pub mod two_stage;

pub use bernoulli::{run_bernoulli_comparison, BernoulliGrid, ComparisonCell};
pub use bootstrap::{
    run_pool_bootstrap, sizes_for_budget, CellOutcome, PoolBootstrapConfig, PoolMoments,
    SimulationCell, SimulationReport,
};
pub use generate::{
    apply_annotator, generate_population, AnnotatorKind, PopulationShape, SyntheticAnnotatorSpec,
};
pub use metrics::{metrics, Metrics};
pub use rng::replicate_rng;
pub use two_stage::two_stage_estimates;
