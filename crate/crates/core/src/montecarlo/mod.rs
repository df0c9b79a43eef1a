//! Simulation designs, the replication engine and simulation-based checks.

pub mod dgp;
pub mod engine;
pub mod metrics;
pub mod power;
pub mod rng;
pub mod validate;

pub use dgp::{generate, generate_with, DgpId, DgpSpec};
pub use engine::{parse_estimators, run_mc, summarize, CoefSummary, Draw, EstimatorKind, EstimatorSummary, Failure, McOptions, McResult};
pub use metrics::{iqr, mean_bias, median, median_bias, mse, quantile_type7, robust_mse};
pub use power::{size_adjusted_power, PowerCurve, PowerMethod, PowerOptions, PowerPoint};
pub use rng::{counter_hash, rng_for, SEED_SCHEME};
pub use validate::{validate_moment_expansion, MomentCheck, MomentReport};
