//! Experiment sweeps, result files and plots.

pub mod config;
pub mod jobs;
pub mod metrics;
pub mod plot;
pub mod results;
pub mod sweep;

pub use config::{ChainPlan, ExperimentConfig, Mode, Profile};
pub use metrics::{nmse_db, spherical_denormalize, spherical_normalize};
pub use results::MetricRow;
pub use sweep::run_sweep;
