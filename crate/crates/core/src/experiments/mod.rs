//! Config-driven ensemble runs, statistics, theorem monitors and the
//! acceptance checks.

pub mod acceptance;
pub mod config;
pub mod runner;
pub mod stats;
pub mod theorem;

pub use config::{ExperimentConfig, ExperimentKind, OutputFormat};
pub use runner::{run_ensemble, write_outputs, Check, Row, RunOutput, RunSummary};
pub use stats::{ks_test, ks_two_sample, KsResult, Summary};
pub use theorem::{theorem1_statistic, theorem2_monitor, Theorem1Report, Theorem2Report, SQRT_2_OVER_PI};
