//! Named experiments over the `erosion_flow` toolkit: configuration,
//! deterministic replica-parallel execution, and persisted run records.

pub mod config;
pub mod error;
pub mod experiments;
pub mod parallel;
pub mod plot;
pub mod record;
pub mod registry;

pub use config::{ExperimentConfig, Params};
pub use error::{HarnessError, Result};
pub use record::{CriterionReport, RunRecord};
pub use registry::{find, registry, run_experiment, Experiment};
