//! Experiment orchestration: case studies, comparative runs, spectra,
//! Monte Carlo replication, PF tuning and result files.

pub mod checks;
pub mod config;
pub mod monte_carlo;
pub mod output;
pub mod run;
pub mod spectral;
pub mod tuning;

pub use config::{ExperimentConfig, Platform, Variant};
pub use run::{run_case, RunResult};
