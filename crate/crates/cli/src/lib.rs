//! Command implementations behind the `satlab` binary.

pub mod commands;
pub mod config;

pub use commands::{cmd_anneal_sweep, cmd_eval, cmd_gen, cmd_phase_sweep, cmd_train, RunRecord, SplitMetrics};
pub use config::ExperimentConfig;
