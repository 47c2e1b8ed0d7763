//! Command-line experiment harness.
//!
//! The binary front-end (`dbvae`) wires five subcommands over the core
//! crate: corpus synthesis, single-run training, checkpoint evaluation,
//! multi-run paired experiments, and post-hoc report generation. The
//! library half keeps every command testable without spawning a
//! process.

pub mod config;
pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod report;
pub mod rundir;
pub mod synth;
pub mod train;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use evaluate::{cmd_evaluate, Evaluation, Split};
pub use experiment::{cmd_experiment, run_experiment, ExperimentConfig, ExperimentOutcome};
pub use report::{cmd_report, Report, ReportFormat};
pub use rundir::RunDir;
pub use train::{run_training, RunArtifacts};
