//! Configuration-driven experiment runner over `lorentz-core`.
//!
//! One experiment writes one directory: the resolved configuration, per-trial
//! CSV, a JSON summary and, where useful, a plot script.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::ExperimentConfig;
pub use error::CliError;
pub use run::{run, Command, Outcome, Overrides};
