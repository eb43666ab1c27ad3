//! Scenario runner for the flux-crosstalk calibration simulator.
//!
//! A scenario is described by a TOML [`config::ScenarioConfig`]; [`output::run_to_dir`]
//! executes it and writes per-point CSVs, a summary and a manifest.

pub mod config;
pub mod error;
pub mod output;
pub mod report;
pub mod scenarios;

pub use config::{Scenario, ScenarioConfig};
pub use error::{HarnessError, Result};
pub use output::{run, run_to_dir, RunResults};
