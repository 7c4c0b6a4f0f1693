//! Experiment harness: JSON experiment configs, CSV trajectories, SVG plots.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod plot;

pub use commands::{cmd_ablate_scheduler, cmd_plot, cmd_run, Options};
pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
