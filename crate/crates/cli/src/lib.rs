//! Experiment runner: reads a TOML config, runs one of the three consensus
//! pipelines end to end and writes a report, traces and plot data.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod plot;
pub mod report;

pub use config::{ExperimentConfig, Fixture, Mode};
pub use error::CliError;
pub use pipeline::{run_experiment, run_resolved, REPORT_FILE, TIMINGS_FILE};
pub use plot::emit_plot_data;
pub use report::ExperimentReport;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INFEASIBLE: u8 = 2;
pub const EXIT_TOLERANCE: u8 = 3;
pub const EXIT_CONFIG: u8 = 4;
