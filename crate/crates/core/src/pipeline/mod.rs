//! End-to-end runs: declarative configuration, stage execution with
//! per-stage outputs, and the final report.

pub mod config;
pub mod report;
pub mod run;
pub mod stages;

pub use config::{validate_config, ConfigIssue, Inputs, LambdaSetting, RunConfig, Stage};
pub use report::Report;
pub use run::{run_pipeline, run_pipeline_with, RunOptions, TOOL_VERSION};
pub use stages::{compare_matrix_sets, MatrixSetComparison, ModelMetric};
