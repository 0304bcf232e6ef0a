//! Experiment harness: configuration, the end-to-end pipeline, multi-run experiments,
//! parameter sweeps and report files.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod sweep;

pub use config::{DatasetSource, ExperimentConfig, Method};
pub use error::{HarnessError, Stage};
pub use pipeline::{
    mine_pairs, run_experiment, run_experiment_on, run_pipeline, run_pipeline_on, ExperimentOutcome, RunFailure,
    RunOutputs, RunResult, StageDurations,
};
pub use report::{read_results, report, report_outcome, summarize, Summary};
pub use sweep::{report_sweep, sweep, Grid, SweepPoint};
