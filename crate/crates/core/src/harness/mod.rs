//! Experiment orchestration: configuration, method runners, reports,
//! aggregation, and dump verification.

mod config;
mod report;
mod runner;

pub use config::{BackendChoice, DatasetChoice, ExperimentConfig, Method};
pub use report::{
    aggregate, cell_stem, dump_check, dump_path, read_dump, read_reports, report_path, trace_path,
    AggregateSummary, CallReport, DumpCheckOutcome, DumpRow, MethodSummary, ReportParams,
    RunReport, Stat,
};
pub use runner::{
    run_experiment, run_experiment_observed, CellFailure, RunOutput, API_KEY_ENV, ENDPOINT_ENV,
};
