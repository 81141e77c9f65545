//! Experiment matrix: configuration, parallel runs, aggregation, plots and
//! bundle checks.

pub mod aggregate;
pub mod config;
pub mod plot;
pub mod runner;
pub mod validate;

pub use aggregate::{aggregate, parse_summary, summary_to_csv, CellKey, CellSummary, SummaryPoint, SUMMARY_HEADER};
pub use config::{ExperimentConfig, GammaSetting, InstanceSource};
pub use plot::render_plots;
pub use runner::{
    load_instance, parse_traces, run_experiment, simulate_run, traces_to_csv, RegretTrace, RunKey, RunOutputs,
    TracePoint, TRACE_HEADER,
};
pub use validate::{validate_bundle, Check};
