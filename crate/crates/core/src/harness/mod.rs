//! Config-driven sweeps over geometry, error kind, rate, seed and weight.

mod config;
mod sweep;

pub use config::{ExperimentConfig, GeometrySource, CONFIG_VERSION, DEFAULT_RATES, WORKERS_ENV};
pub use sweep::{
    read_results, run_sweep, summarize, write_csv, CellTiming, ResultRow, RowStatus, SummaryRow, SweepOutput,
    RESULTS_FILE, SUMMARY_FILE, TIMINGS_FILE, VOLUMES_DIR,
};
