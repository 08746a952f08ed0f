//! Configuration, measurement tables, reports and the experiment runner.

mod config;
mod report;
mod run;
mod table;

pub use config::*;
pub use report::{emit_plot_data, InputRecord, PlotTable, Report};
pub use run::{
    execute, exit_code, resolve_checkpoint, resolve_parallelism, run, RunOutcome, RunRequest, DEFAULT_CHECKPOINT,
    EXIT_CHECKPOINT, EXIT_FAILURE, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_OK, REPORT_FILE, THREADS_ENV,
};
pub use table::{load_table, parse_table, MeasurementTable};
