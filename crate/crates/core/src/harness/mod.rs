//! Experiment runner: configs, per-trial records, and plot data.

pub mod convergence;
pub mod plot;
pub mod record;
pub mod spec;
pub mod table1;
pub mod tracking;

pub use convergence::run_convergence;
pub use plot::emit_plot_data;
pub use record::{Aggregate, MethodSummary, ResultRecord, ResultRow, RowStatus, SlopeFit};
pub use spec::{ConvergenceConfig, ExperimentKind, ExperimentSpec, ModelPreset, Table1Config, TrackingConfig};
pub use table1::run_table1;
pub use tracking::run_tracking;

use crate::error::{Error, Result};

pub(crate) fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

/// Runs the experiment described by `spec` and returns its record; raw trial
/// files (if any) land in `spec.output_dir`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ResultRecord> {
    match spec.kind {
        ExperimentKind::Table1 => run_table1(spec),
        ExperimentKind::Cubic | ExperimentKind::Multimode => run_tracking(spec),
        _ => run_convergence(spec),
    }
}
