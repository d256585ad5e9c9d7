//! Optimization, single training runs, and convergence scoring.

mod adam;
mod convergence;
mod run;

pub use adam::{adam_step, adam_step_uniform, partition_params, AdamConfig, AdamState, Partition};
pub use convergence::{
    check_convergence, convergence_measure, evaluate, normalize_losses, ConvergenceCheck,
    ConvergenceCriteria, ConvergenceReport, MIN_TRACE_LEN,
};
pub(crate) use run::check_data;
pub use run::{train_run, train_with, LossTrace, TrainOutcome, TrainRunConfig};
