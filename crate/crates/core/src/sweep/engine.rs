use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use super::{save_result, SweepMeta, SweepResult};
use crate::data::SequenceSet;
use crate::error::{Error, Result};
use crate::training::check_data;
use crate::training::train_run;

/// Result of training one grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellOutcome {
    pub mu: f64,
    pub converged: bool,
    /// Set when the cell failed and was recorded as diverged.
    pub note: Option<String>,
}

impl CellOutcome {
    pub fn failed(note: impl Into<String>) -> Self {
        CellOutcome {
            mu: -1.0,
            converged: false,
            note: Some(note.into()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub workers: usize,
    /// Persist progress after this many newly finished cells.
    pub checkpoint_every: usize,
    /// Directory the sweep is checkpointed into, if any.
    pub checkpoint_dir: Option<PathBuf>,
    /// Stop after computing this many cells (the rest stay missing).
    pub max_new_cells: Option<usize>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            workers: thread::available_parallelism().map_or(1, |n| n.get()),
            checkpoint_every: 16,
            checkpoint_dir: None,
            max_new_cells: None,
        }
    }
}

/// Trains one cell from scratch. Every cell shares the initialization and
/// batch order; only the two learning rates differ.
pub fn run_cell(
    meta: &SweepMeta,
    sequences: &SequenceSet,
    att: usize,
    fc: usize,
) -> Result<CellOutcome> {
    let run = meta.cell_run(att, fc);
    let report = train_run(&meta.model, &run, sequences)?.report(&run.criteria)?;
    Ok(CellOutcome {
        mu: report.mu,
        converged: report.converged,
        note: None,
    })
}

/// Runs every cell of a fresh sweep.
pub fn run_sweep(
    meta: SweepMeta,
    sequences: &SequenceSet,
    options: &SweepOptions,
) -> Result<SweepResult> {
    continue_sweep(SweepResult::empty(meta), sequences, options)
}

/// Fills in the missing cells of a (possibly empty) sweep.
pub fn continue_sweep(
    result: SweepResult,
    sequences: &SequenceSet,
    options: &SweepOptions,
) -> Result<SweepResult> {
    result.meta.validate()?;
    check_data(&result.meta.model, sequences)?;
    let meta = result.meta.clone();
    run_sweep_with(result, options, |att, fc| {
        run_cell(&meta, sequences, att, fc)
    })
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic payload".to_string()
    }
}

struct Shared {
    result: SweepResult,
    since_flush: usize,
    save_error: Option<Error>,
}

/// Sweep driver with a pluggable cell function.
///
/// Missing cells are handed out to a fixed pool of workers through a shared
/// counter; each result is stored at its own index, so the outcome does not
/// depend on the number of workers or on scheduling. A cell that errors or
/// panics is recorded as diverged (μ = −1) with a note.
pub fn run_sweep_with<F>(
    result: SweepResult,
    options: &SweepOptions,
    cell: F,
) -> Result<SweepResult>
where
    F: Fn(usize, usize) -> Result<CellOutcome> + Sync,
{
    result.meta.grid.validate()?;
    if options.workers == 0 || options.checkpoint_every == 0 {
        return Err(Error::Config(
            "workers and checkpoint_every must be at least 1".into(),
        ));
    }
    let grid = result.meta.grid;
    let mut pending: Vec<usize> = (0..grid.cells())
        .filter(|&i| !result.done_values()[i])
        .collect();
    if let Some(limit) = options.max_new_cells {
        pending.truncate(limit);
    }
    if let Some(dir) = &options.checkpoint_dir {
        save_result(&result, dir)?;
    }
    let total = grid.cells();
    log::info!(
        "sweep: {} of {total} cells to compute on {} workers",
        pending.len(),
        options.workers.min(pending.len()).max(1)
    );

    let shared = Mutex::new(Shared {
        result,
        since_flush: 0,
        save_error: None,
    });
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let k = next.fetch_add(1, Ordering::Relaxed);
        let Some(&index) = pending.get(k) else { break };
        let (att, fc) = grid.coords(index);
        let outcome = match catch_unwind(AssertUnwindSafe(|| cell(att, fc))) {
            Ok(Ok(outcome)) => outcome,
            Ok(Err(e)) => CellOutcome::failed(format!("error: {e}")),
            Err(payload) => CellOutcome::failed(format!("panic: {}", panic_message(payload))),
        };
        let mut guard = shared.lock().unwrap_or_else(|p| p.into_inner());
        let state = &mut *guard;
        if let Err(e) = state.result.record(index, outcome.clone()) {
            state
                .result
                .record(index, CellOutcome::failed(e.to_string()))
                .expect("μ = -1 is in range");
        }
        let (lr_att, lr_fc) = grid.rates(att, fc);
        log::info!(
            "cell ({att},{fc}) lr_att={lr_att:e} lr_fc={lr_fc:e} mu={:.4} converged={} [{}/{total}]{}",
            outcome.mu,
            outcome.converged,
            state.result.completed(),
            outcome.note.as_deref().map(|n| format!(" note: {n}")).unwrap_or_default()
        );
        state.since_flush += 1;
        if let Some(dir) = &options.checkpoint_dir {
            if state.since_flush >= options.checkpoint_every {
                state.since_flush = 0;
                if let Err(e) = save_result(&state.result, dir) {
                    state.save_error.get_or_insert(e);
                }
            }
        }
    };
    thread::scope(|scope| {
        for _ in 1..options.workers.min(pending.len()) {
            scope.spawn(worker);
        }
        worker();
    });

    let state = shared.into_inner().unwrap_or_else(|p| p.into_inner());
    if let Some(e) = state.save_error {
        return Err(e);
    }
    if let Some(dir) = &options.checkpoint_dir {
        save_result(&state.result, dir)?;
    }
    Ok(state.result)
}
