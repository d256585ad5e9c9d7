//! Parallel, resumable learning-rate sweeps and their on-disk format.

mod engine;
mod grid;
mod store;

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{extract_sequences, Corpus, SequenceSet};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::TrainRunConfig;

pub use engine::{continue_sweep, run_cell, run_sweep, run_sweep_with, CellOutcome, SweepOptions};
pub use grid::{AxisSpec, GridSpec};
pub use store::{load_result, save_result};

pub const FORMAT_VERSION: &str = "1";

/// Where the training sequences come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSpec {
    pub corpus: PathBuf,
    pub corpus_sha256: String,
    pub stride: usize,
    pub strip: bool,
}

impl DataSpec {
    /// Loads the corpus, checks it against the recorded hash and cuts it
    /// into windows of `context_len + 1` tokens.
    pub fn load_sequences(&self, model: &ModelConfig) -> Result<SequenceSet> {
        let corpus = Corpus::load(&self.corpus, self.strip)?;
        if corpus.hash != self.corpus_sha256 {
            return Err(Error::Input(format!(
                "{} has sha256 {} but the sweep was recorded with {}",
                self.corpus.display(),
                corpus.hash,
                self.corpus_sha256
            )));
        }
        extract_sequences(corpus.stream, model.context_len + 1, self.stride)
    }
}

/// Everything needed to recompute any cell of a sweep.
///
/// The learning rates in `run` are placeholders; each cell overrides them
/// with its grid coordinates. The seed and the convergence constants live in
/// `run`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepMeta {
    pub version: String,
    pub grid: GridSpec,
    pub model: ModelConfig,
    pub run: TrainRunConfig,
    pub data: DataSpec,
}

impl SweepMeta {
    pub fn new(grid: GridSpec, model: ModelConfig, run: TrainRunConfig, data: DataSpec) -> Self {
        SweepMeta {
            version: FORMAT_VERSION.to_string(),
            grid,
            model,
            run,
            data,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported sweep version {:?} (expected {FORMAT_VERSION:?})",
                self.version
            )));
        }
        if self.data.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        self.grid.validate()?;
        self.model.validate()?;
        self.run.validate()
    }

    /// Run configuration for one cell.
    pub fn cell_run(&self, att: usize, fc: usize) -> TrainRunConfig {
        let (lr_att, lr_fc) = self.grid.rates(att, fc);
        TrainRunConfig {
            lr_att,
            lr_fc,
            ..self.run.clone()
        }
    }
}

/// A possibly partial sweep. Missing cells hold NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub meta: SweepMeta,
    mu: Vec<f64>,
    converged: Vec<bool>,
    done: Vec<bool>,
    notes: BTreeMap<usize, String>,
}

impl SweepResult {
    /// A sweep with no completed cells.
    pub fn empty(meta: SweepMeta) -> Self {
        let n = meta.grid.cells();
        SweepResult {
            meta,
            mu: vec![f64::NAN; n],
            converged: vec![false; n],
            done: vec![false; n],
            notes: BTreeMap::new(),
        }
    }

    /// Builds a complete sweep from per-cell values in att-major order.
    pub fn from_cells(meta: SweepMeta, cells: &[CellOutcome]) -> Result<Self> {
        let mut result = SweepResult::empty(meta);
        if cells.len() != result.mu.len() {
            return Err(Error::Dimension {
                op: "sweep cells",
                lhs: vec![result.meta.grid.att.count, result.meta.grid.fc.count],
                rhs: vec![cells.len()],
            });
        }
        for (i, cell) in cells.iter().enumerate() {
            result.record(i, cell.clone())?;
        }
        Ok(result)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.meta.grid
    }

    pub(crate) fn record(&mut self, index: usize, cell: CellOutcome) -> Result<()> {
        if !(-1.0..=1.0).contains(&cell.mu) {
            return Err(Error::Contract(format!(
                "cell {index} has μ = {} outside [-1, 1]",
                cell.mu
            )));
        }
        self.mu[index] = cell.mu;
        self.converged[index] = cell.converged;
        self.done[index] = true;
        match cell.note {
            Some(note) => self.notes.insert(index, note),
            None => self.notes.remove(&index),
        };
        Ok(())
    }

    pub fn mu(&self, att: usize, fc: usize) -> Option<f64> {
        let i = self.meta.grid.index(att, fc);
        self.done[i].then_some(self.mu[i])
    }

    pub fn converged(&self, att: usize, fc: usize) -> Option<bool> {
        let i = self.meta.grid.index(att, fc);
        self.done[i].then_some(self.converged[i])
    }

    pub fn note(&self, att: usize, fc: usize) -> Option<&str> {
        self.notes
            .get(&self.meta.grid.index(att, fc))
            .map(String::as_str)
    }

    pub fn notes(&self) -> &BTreeMap<usize, String> {
        &self.notes
    }

    /// All μ values, att-major; NaN for missing cells.
    pub fn mu_values(&self) -> &[f64] {
        &self.mu
    }

    pub fn converged_values(&self) -> &[bool] {
        &self.converged
    }

    pub fn done_values(&self) -> &[bool] {
        &self.done
    }

    pub fn completed(&self) -> usize {
        self.done.iter().filter(|&&d| d).count()
    }

    pub fn is_complete(&self) -> bool {
        self.done.iter().all(|&d| d)
    }

    /// (att, fc) of every missing cell.
    pub fn missing(&self) -> Vec<(usize, usize)> {
        (0..self.done.len())
            .filter(|&i| !self.done[i])
            .map(|i| self.meta.grid.coords(i))
            .collect()
    }

    pub fn require_complete(&self) -> Result<()> {
        let missing = self.missing();
        if missing.is_empty() {
            return Ok(());
        }
        Err(Error::Incomplete {
            missing: missing.len(),
            total: self.done.len(),
            first: missing.into_iter().take(8).collect(),
        })
    }

    /// Same cells and bit-identical μ values.
    pub fn bit_eq(&self, other: &SweepResult) -> bool {
        self.meta == other.meta
            && self.done == other.done
            && self.converged == other.converged
            && (0..self.mu.len())
                .filter(|&i| self.done[i])
                .all(|i| self.mu[i].to_bits() == other.mu[i].to_bits())
    }
}
