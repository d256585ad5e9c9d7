use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::convergence::{evaluate, normalize_losses, ConvergenceCriteria, ConvergenceReport};
use crate::data::{make_batches, SequenceSet};
use crate::error::{Error, Result};
use crate::model::{init_params, ModelConfig, ParamTree, TokenGrid, Transformer};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainRunConfig {
    pub lr_att: f64,
    pub lr_fc: f64,
    pub n_steps: usize,
    pub batch_size: usize,
    /// Seeds the batch order; initialization uses the model seed.
    pub seed: u64,
    pub criteria: ConvergenceCriteria,
    pub adam: AdamConfig,
}

impl Default for TrainRunConfig {
    fn default() -> Self {
        TrainRunConfig {
            lr_att: 1e-3,
            lr_fc: 1e-3,
            n_steps: 2000,
            batch_size: 256,
            seed: 0,
            criteria: ConvergenceCriteria::default(),
            adam: AdamConfig::default(),
        }
    }
}

impl TrainRunConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, lr) in [("lr_att", self.lr_att), ("lr_fc", self.lr_fc)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be finite and >= 0, got {lr}"
                )));
            }
        }
        if self.n_steps == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "n_steps and batch_size must be positive".into(),
            ));
        }
        self.criteria.validate()
    }
}

/// Raw and normalized per-step losses of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    /// Pre-update minibatch losses for the steps actually taken.
    pub raw: Vec<f64>,
    /// `n_steps` entries; steps skipped after divergence sit at the ceiling.
    pub normalized: Vec<f64>,
    /// First step whose loss was NaN or ±∞.
    pub diverged_at: Option<usize>,
}

impl LossTrace {
    pub fn from_raw(raw: Vec<f64>, n_steps: usize, max_loss: f64) -> Self {
        let diverged_at = raw.iter().position(|l| !l.is_finite());
        let normalized = normalize_losses(&raw, n_steps, max_loss);
        LossTrace {
            raw,
            normalized,
            diverged_at,
        }
    }

    /// Bitwise equality of both loss sequences.
    pub fn bit_eq(&self, other: &LossTrace) -> bool {
        let same = |a: &[f64], b: &[f64]| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        };
        self.diverged_at == other.diverged_at
            && same(&self.raw, &other.raw)
            && same(&self.normalized, &other.normalized)
    }

    pub fn report(&self, criteria: &ConvergenceCriteria) -> Result<ConvergenceReport> {
        evaluate(&self.normalized, criteria)
    }
}

/// Trace plus final parameters.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub trace: LossTrace,
    pub params: ParamTree,
}

pub(crate) fn check_data(model: &ModelConfig, sequences: &SequenceSet) -> Result<()> {
    if sequences.window() < 2 || sequences.window() - 1 > model.context_len {
        return Err(Error::Config(format!(
            "sequence window {} does not fit context length {} (need 2 ..= context_len + 1)",
            sequences.window(),
            model.context_len
        )));
    }
    if sequences.id_bound() > model.vocab_size {
        return Err(Error::Config(format!(
            "data uses {} token ids but the model vocabulary is {}",
            sequences.id_bound(),
            model.vocab_size
        )));
    }
    Ok(())
}

/// Trains from the seeded initialization, calling `on_step(step, loss)` after
/// every recorded loss. Stops at the first non-finite loss.
pub fn train_with(
    model_config: &ModelConfig,
    run: &TrainRunConfig,
    sequences: &SequenceSet,
    mut on_step: impl FnMut(usize, f64),
) -> Result<TrainOutcome> {
    run.validate()?;
    check_data(model_config, sequences)?;
    let model = Transformer::new(model_config.clone())?;
    let mut params = init_params(model_config)?;
    let plan = make_batches(sequences, run.batch_size, run.seed, run.n_steps)?;
    let mut state = AdamState::new(&params, run.adam);
    let seq = sequences.window() - 1;
    let mut raw = Vec::with_capacity(run.n_steps);
    for step in 0..run.n_steps {
        let batch = plan.batch(step, sequences);
        let (inputs, targets) = batch.split();
        let grid = TokenGrid::new(&inputs, batch.batch, seq)?;
        let (loss, grads) = model.loss_and_grads(&params, grid, &targets)?;
        raw.push(loss);
        on_step(step, loss);
        if !loss.is_finite() {
            log::debug!("loss became {loss} at step {step}; padding the trace");
            break;
        }
        adam_step(&mut params, &grads, &mut state, run.lr_att, run.lr_fc)?;
    }
    Ok(TrainOutcome {
        trace: LossTrace::from_raw(raw, run.n_steps, run.criteria.max_loss),
        params,
    })
}

/// One deterministic training run.
pub fn train_run(
    model_config: &ModelConfig,
    run: &TrainRunConfig,
    sequences: &SequenceSet,
) -> Result<LossTrace> {
    Ok(train_with(model_config, run, sequences, |_, _| {})?.trace)
}
