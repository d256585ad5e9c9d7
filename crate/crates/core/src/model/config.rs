use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which layer norms train with the attention learning rate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionGrouping {
    /// Attention projections plus the layer norm feeding each attention block.
    #[default]
    PreAttentionNorm,
    /// Attention projections plus both layer norms inside each block.
    AllBlockNorms,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub context_len: usize,
    pub ffn_hidden: usize,
    pub temperature: f64,
    pub seed: u64,
    pub grouping: AttentionGrouping,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 101,
            d_model: 64,
            n_heads: 2,
            n_layers: 2,
            context_len: 64,
            ffn_hidden: 256,
            temperature: 0.3,
            seed: 0,
            grouping: AttentionGrouping::PreAttentionNorm,
        }
    }
}

impl ModelConfig {
    /// The single-layer, single-head configuration used for gradient checks.
    pub fn miniature() -> Self {
        ModelConfig {
            vocab_size: 7,
            d_model: 8,
            n_heads: 1,
            n_layers: 1,
            context_len: 8,
            ffn_hidden: 16,
            temperature: 0.3,
            seed: 0,
            grouping: AttentionGrouping::PreAttentionNorm,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_layers", self.n_layers),
            ("context_len", self.context_len),
            ("ffn_hidden", self.ffn_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !self.d_model.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "d_model {} must be even for sinusoidal positions",
                self.d_model
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Number of trainable scalars implied by `config`.
pub fn param_count(config: &ModelConfig) -> usize {
    let d = config.d_model;
    let v = config.vocab_size;
    let h = config.ffn_hidden;
    let norm = 2 * d;
    let attention = 4 * (d * d + d);
    let ffn = (d * h + h) + (h * d + d);
    let block = norm + attention + norm + ffn;
    v * d + config.n_layers * block + norm + (d * v + v)
}
