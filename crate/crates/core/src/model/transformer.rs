use super::config::ModelConfig;
use super::params::{
    sinusoidal_pe, BlockNames, ParamTree, EMBEDDING, FINAL_NORM_BIAS, FINAL_NORM_GAIN, HEAD_BIAS,
    HEAD_WEIGHT,
};
use crate::diffcore::{Tape, Tensor, Var, LAYER_NORM_EPS};
use crate::error::{Error, Result};

/// Pre-LN decoder-only transformer over character tokens.
///
/// Per block: LN → causal multi-head attention → residual, then
/// LN → dense+ReLU → dense → residual. A final LN and an untied output
/// projection produce vocabulary logits.
#[derive(Clone, Debug)]
pub struct Transformer {
    config: ModelConfig,
    positions: Tensor,
}

/// Token ids laid out `[batch, seq]`, row-major.
#[derive(Clone, Copy, Debug)]
pub struct TokenGrid<'a> {
    pub ids: &'a [usize],
    pub batch: usize,
    pub seq: usize,
}

impl<'a> TokenGrid<'a> {
    pub fn new(ids: &'a [usize], batch: usize, seq: usize) -> Result<Self> {
        if batch == 0 || seq == 0 || ids.len() != batch * seq {
            return Err(Error::Input(format!(
                "{} token ids do not form a [{batch}, {seq}] grid",
                ids.len()
            )));
        }
        Ok(TokenGrid { ids, batch, seq })
    }
}

/// A recorded forward pass: the tape, the logits node, and one leaf per
/// parameter entry (same order as the [`ParamTree`]).
pub struct Recorded {
    pub tape: Tape,
    pub logits: Var,
    pub leaves: Vec<Var>,
}

struct Leaves<'p> {
    params: &'p ParamTree,
    vars: Vec<Var>,
}

impl Leaves<'_> {
    fn var(&self, name: &str) -> Result<Var> {
        self.params
            .index_of(name)
            .map(|i| self.vars[i])
            .ok_or_else(|| Error::Config(format!("parameter tree lacks `{name}`")))
    }
}

impl Transformer {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let positions = sinusoidal_pe(config.context_len, config.d_model)?;
        Ok(Transformer { config, positions })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn linear(tape: &mut Tape, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let y = tape.matmul(x, weight)?;
        tape.add(y, bias)
    }

    /// Records the forward pass for `tokens` on a fresh tape.
    pub fn record(&self, params: &ParamTree, tokens: TokenGrid<'_>) -> Result<Recorded> {
        let c = &self.config;
        if tokens.seq > c.context_len {
            return Err(Error::Input(format!(
                "sequence length {} exceeds context length {}",
                tokens.seq, c.context_len
            )));
        }
        let mut tape = Tape::new();
        let vars = params
            .entries()
            .iter()
            .map(|e| tape.leaf(e.value.clone()))
            .collect();
        let leaves = Leaves { params, vars };
        let (b, t, d) = (tokens.batch, tokens.seq, c.d_model);

        let embedding = leaves.var(EMBEDDING)?;
        if tape.value(embedding).shape() != [c.vocab_size, d] {
            return Err(Error::Config(format!(
                "embedding shape {:?} does not match config",
                tape.value(embedding).shape()
            )));
        }
        let mut x = tape.embedding(embedding, tokens.ids, &[b, t])?;
        let pe = Tensor::from_parts(vec![t, d], self.positions.data()[..t * d].to_vec());
        let pe = tape.leaf(pe);
        x = tape.add(x, pe)?;

        let heads = c.n_heads;
        let score_scale = 1.0 / (c.head_dim() as f64).sqrt();
        for layer in 0..c.n_layers {
            let n = BlockNames::new(layer);
            let normed = tape.layer_norm(
                x,
                leaves.var(&n.attn_norm_gain)?,
                leaves.var(&n.attn_norm_bias)?,
                LAYER_NORM_EPS,
            )?;
            let q = Self::linear(
                &mut tape,
                normed,
                leaves.var(&n.query_weight)?,
                leaves.var(&n.query_bias)?,
            )?;
            let k = Self::linear(
                &mut tape,
                normed,
                leaves.var(&n.key_weight)?,
                leaves.var(&n.key_bias)?,
            )?;
            let v = Self::linear(
                &mut tape,
                normed,
                leaves.var(&n.value_weight)?,
                leaves.var(&n.value_bias)?,
            )?;
            let q = tape.split_heads(q, heads)?;
            let k = tape.split_heads(k, heads)?;
            let v = tape.split_heads(v, heads)?;
            let scores = tape.batch_matmul(q, k, true)?;
            let scores = tape.scale(scores, score_scale);
            let scores = tape.causal_mask(scores)?;
            let weights = tape.softmax(scores, 2)?;
            let attended = tape.batch_matmul(weights, v, false)?;
            let attended = tape.merge_heads(attended, heads)?;
            let projected = Self::linear(
                &mut tape,
                attended,
                leaves.var(&n.out_weight)?,
                leaves.var(&n.out_bias)?,
            )?;
            x = tape.add(x, projected)?;

            let normed = tape.layer_norm(
                x,
                leaves.var(&n.ffn_norm_gain)?,
                leaves.var(&n.ffn_norm_bias)?,
                LAYER_NORM_EPS,
            )?;
            let hidden = Self::linear(
                &mut tape,
                normed,
                leaves.var(&n.hidden_weight)?,
                leaves.var(&n.hidden_bias)?,
            )?;
            let hidden = tape.relu(hidden);
            let out = Self::linear(
                &mut tape,
                hidden,
                leaves.var(&n.output_weight)?,
                leaves.var(&n.output_bias)?,
            )?;
            x = tape.add(x, out)?;
        }

        let normed = tape.layer_norm(
            x,
            leaves.var(FINAL_NORM_GAIN)?,
            leaves.var(FINAL_NORM_BIAS)?,
            LAYER_NORM_EPS,
        )?;
        let logits = Self::linear(
            &mut tape,
            normed,
            leaves.var(HEAD_WEIGHT)?,
            leaves.var(HEAD_BIAS)?,
        )?;
        Ok(Recorded {
            tape,
            logits,
            leaves: leaves.vars,
        })
    }

    /// Logits `[batch, seq, vocab]`.
    pub fn forward(&self, params: &ParamTree, tokens: TokenGrid<'_>) -> Result<Tensor> {
        let rec = self.record(params, tokens)?;
        Ok(rec.tape.value(rec.logits).clone())
    }

    /// Mean softmax cross-entropy of next-token predictions.
    pub fn batch_loss(
        &self,
        params: &ParamTree,
        inputs: TokenGrid<'_>,
        targets: &[usize],
    ) -> Result<f64> {
        let mut rec = self.record(params, inputs)?;
        let loss = rec.tape.cross_entropy(rec.logits, targets)?;
        rec.tape.value(loss).item()
    }

    /// Loss plus its gradient for every parameter entry, in tree order.
    pub fn loss_and_grads(
        &self,
        params: &ParamTree,
        inputs: TokenGrid<'_>,
        targets: &[usize],
    ) -> Result<(f64, Vec<Tensor>)> {
        let mut rec = self.record(params, inputs)?;
        let loss = rec.tape.cross_entropy(rec.logits, targets)?;
        let value = rec.tape.value(loss).item()?;
        let mut grads = rec.tape.backward(loss)?;
        let per_leaf = rec.leaves.iter().map(|&v| grads.take(v)).collect();
        Ok((value, per_leaf))
    }
}
