use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::ParamTree;
use super::transformer::{TokenGrid, Transformer};
use crate::data::Vocab;
use crate::error::{Error, Result};

/// Samples `length` characters after `prompt` from `softmax(logits / temperature)`,
/// conditioning on at most the last `context_len` characters.
pub fn generate(
    model: &Transformer,
    params: &ParamTree,
    vocab: &Vocab,
    prompt: &str,
    length: usize,
    temperature: f64,
    seed: u64,
) -> Result<String> {
    let mut ids = vocab.encode(prompt)?;
    if length == 0 {
        return Ok(prompt.to_owned());
    }
    if ids.is_empty() {
        return Err(Error::Input("generation needs a non-empty prompt".into()));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::Config(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let ctx = model.config().context_len;
    let vocab_size = model.config().vocab_size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..length {
        let window = &ids[ids.len().saturating_sub(ctx)..];
        let logits = model.forward(params, TokenGrid::new(window, 1, window.len())?)?;
        let last = &logits.data()[(window.len() - 1) * vocab_size..];
        let next = sample_tempered(last, temperature, rng.random::<f64>());
        ids.push(next);
    }
    vocab.decode(&ids)
}

/// Inverse-CDF draw from the tempered softmax of `logits` given `u ∈ [0, 1)`.
pub(crate) fn sample_tempered(logits: &[f64], temperature: f64, u: f64) -> usize {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits
        .iter()
        .map(|&l| ((l - max) / temperature).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return argmax(logits);
    }
    let target = u * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if acc > target {
            return i;
        }
    }
    // Rounding left `target` just past the running sum; take the last
    // token that carries weight.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cold_sampling_is_argmax() {
        let logits = [0.1, 2.0, 1.9, -3.0];
        for u in [0.0, 0.25, 0.5, 0.999_999] {
            assert_eq!(sample_tempered(&logits, 1e-9, u), 1);
        }
    }

    #[test]
    fn warm_sampling_follows_cdf() {
        let logits = [0.0, 0.0];
        assert_eq!(sample_tempered(&logits, 1.0, 0.25), 0);
        assert_eq!(sample_tempered(&logits, 1.0, 0.75), 1);
    }
}
