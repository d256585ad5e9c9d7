use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::config::{AttentionGrouping, ModelConfig};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Learning-rate group of a trainable leaf.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Attention,
    Fc,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    /// `None` only for trees assembled by hand; `init_params` always tags.
    pub group: Option<ParamGroup>,
    pub value: Tensor,
}

/// Ordered collection of named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamTree {
    entries: Vec<ParamEntry>,
}

impl ParamTree {
    pub fn new() -> Self {
        ParamTree::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, group: Option<ParamGroup>) {
        self.entries.push(ParamEntry {
            name: name.into(),
            group,
            value,
        });
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| &e.value)
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn bit_eq(&self, other: &ParamTree) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.group == b.group && a.value.bit_eq(&b.value))
    }
}

/// Leaf names for transformer block `layer`.
pub(crate) struct BlockNames {
    pub attn_norm_gain: String,
    pub attn_norm_bias: String,
    pub query_weight: String,
    pub query_bias: String,
    pub key_weight: String,
    pub key_bias: String,
    pub value_weight: String,
    pub value_bias: String,
    pub out_weight: String,
    pub out_bias: String,
    pub ffn_norm_gain: String,
    pub ffn_norm_bias: String,
    pub hidden_weight: String,
    pub hidden_bias: String,
    pub output_weight: String,
    pub output_bias: String,
}

impl BlockNames {
    pub fn new(layer: usize) -> Self {
        let p = |s: &str| format!("blocks.{layer}.{s}");
        BlockNames {
            attn_norm_gain: p("attn_norm.gain"),
            attn_norm_bias: p("attn_norm.bias"),
            query_weight: p("attn.query.weight"),
            query_bias: p("attn.query.bias"),
            key_weight: p("attn.key.weight"),
            key_bias: p("attn.key.bias"),
            value_weight: p("attn.value.weight"),
            value_bias: p("attn.value.bias"),
            out_weight: p("attn.out.weight"),
            out_bias: p("attn.out.bias"),
            ffn_norm_gain: p("ffn_norm.gain"),
            ffn_norm_bias: p("ffn_norm.bias"),
            hidden_weight: p("ffn.hidden.weight"),
            hidden_bias: p("ffn.hidden.bias"),
            output_weight: p("ffn.output.weight"),
            output_bias: p("ffn.output.bias"),
        }
    }
}

pub(crate) const EMBEDDING: &str = "embedding";
pub(crate) const FINAL_NORM_GAIN: &str = "final_norm.gain";
pub(crate) const FINAL_NORM_BIAS: &str = "final_norm.bias";
pub(crate) const HEAD_WEIGHT: &str = "head.weight";
pub(crate) const HEAD_BIAS: &str = "head.bias";

/// Group tag for a leaf name under `rule`. `None` for names outside the
/// transformer inventory.
pub fn classify(name: &str, rule: AttentionGrouping) -> Option<ParamGroup> {
    if matches!(
        name,
        EMBEDDING | FINAL_NORM_GAIN | FINAL_NORM_BIAS | HEAD_WEIGHT | HEAD_BIAS
    ) {
        return Some(ParamGroup::Fc);
    }
    let rest = name.strip_prefix("blocks.")?;
    let (layer, leaf) = rest.split_once('.')?;
    layer.parse::<usize>().ok()?;
    match leaf {
        "attn_norm.gain" | "attn_norm.bias" => Some(ParamGroup::Attention),
        "attn.query.weight" | "attn.query.bias" | "attn.key.weight" | "attn.key.bias"
        | "attn.value.weight" | "attn.value.bias" | "attn.out.weight" | "attn.out.bias" => {
            Some(ParamGroup::Attention)
        }
        "ffn_norm.gain" | "ffn_norm.bias" => Some(match rule {
            AttentionGrouping::PreAttentionNorm => ParamGroup::Fc,
            AttentionGrouping::AllBlockNorms => ParamGroup::Attention,
        }),
        "ffn.hidden.weight" | "ffn.hidden.bias" | "ffn.output.weight" | "ffn.output.bias" => {
            Some(ParamGroup::Fc)
        }
        _ => None,
    }
}

/// Truncated normal on [-2, 2] rescaled so the result has standard deviation
/// `std` (the LeCun-normal convention for dense kernels).
fn truncated_normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    const TRUNCATED_STD: f64 = 0.879_625_661_034_239_8;
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 2.0 {
            return z * std / TRUNCATED_STD;
        }
    }
}

fn dense_kernel(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let std = (1.0 / fan_in as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| truncated_normal(rng, std))
        .collect();
    Tensor::from_parts(vec![fan_in, fan_out], data)
}

/// Deterministic parameter initialization from `config.seed`.
///
/// Dense kernels are LeCun-normal, embeddings normal with variance
/// `1/d_model`, layer-norm gains one, every bias zero.
pub fn init_params(config: &ModelConfig) -> Result<ParamTree> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.d_model;
    let h = config.ffn_hidden;
    let v = config.vocab_size;
    let rule = config.grouping;
    let mut tree = ParamTree::new();
    let put = |tree: &mut ParamTree, name: &str, value: Tensor| {
        tree.insert(name, value, classify(name, rule));
    };

    let embed_std = (1.0 / d as f64).sqrt();
    let embedding = (0..v * d)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * embed_std)
        .collect();
    put(
        &mut tree,
        EMBEDDING,
        Tensor::from_parts(vec![v, d], embedding),
    );

    for layer in 0..config.n_layers {
        let n = BlockNames::new(layer);
        put(&mut tree, &n.attn_norm_gain, Tensor::filled(&[d], 1.0));
        put(&mut tree, &n.attn_norm_bias, Tensor::zeros(&[d]));
        for (w, b) in [
            (&n.query_weight, &n.query_bias),
            (&n.key_weight, &n.key_bias),
            (&n.value_weight, &n.value_bias),
            (&n.out_weight, &n.out_bias),
        ] {
            put(&mut tree, w, dense_kernel(&mut rng, d, d));
            put(&mut tree, b, Tensor::zeros(&[d]));
        }
        put(&mut tree, &n.ffn_norm_gain, Tensor::filled(&[d], 1.0));
        put(&mut tree, &n.ffn_norm_bias, Tensor::zeros(&[d]));
        put(&mut tree, &n.hidden_weight, dense_kernel(&mut rng, d, h));
        put(&mut tree, &n.hidden_bias, Tensor::zeros(&[h]));
        put(&mut tree, &n.output_weight, dense_kernel(&mut rng, h, d));
        put(&mut tree, &n.output_bias, Tensor::zeros(&[d]));
    }
    put(&mut tree, FINAL_NORM_GAIN, Tensor::filled(&[d], 1.0));
    put(&mut tree, FINAL_NORM_BIAS, Tensor::zeros(&[d]));
    put(&mut tree, HEAD_WEIGHT, dense_kernel(&mut rng, d, v));
    put(&mut tree, HEAD_BIAS, Tensor::zeros(&[v]));
    Ok(tree)
}

/// Fixed sinusoidal position table `[context_len, d_model]`.
pub fn sinusoidal_pe(context_len: usize, d_model: usize) -> Result<Tensor> {
    if d_model == 0 || !d_model.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "sinusoidal positions need an even width, got {d_model}"
        )));
    }
    if context_len == 0 {
        return Err(Error::Config("context_len must be at least 1".into()));
    }
    let mut data = vec![0.0; context_len * d_model];
    for p in 0..context_len {
        for i in 0..d_model / 2 {
            let angle = p as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            data[p * d_model + 2 * i] = angle.sin();
            data[p * d_model + 2 * i + 1] = angle.cos();
        }
    }
    Ok(Tensor::from_parts(vec![context_len, d_model], data))
}
