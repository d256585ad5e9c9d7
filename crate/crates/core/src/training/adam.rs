//! Adam with separate learning rates for the attention and fc groups.

use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};
use crate::model::{ParamGroup, ParamTree};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-leaf first and second moment estimates plus the step counter.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
    non_finite_steps: u64,
}

impl AdamState {
    pub fn new(params: &ParamTree, config: AdamConfig) -> Self {
        let zeros = || {
            params
                .entries()
                .iter()
                .map(|e| Tensor::zeros(e.value.shape()))
                .collect::<Vec<_>>()
        };
        AdamState {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
            non_finite_steps: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }

    /// Steps whose gradients contained NaN or ±∞.
    pub fn non_finite_steps(&self) -> u64 {
        self.non_finite_steps
    }
}

/// Indices of the tree's leaves by learning-rate group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub attention: Vec<usize>,
    pub fc: Vec<usize>,
}

pub fn partition_params(params: &ParamTree) -> Result<Partition> {
    let mut p = Partition {
        attention: Vec::new(),
        fc: Vec::new(),
    };
    for (i, e) in params.entries().iter().enumerate() {
        match e.group {
            Some(ParamGroup::Attention) => p.attention.push(i),
            Some(ParamGroup::Fc) => p.fc.push(i),
            None => {
                return Err(Error::Config(format!(
                    "parameter `{}` has no learning-rate group",
                    e.name
                )))
            }
        }
    }
    Ok(p)
}

fn check_shapes(params: &ParamTree, grads: &[Tensor], state: &AdamState) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Dimension {
            op: "adam_step",
            lhs: vec![params.len()],
            rhs: vec![grads.len()],
        });
    }
    for ((e, g), m) in params.entries().iter().zip(grads).zip(&state.m) {
        if e.value.shape() != g.shape() || e.value.shape() != m.shape() {
            return Err(Error::Dimension {
                op: "adam_step",
                lhs: e.value.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
    }
    Ok(())
}

fn apply(params: &mut ParamTree, grads: &[Tensor], state: &mut AdamState, rates: &[f64]) {
    state.t += 1;
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.t as i32;
    let bias1 = 1.0 - beta1.powi(t);
    let bias2 = 1.0 - beta2.powi(t);
    let mut non_finite = false;
    for (i, entry) in params.entries_mut().iter_mut().enumerate() {
        let lr = rates[i];
        let w = entry.value.data_mut();
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for j in 0..w.len() {
            let gj = g[j];
            non_finite |= !gj.is_finite();
            m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
            v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            w[j] -= lr * (m_hat / (v_hat.sqrt() + eps));
        }
    }
    if non_finite {
        state.non_finite_steps += 1;
    }
}

/// One Adam update with `lr_att` for attention leaves and `lr_fc` for the rest.
pub fn adam_step(
    params: &mut ParamTree,
    grads: &[Tensor],
    state: &mut AdamState,
    lr_att: f64,
    lr_fc: f64,
) -> Result<()> {
    check_shapes(params, grads, state)?;
    let partition = partition_params(params)?;
    let mut rates = vec![lr_fc; params.len()];
    for i in partition.attention {
        rates[i] = lr_att;
    }
    apply(params, grads, state, &rates);
    Ok(())
}

/// One Adam update with a single learning rate for every leaf.
pub fn adam_step_uniform(
    params: &mut ParamTree,
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    check_shapes(params, grads, state)?;
    apply(params, grads, state, &vec![lr; params.len()]);
    Ok(())
}
