//! Finite-difference oracle shared by the gradient tests and the acceptance
//! suite.
//!
//! Each check projects the op output onto a fixed random direction, so the
//! scalar being differentiated depends on every output element.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trainscape::diffcore::{Tape, Tensor, Var};
use trainscape::model::{init_params, ModelConfig, TokenGrid, Transformer};

pub const TRIALS: usize = 100;
pub const STEP: f64 = 1e-5;
/// Relative errors are taken against max(|analytic|, |numeric|, FLOOR).
pub const FLOOR: f64 = 1e-3;
pub const TOL_DEFAULT: f64 = 1e-4;
pub const TOL_MATMUL: f64 = 1e-6;
pub const TOL_LAYER_NORM: f64 = 1e-5;

type Build = dyn Fn(&mut Tape, &[Var]) -> trainscape::Result<Var>;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Scalar `<build(inputs), direction>`; scalar outputs are used as is.
fn evaluate(inputs: &[Tensor], build: &Build, direction: Option<&Tensor>) -> (Tape, Var, Vec<Var>) {
    let mut tape = Tape::new();
    let leaves: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &leaves).unwrap();
    let scalar = match direction {
        None => out,
        Some(w) => {
            let n = tape.value(out).len();
            let flat = tape.reshape(out, &[1, n]).unwrap();
            let w = tape.leaf(w.reshaped(&[n, 1]).unwrap());
            let dot = tape.matmul(flat, w).unwrap();
            tape.sum(dot)
        }
    };
    (tape, scalar, leaves)
}

/// Largest relative error between backward and central differences over
/// all elements of all inputs marked differentiable.
fn max_rel_error(
    rng: &mut ChaCha8Rng,
    inputs: &[Tensor],
    differentiable: &[bool],
    build: &Build,
) -> f64 {
    let mut probe = Tape::new();
    let leaves: Vec<Var> = inputs.iter().map(|t| probe.leaf(t.clone())).collect();
    let out = build(&mut probe, &leaves).unwrap();
    let direction = if probe.value(out).is_scalar() {
        None
    } else {
        Some(random_tensor(rng, probe.value(out).shape()))
    };

    let (tape, scalar, leaves) = evaluate(inputs, build, direction.as_ref());
    let grads = tape.backward(scalar).unwrap();
    let value = |inputs: &[Tensor]| {
        let (tape, s, _) = evaluate(inputs, build, direction.as_ref());
        tape.value(s).item().unwrap()
    };

    let mut worst = 0.0f64;
    for (i, input) in inputs.iter().enumerate() {
        if !differentiable[i] {
            continue;
        }
        let analytic = grads.wrt(leaves[i]);
        for j in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += STEP;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= STEP;
            let numeric = (value(&plus) - value(&minus)) / (2.0 * STEP);
            let a = analytic.data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(err);
        }
    }
    worst
}

/// Worst relative error of one primitive over `TRIALS` random cases.
pub struct Check {
    pub name: &'static str,
    pub tol: f64,
    pub worst: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.worst < self.tol
    }
}

fn check(
    name: &'static str,
    tol: f64,
    mut trial: impl FnMut(&mut ChaCha8Rng) -> (Vec<Tensor>, Vec<bool>, Box<Build>),
) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    for _ in 0..TRIALS {
        let (inputs, diff, build) = trial(&mut rng);
        worst = worst.max(max_rel_error(&mut rng, &inputs, &diff, &build));
    }
    Check { name, tol, worst }
}

fn dim(rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(1..=4)
}

pub fn matmul_gradients() -> Vec<Check> {
    vec![check("matmul", TOL_MATMUL, |rng| {
        let (m, k, n) = (dim(rng), dim(rng), dim(rng));
        let a = if rng.random_bool(0.5) {
            random_tensor(rng, &[m, k])
        } else {
            random_tensor(rng, &[2, m, k])
        };
        let b = random_tensor(rng, &[k, n]);
        (
            vec![a, b],
            vec![true, true],
            Box::new(|t, v| t.matmul(v[0], v[1])),
        )
    })]
}

pub fn batch_matmul_gradients() -> Vec<Check> {
    vec![check("batch_matmul", TOL_MATMUL, |rng| {
        let (bs, m, k, n) = (dim(rng), dim(rng), dim(rng), dim(rng));
        let transpose = rng.random_bool(0.5);
        let a = random_tensor(rng, &[bs, m, k]);
        let b = if transpose {
            random_tensor(rng, &[bs, n, k])
        } else {
            random_tensor(rng, &[bs, k, n])
        };
        (
            vec![a, b],
            vec![true, true],
            Box::new(move |t, v| t.batch_matmul(v[0], v[1], transpose)),
        )
    })]
}

pub fn add_gradients_with_suffix_broadcast() -> Vec<Check> {
    vec![check("add", TOL_DEFAULT, |rng| {
        let shape = [dim(rng), dim(rng), dim(rng)];
        let cut = rng.random_range(0..3);
        let a = random_tensor(rng, &shape);
        let b = random_tensor(rng, &shape[cut..]);
        (
            vec![a, b],
            vec![true, true],
            Box::new(|t, v| t.add(v[0], v[1])),
        )
    })]
}

pub fn scale_gradients() -> Vec<Check> {
    vec![check("scale", TOL_DEFAULT, |rng| {
        let x = {
            let shape = [dim(rng), dim(rng)];
            random_tensor(rng, &shape)
        };
        let f: f64 = rng.random_range(-3.0..3.0);
        (
            vec![x],
            vec![true],
            Box::new(move |t, v| Ok(t.scale(v[0], f))),
        )
    })]
}

pub fn relu_gradients_away_from_the_kink() -> Vec<Check> {
    vec![check("relu", TOL_DEFAULT, |rng| {
        let mut x = {
            let shape = [dim(rng), dim(rng)];
            random_tensor(rng, &shape)
        };
        for v in x.data_mut() {
            if v.abs() < 1e-3 {
                *v = 0.5;
            }
        }
        (vec![x], vec![true], Box::new(|t, v| Ok(t.relu(v[0]))))
    })]
}

pub fn layer_norm_gradients() -> Vec<Check> {
    vec![check("layer_norm", TOL_LAYER_NORM, |rng| {
        let width = rng.random_range(2..=6);
        let x = {
            let shape = [dim(rng), width];
            random_tensor(rng, &shape)
        };
        let gain = random_tensor(rng, &[width]);
        let bias = random_tensor(rng, &[width]);
        (
            vec![x, gain, bias],
            vec![true, true, true],
            Box::new(|t, v| t.layer_norm(v[0], v[1], v[2], 1e-6)),
        )
    })]
}

pub fn softmax_gradients_on_every_axis() -> Vec<Check> {
    vec![check("softmax", TOL_DEFAULT, |rng| {
        let x = {
            let shape = [dim(rng), dim(rng), dim(rng)];
            random_tensor(rng, &shape)
        }
        .map(|v| 3.0 * v);
        let axis = rng.random_range(0..3);
        (
            vec![x],
            vec![true],
            Box::new(move |t, v| t.softmax(v[0], axis)),
        )
    })]
}

pub fn causal_mask_then_softmax_gradients() -> Vec<Check> {
    vec![check("causal_mask", TOL_DEFAULT, |rng| {
        let n = dim(rng);
        let x = {
            let shape = [dim(rng), n, n];
            random_tensor(rng, &shape)
        };
        (
            vec![x],
            vec![true],
            Box::new(|t, v| {
                let masked = t.causal_mask(v[0])?;
                t.softmax(masked, 2)
            }),
        )
    })]
}

pub fn embedding_gradients_accumulate_repeated_ids() -> Vec<Check> {
    vec![check("embedding", TOL_DEFAULT, |rng| {
        let (vocab, width) = (dim(rng) + 1, dim(rng));
        let table = random_tensor(rng, &[vocab, width]);
        let (b, s) = (dim(rng), dim(rng));
        let ids: Vec<usize> = (0..b * s).map(|_| rng.random_range(0..vocab)).collect();
        (
            vec![table],
            vec![true],
            Box::new(move |t, v| t.embedding(v[0], &ids, &[b, s])),
        )
    })]
}

pub fn reshape_and_head_permutation_gradients() -> Vec<Check> {
    vec![
        check("split/merge heads", TOL_DEFAULT, |rng| {
            let heads = rng.random_range(1..=3);
            let (b, t_len, d) = (dim(rng), dim(rng), dim(rng));
            let x = random_tensor(rng, &[b, t_len, heads * d]);
            (
                vec![x],
                vec![true],
                Box::new(move |t, v| {
                    let split = t.split_heads(v[0], heads)?;
                    let merged = t.merge_heads(split, heads)?;
                    t.reshape(merged, &[b * t_len, heads * d])
                }),
            )
        }),
        check("split heads alone", TOL_DEFAULT, |rng| {
            let heads = rng.random_range(1..=3);
            let x = {
                let shape = [dim(rng), dim(rng), heads * dim(rng)];
                random_tensor(rng, &shape)
            };
            (
                vec![x],
                vec![true],
                Box::new(move |t, v| t.split_heads(v[0], heads)),
            )
        }),
        check("merge heads alone", TOL_DEFAULT, |rng| {
            let heads = rng.random_range(1..=3);
            let x = {
                let shape = [heads * dim(rng), dim(rng), dim(rng)];
                random_tensor(rng, &shape)
            };
            (
                vec![x],
                vec![true],
                Box::new(move |t, v| t.merge_heads(v[0], heads)),
            )
        }),
    ]
}

pub fn cross_entropy_gradients() -> Vec<Check> {
    vec![check("cross_entropy", TOL_DEFAULT, |rng| {
        let (rows, vocab) = (dim(rng), dim(rng) + 1);
        let logits = random_tensor(rng, &[rows, vocab]).map(|v| 4.0 * v);
        let targets: Vec<usize> = (0..rows).map(|_| rng.random_range(0..vocab)).collect();
        (
            vec![logits],
            vec![true],
            Box::new(move |t, v| t.cross_entropy(v[0], &targets)),
        )
    })]
}

pub fn sum_gradients() -> Vec<Check> {
    vec![check("sum", TOL_DEFAULT, |rng| {
        let x = {
            let shape = [dim(rng), dim(rng)];
            random_tensor(rng, &shape)
        };
        (vec![x], vec![true], Box::new(|t, v| Ok(t.sum(v[0]))))
    })]
}

/// Every primitive check, in a fixed order.
pub fn all_primitives() -> Vec<Check> {
    [
        matmul_gradients(),
        batch_matmul_gradients(),
        add_gradients_with_suffix_broadcast(),
        scale_gradients(),
        relu_gradients_away_from_the_kink(),
        layer_norm_gradients(),
        softmax_gradients_on_every_axis(),
        causal_mask_then_softmax_gradients(),
        embedding_gradients_accumulate_repeated_ids(),
        reshape_and_head_permutation_gradients(),
        cross_entropy_gradients(),
        sum_gradients(),
    ]
    .into_iter()
    .flatten()
    .collect()
}

/// Every parameter of a small transformer against central differences of
/// the batch loss. Coordinates are sampled per trial to bound the runtime.
pub fn model_gradient_check(config: ModelConfig, trials: usize, coords_per_trial: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let model = Transformer::new(config.clone()).unwrap();
    let mut worst = 0.0f64;
    for trial in 0..trials {
        let mut params = init_params(&ModelConfig {
            seed: trial as u64,
            ..config.clone()
        })
        .unwrap();
        // Nonzero biases and non-unit gains exercise every path.
        for e in params.entries_mut() {
            for v in e.value.data_mut() {
                *v += rng.random_range(-0.2..0.2);
            }
        }
        let (b, s) = (2, config.context_len);
        let inputs: Vec<usize> = (0..b * s)
            .map(|_| rng.random_range(0..config.vocab_size))
            .collect();
        let targets: Vec<usize> = (0..b * s)
            .map(|_| rng.random_range(0..config.vocab_size))
            .collect();
        let grid = TokenGrid::new(&inputs, b, s).unwrap();
        let (_, grads) = model.loss_and_grads(&params, grid, &targets).unwrap();

        for _ in 0..coords_per_trial {
            let i = rng.random_range(0..params.len());
            let j = rng.random_range(0..params.entries()[i].value.len());
            let mut loss_at = |delta: f64| {
                params.entries_mut()[i].value.data_mut()[j] += delta;
                let l = model.batch_loss(&params, grid, &targets).unwrap();
                params.entries_mut()[i].value.data_mut()[j] -= delta;
                l
            };
            let numeric = (loss_at(STEP) - loss_at(-STEP)) / (2.0 * STEP);
            let a = grads[i].data()[j];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR));
        }
    }
    worst
}
