//! Reverse-mode differentiation over a linear record of primitive applications.
//!
//! Every primitive evaluates eagerly and appends a node holding its output and
//! whatever it needs for the reverse pass. `backward` walks the record once,
//! newest to oldest, so each node is visited exactly once.

use super::gemm::gemm;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
    },
    BatchMatMul {
        a: Var,
        b: Var,
        transpose_b: bool,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        factor: f64,
    },
    Relu {
        x: Var,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    CausalMask {
        x: Var,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Reshape {
        x: Var,
    },
    SplitHeads {
        x: Var,
        heads: usize,
    },
    MergeHeads {
        x: Var,
        heads: usize,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    Sum {
        x: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// The computation record for one forward evaluation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar with respect to the leaves of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` if `v` did not influence the output.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`; exact zeros if `v` did not influence the output.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.get(v) {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    /// Moves the gradient for `v` out, zeros if absent.
    pub fn take(&mut self, v: Var) -> Tensor {
        match self.grads.get_mut(v.0).and_then(Option::take) {
            Some(g) => g,
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }
}

fn dim_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Dimension {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, contribution: Vec<f64>) {
    match slot {
        Some(existing) => {
            for (e, c) in existing.iter_mut().zip(contribution) {
                *e += c;
            }
        }
        None => *slot = Some(contribution),
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records an input value. Gradients are reported for every leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// `[m,k] × [k,n] → [m,n]`. Leading axes of `a` beyond the last are
    /// treated as rows: `[.., k] × [k,n] → [.., n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() < 2 || sb.len() != 2 || sa[sa.len() - 1] != sb[0] {
            return Err(dim_err("matmul", sa, sb));
        }
        let (k, n) = (sb[0], sb[1]);
        let m = self.value(a).len() / k;
        let mut shape = sa.to_vec();
        *shape.last_mut().expect("rank >= 2") = n;
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            &mut out,
            false,
        );
        Ok(self.push(Tensor::from_parts(shape, out), Op::MatMul { a, b }))
    }

    /// `[B,m,k] × [B,k,n] → [B,m,n]`, or `[B,m,k] × [B,n,k]ᵀ` with `transpose_b`.
    pub fn batch_matmul(&mut self, a: Var, b: Var, transpose_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(dim_err("batch_matmul", sa, sb));
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if transpose_b {
            (sb[2], sb[1])
        } else {
            (sb[1], sb[2])
        };
        if kb != k {
            return Err(dim_err("batch_matmul", sa, sb));
        }
        let mut out = vec![0.0; batch * m * n];
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        for i in 0..batch {
            gemm(
                m,
                k,
                n,
                &av[i * m * k..(i + 1) * m * k],
                false,
                &bv[i * k * n..(i + 1) * k * n],
                transpose_b,
                &mut out[i * m * n..(i + 1) * m * n],
                false,
            );
        }
        Ok(self.push(
            Tensor::from_parts(vec![batch, m, n], out),
            Op::BatchMatMul { a, b, transpose_b },
        ))
    }

    /// Elementwise sum. `b`'s shape must equal `a`'s or be a trailing suffix of
    /// it, in which case `b` is repeated over the leading axes (bias rows,
    /// positional tables).
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(dim_err("add", sa, sb));
        }
        let bv = self.value(b).data();
        let mut data = self.value(a).data().to_vec();
        for chunk in data.chunks_exact_mut(bv.len()) {
            for (x, y) in chunk.iter_mut().zip(bv) {
                *x += y;
            }
        }
        let shape = sa.to_vec();
        Ok(self.push(Tensor::from_parts(shape, data), Op::Add { a, b }))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        self.push(value, Op::Scale { x, factor })
    }

    /// `max(0, x)` elementwise; the subgradient at 0 is 0.
    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v < 0.0 { 0.0 } else { v });
        self.push(value, Op::Relu { x })
    }

    /// Normalizes each vector along the last axis to zero mean and unit
    /// (population) variance, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let width = *sx.last().ok_or_else(|| dim_err("layer_norm", &sx, &[]))?;
        for p in [gain, bias] {
            if self.shape(p) != [width] {
                return Err(dim_err("layer_norm", &sx, self.shape(p)));
            }
        }
        let xv = self.value(x).data();
        let g = self.value(gain).data();
        let bvals = self.value(bias).data();
        let rows = xv.len() / width;
        let mut xhat = vec![0.0; xv.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; xv.len()];
        for r in 0..rows {
            let row = &xv[r * width..(r + 1) * width];
            let mean = row.iter().sum::<f64>() / width as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
            let s = 1.0 / (var + eps).sqrt();
            rstd[r] = s;
            for c in 0..width {
                let h = (row[c] - mean) * s;
                xhat[r * width + c] = h;
                out[r * width + c] = h * g[c] + bvals[c];
            }
        }
        Ok(self.push(
            Tensor::from_parts(sx, out),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
        ))
    }

    /// Softmax along `axis`, stabilized by subtracting the per-vector maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if axis >= sx.len() {
            return Err(Error::Input(format!(
                "softmax axis {axis} out of range for shape {sx:?}"
            )));
        }
        let out = softmax_along(self.value(x).data(), &sx, axis);
        Ok(self.push(Tensor::from_parts(sx, out), Op::Softmax { x, axis }))
    }

    /// Sets entries strictly above the diagonal of the two trailing axes to −∞.
    pub fn causal_mask(&mut self, x: Var) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let r = sx.len();
        if r < 2 || sx[r - 1] != sx[r - 2] {
            return Err(dim_err("causal_mask", &sx, &sx));
        }
        let t = sx[r - 1];
        let mut data = self.value(x).data().to_vec();
        for block in data.chunks_mut(t * t) {
            for i in 0..t {
                for v in &mut block[i * t + i + 1..(i + 1) * t] {
                    *v = f64::NEG_INFINITY;
                }
            }
        }
        Ok(self.push(Tensor::from_parts(sx, data), Op::CausalMask { x }))
    }

    /// Gathers rows of `table` (`[vocab, width]`); output shape is
    /// `ids_shape ++ [width]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize], ids_shape: &[usize]) -> Result<Var> {
        let st = self.shape(table).to_vec();
        if st.len() != 2 || ids_shape.iter().product::<usize>() != ids.len() {
            return Err(dim_err("embedding", &st, ids_shape));
        }
        let (vocab, width) = (st[0], st[1]);
        if let Some(&bad) = ids.iter().find(|&&id| id >= vocab) {
            return Err(Error::Input(format!(
                "token id {bad} out of range for vocabulary of {vocab}"
            )));
        }
        let tv = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * width);
        for &id in ids {
            out.extend_from_slice(&tv[id * width..(id + 1) * width]);
        }
        let mut shape = ids_shape.to_vec();
        shape.push(width);
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshaped(shape)?;
        Ok(self.push(value, Op::Reshape { x }))
    }

    /// `[B, T, H·D] → [B·H, T, D]`.
    pub fn split_heads(&mut self, x: Var, heads: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 || heads == 0 || !sx[2].is_multiple_of(heads) {
            return Err(dim_err("split_heads", &sx, &[heads]));
        }
        let (b, t, w) = (sx[0], sx[1], sx[2]);
        let d = w / heads;
        let out = permute_heads(self.value(x).data(), b, t, heads, d, true);
        Ok(self.push(
            Tensor::from_parts(vec![b * heads, t, d], out),
            Op::SplitHeads { x, heads },
        ))
    }

    /// `[B·H, T, D] → [B, T, H·D]`.
    pub fn merge_heads(&mut self, x: Var, heads: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 3 || heads == 0 || !sx[0].is_multiple_of(heads) {
            return Err(dim_err("merge_heads", &sx, &[heads]));
        }
        let (bh, t, d) = (sx[0], sx[1], sx[2]);
        let b = bh / heads;
        let out = permute_heads(self.value(x).data(), b, t, heads, d, false);
        Ok(self.push(
            Tensor::from_parts(vec![b, t, heads * d], out),
            Op::MergeHeads { x, heads },
        ))
    }

    /// Mean over all leading positions of `−log softmax(logits)[target]`,
    /// softmax taken over the last axis.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let sl = self.shape(logits).to_vec();
        let vocab = *sl
            .last()
            .ok_or_else(|| dim_err("cross_entropy", &sl, &[]))?;
        let rows = self.value(logits).len() / vocab;
        if targets.len() != rows {
            return Err(dim_err("cross_entropy", &sl, &[targets.len()]));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= vocab) {
            return Err(Error::Input(format!(
                "target id {bad} out of range for vocabulary of {vocab}"
            )));
        }
        let lv = self.value(logits).data();
        let mut probs = vec![0.0; lv.len()];
        let mut total = 0.0;
        for (r, &target) in targets.iter().enumerate() {
            let row = &lv[r * vocab..(r + 1) * vocab];
            let (top, max) =
                row.iter()
                    .copied()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, v)| {
                        if v > best.1 {
                            (i, v)
                        } else {
                            best
                        }
                    });
            // Sum over everything but the top entry, so a confident row keeps
            // its tiny loss through ln_1p instead of cancelling to zero.
            let mut rest = 0.0;
            for (i, (p, &v)) in probs[r * vocab..(r + 1) * vocab]
                .iter_mut()
                .zip(row)
                .enumerate()
            {
                *p = (v - max).exp();
                if i != top {
                    rest += *p;
                }
            }
            let z = 1.0 + rest;
            for p in &mut probs[r * vocab..(r + 1) * vocab] {
                *p /= z;
            }
            total += (max - row[target]) + rest.ln_1p();
        }
        let loss = total / rows as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum { x })
    }

    /// Replays the record in reverse from the scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out_value = self.value(output);
        if !out_value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar output, got shape {:?}",
                out_value.shape()
            )));
        }
        let n = output.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
        grads.resize_with(n, || None);
        grads[output.0] = Some(vec![1.0]);
        let mut leaf_grads: Vec<Option<Tensor>> = Vec::with_capacity(n);
        leaf_grads.resize_with(n, || None);

        for idx in (0..n).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    leaf_grads[idx] = Some(Tensor::from_parts(node.value.shape().to_vec(), g));
                }
                Op::MatMul { a, b } => {
                    let sb = self.shape(*b);
                    let (k, nn) = (sb[0], sb[1]);
                    let m = self.value(*a).len() / k;
                    let mut ga = vec![0.0; m * k];
                    gemm(
                        m,
                        nn,
                        k,
                        &g,
                        false,
                        self.value(*b).data(),
                        true,
                        &mut ga,
                        false,
                    );
                    let mut gb = vec![0.0; k * nn];
                    gemm(
                        k,
                        m,
                        nn,
                        self.value(*a).data(),
                        true,
                        &g,
                        false,
                        &mut gb,
                        false,
                    );
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::BatchMatMul { a, b, transpose_b } => {
                    let sa = self.shape(*a);
                    let (batch, m, k) = (sa[0], sa[1], sa[2]);
                    let nn = node.value.shape()[2];
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    let mut ga = vec![0.0; batch * m * k];
                    let mut gb = vec![0.0; batch * k * nn];
                    for i in 0..batch {
                        let gi = &g[i * m * nn..(i + 1) * m * nn];
                        let ai = &av[i * m * k..(i + 1) * m * k];
                        let bi = &bv[i * k * nn..(i + 1) * k * nn];
                        let ga_i = &mut ga[i * m * k..(i + 1) * m * k];
                        let gb_i = &mut gb[i * k * nn..(i + 1) * k * nn];
                        if *transpose_b {
                            // C = A·Bᵀ with B stored [n,k]: dA = dC·B, dB = dCᵀ·A.
                            gemm(m, nn, k, gi, false, bi, false, ga_i, false);
                            gemm(nn, m, k, gi, true, ai, false, gb_i, false);
                        } else {
                            gemm(m, nn, k, gi, false, bi, true, ga_i, false);
                            gemm(k, m, nn, ai, true, gi, false, gb_i, false);
                        }
                    }
                    accumulate(&mut grads[a.0], ga);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Add { a, b } => {
                    let period = self.value(*b).len();
                    let mut gb = vec![0.0; period];
                    for chunk in g.chunks_exact(period) {
                        for (acc, v) in gb.iter_mut().zip(chunk) {
                            *acc += v;
                        }
                    }
                    accumulate(&mut grads[a.0], g);
                    accumulate(&mut grads[b.0], gb);
                }
                Op::Scale { x, factor } => {
                    let gx = g.iter().map(|v| v * factor).collect();
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Relu { x } => {
                    let xv = self.value(*x).data();
                    let gx = g
                        .iter()
                        .zip(xv)
                        .map(|(&gv, &xv)| if xv > 0.0 { gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads[x.0], gx);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    rstd,
                } => {
                    let gv = self.value(*gain).data();
                    let width = gv.len();
                    let rows = g.len() / width;
                    let mut gx = vec![0.0; g.len()];
                    let mut ggain = vec![0.0; width];
                    let mut gbias = vec![0.0; width];
                    for r in 0..rows {
                        let span = r * width..(r + 1) * width;
                        let (gr, hr) = (&g[span.clone()], &xhat[span.clone()]);
                        let mut mean_d = 0.0;
                        let mut mean_dh = 0.0;
                        for c in 0..width {
                            let d = gr[c] * gv[c];
                            mean_d += d;
                            mean_dh += d * hr[c];
                            ggain[c] += gr[c] * hr[c];
                            gbias[c] += gr[c];
                        }
                        mean_d /= width as f64;
                        mean_dh /= width as f64;
                        for c in 0..width {
                            let d = gr[c] * gv[c];
                            gx[r * width + c] = rstd[r] * (d - mean_d - hr[c] * mean_dh);
                        }
                    }
                    accumulate(&mut grads[x.0], gx);
                    accumulate(&mut grads[gain.0], ggain);
                    accumulate(&mut grads[bias.0], gbias);
                }
                Op::Softmax { x, axis } => {
                    let gx = softmax_backward(node.value.data(), &g, node.value.shape(), *axis);
                    accumulate(&mut grads[x.0], gx);
                }
                Op::CausalMask { x } => {
                    let t = *node.value.shape().last().unwrap_or(&1);
                    let mut gx = g;
                    for block in gx.chunks_mut(t * t) {
                        for i in 0..t {
                            block[i * t + i + 1..(i + 1) * t].fill(0.0);
                        }
                    }
                    accumulate(&mut grads[x.0], gx);
                }
                Op::Embedding { table, ids } => {
                    let st = self.shape(*table);
                    let width = st[1];
                    let mut gt = vec![0.0; st[0] * width];
                    for (row, &id) in ids.iter().enumerate() {
                        for c in 0..width {
                            gt[id * width + c] += g[row * width + c];
                        }
                    }
                    accumulate(&mut grads[table.0], gt);
                }
                Op::Reshape { x } => accumulate(&mut grads[x.0], g),
                Op::SplitHeads { x, heads } => {
                    let s = self.shape(*x);
                    let (b, t, w) = (s[0], s[1], s[2]);
                    let gx = permute_heads(&g, b, t, *heads, w / heads, false);
                    accumulate(&mut grads[x.0], gx);
                }
                Op::MergeHeads { x, heads } => {
                    let s = self.shape(*x);
                    let (bh, t, d) = (s[0], s[1], s[2]);
                    let gx = permute_heads(&g, bh / heads, t, *heads, d, true);
                    accumulate(&mut grads[x.0], gx);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    probs,
                } => {
                    let rows = targets.len();
                    let vocab = probs.len() / rows;
                    let scale = g[0] / rows as f64;
                    let mut gl: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                    for (r, &t) in targets.iter().enumerate() {
                        gl[r * vocab + t] -= scale;
                    }
                    accumulate(&mut grads[logits.0], gl);
                }
                Op::Sum { x } => {
                    let gx = vec![g[0]; self.value(*x).len()];
                    accumulate(&mut grads[x.0], gx);
                }
            }
        }

        // Every node, so leaves recorded after `output` get zero gradients.
        let shapes = self
            .nodes
            .iter()
            .map(|node| node.value.shape().to_vec())
            .collect();
        Ok(Gradients {
            grads: leaf_grads,
            shapes,
        })
    }
}

fn axis_layout(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let len = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

pub(crate) fn softmax_along(x: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let (outer, len, inner) = axis_layout(shape, axis);
    let mut out = vec![0.0; x.len()];
    if inner == 1 {
        for (row, dst) in x.chunks_exact(len).zip(out.chunks_exact_mut(len)) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (d, &v) in dst.iter_mut().zip(row) {
                *d = (v - max).exp();
                z += *d;
            }
            for d in dst.iter_mut() {
                *d /= z;
            }
        }
        return out;
    }
    for o in 0..outer {
        for j in 0..inner {
            let at = |i: usize| (o * len + i) * inner + j;
            let max = (0..len).map(|i| x[at(i)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for i in 0..len {
                let e = (x[at(i)] - max).exp();
                out[at(i)] = e;
                z += e;
            }
            for i in 0..len {
                out[at(i)] /= z;
            }
        }
    }
    out
}

fn softmax_backward(y: &[f64], g: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let (outer, len, inner) = axis_layout(shape, axis);
    let mut gx = vec![0.0; y.len()];
    if inner == 1 {
        for ((yr, gr), dst) in y
            .chunks_exact(len)
            .zip(g.chunks_exact(len))
            .zip(gx.chunks_exact_mut(len))
        {
            let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
            for ((d, &yv), &gv) in dst.iter_mut().zip(yr).zip(gr) {
                *d = yv * (gv - dot);
            }
        }
        return gx;
    }
    for o in 0..outer {
        for j in 0..inner {
            let at = |i: usize| (o * len + i) * inner + j;
            let dot: f64 = (0..len).map(|i| g[at(i)] * y[at(i)]).sum();
            for i in 0..len {
                gx[at(i)] = y[at(i)] * (g[at(i)] - dot);
            }
        }
    }
    gx
}

/// Moves data between `[B, T, H, D]` (merged) and `[B, H, T, D]` (split) layouts.
fn permute_heads(x: &[f64], b: usize, t: usize, h: usize, d: usize, to_split: bool) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for bi in 0..b {
        for ti in 0..t {
            for hi in 0..h {
                let merged = ((bi * t + ti) * h + hi) * d;
                let split = ((bi * h + hi) * t + ti) * d;
                let (src, dst) = if to_split {
                    (merged, split)
                } else {
                    (split, merged)
                };
                out[dst..dst + d].copy_from_slice(&x[src..src + d]);
            }
        }
    }
    out
}
