//! Minimal reverse-mode differentiable tensor core.
//!
//! Only the primitives the character transformer uses are provided: dense and
//! batched matrix products, suffix-broadcast addition, scaling, ReLU, layer
//! normalization, softmax, causal masking, embedding lookup, head
//! reshuffles, and fused softmax cross-entropy.

mod gemm;
mod tape;
mod tensor;

pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Default layer-normalization epsilon.
pub const LAYER_NORM_EPS: f64 = 1e-6;

/// Softmax of a plain tensor along `axis`, outside any tape.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.rank() {
        return Err(Error::Input(format!(
            "softmax axis {axis} out of range for shape {:?}",
            x.shape()
        )));
    }
    let out = tape::softmax_along(x.data(), x.shape(), axis);
    Ok(Tensor::from_parts(x.shape().to_vec(), out))
}

/// Matrix product of plain tensors, outside any tape.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (va, vb) = (tape.leaf(a.clone()), tape.leaf(b.clone()));
    let out = tape.matmul(va, vb)?;
    Ok(tape.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity_and_dot() {
        let id = t2(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let m = t2(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&id, &m).unwrap(), m);
        let r = matmul(&t2(&[&[1.0, 2.0]]), &t2(&[&[3.0], &[4.0]])).unwrap();
        assert_eq!(r.shape(), &[1, 1]);
        assert_eq!(r.data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let err = matmul(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2, 3])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3] vs [2, 3]"), "{msg}");
    }

    #[test]
    fn softmax_examples() {
        let s = softmax(&Tensor::from_vec(vec![0.0, 0.0]), 0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax(&Tensor::from_vec(vec![2f64.ln(), 0.0]), 0).unwrap();
        assert!((s.data()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.data()[1] - 1.0 / 3.0).abs() < 1e-15);
        let s = softmax(&Tensor::from_vec(vec![1000.0, 0.0]), 0).unwrap();
        assert_eq!(s.data(), &[1.0, 0.0]);
    }

    #[test]
    fn softmax_on_inner_axis() {
        let x = t2(&[&[0.0, 1.0], &[0.0, 1.0]]);
        let s = softmax(&x, 0).unwrap();
        assert_eq!(s.data(), &[0.5, 0.5, 0.5, 0.5]);
        assert!(softmax(&x, 2).is_err());
    }

    #[test]
    fn softmax_nan_propagates() {
        let s = softmax(&Tensor::from_vec(vec![f64::NAN, 0.0]), 0).unwrap();
        assert!(s.data().iter().all(|v| v.is_nan()));
    }

    #[test]
    fn layer_norm_examples() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![1.0, 3.0]));
        let g = tape.leaf(Tensor::filled(&[2], 1.0));
        let b = tape.leaf(Tensor::zeros(&[2]));
        let y = tape.layer_norm(x, g, b, 0.0).unwrap();
        assert_eq!(tape.value(y).data(), &[-1.0, 1.0]);

        let c = tape.leaf(Tensor::filled(&[2], 7.5));
        let y = tape.layer_norm(c, g, b, LAYER_NORM_EPS).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0]);

        let bad = tape.leaf(Tensor::zeros(&[3]));
        assert!(tape.layer_norm(bad, g, b, LAYER_NORM_EPS).is_err());
    }

    #[test]
    fn relu_values_and_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::from_vec(vec![-1.0, 0.0, 2.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).data(), &[0.0, 0.0, 1.0]);

        let neg = tape.leaf(Tensor::from_vec(vec![-3.0, -0.5]));
        let y = tape.relu(neg);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0]);
    }

    #[test]
    fn cross_entropy_uniform_is_ln_vocab() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::zeros(&[1, 2, 101]));
        let loss = tape.cross_entropy(logits, &[3, 100]).unwrap();
        let v = tape.value(loss).item().unwrap();
        assert!((v - 101f64.ln()).abs() < 1e-12);
        assert!((v - 4.61512).abs() < 1e-5);
    }

    #[test]
    fn cross_entropy_vanishes_with_margin() {
        let mut prev = f64::INFINITY;
        for margin in [1.0, 10.0, 100.0, 1000.0] {
            let mut tape = Tape::new();
            let logits = tape.leaf(Tensor::new(vec![1, 3], vec![margin, 0.0, 0.0]).unwrap());
            let loss = tape.cross_entropy(logits, &[0]).unwrap();
            let v = tape.value(loss).item().unwrap();
            assert!(v < prev && v >= 0.0);
            prev = v;
        }
        assert!(prev < 1e-300);
    }

    #[test]
    fn cross_entropy_rejects_bad_target() {
        let mut tape = Tape::new();
        let logits = tape.leaf(Tensor::zeros(&[2, 4]));
        assert!(matches!(
            tape.cross_entropy(logits, &[0, 4]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn backward_identity_and_unused_leaf() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let unused = tape.leaf(Tensor::from_vec(vec![1.0, 2.0]));
        let g = tape.backward(x).unwrap();
        assert_eq!(g.wrt(x).data(), &[1.0]);
        assert_eq!(g.wrt(unused).data(), &[0.0, 0.0]);
        assert!(g.get(unused).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn causal_mask_blocks_future() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[1, 3, 3]));
        let m = tape.causal_mask(x).unwrap();
        let p = tape.softmax(m, 2).unwrap();
        let rows: Vec<&[f64]> = tape.value(p).data().chunks(3).collect();
        assert_eq!(rows[0], &[1.0, 0.0, 0.0]);
        assert_eq!(rows[1], &[0.5, 0.5, 0.0]);
        assert!((rows[2][0] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn split_and_merge_heads_round_trip() {
        let mut tape = Tape::new();
        let data: Vec<f64> = (0..2 * 3 * 4).map(f64::from).collect();
        let x = tape.leaf(Tensor::new(vec![2, 3, 4], data).unwrap());
        let s = tape.split_heads(x, 2).unwrap();
        assert_eq!(tape.value(s).shape(), &[4, 3, 2]);
        // batch 0, head 1, time 0 holds features 2..4 of x[0,0].
        assert_eq!(&tape.value(s).data()[6..8], &[2.0, 3.0]);
        let m = tape.merge_heads(s, 2).unwrap();
        assert!(tape.value(m).bit_eq(tape.value(x)));
    }

    #[test]
    fn add_broadcasts_suffix_only() {
        let mut tape = Tape::new();
        let a = tape.leaf(Tensor::zeros(&[2, 3]));
        let b = tape.leaf(Tensor::from_vec(vec![1.0, 2.0, 3.0]));
        let c = tape.add(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let wrong = tape.leaf(Tensor::zeros(&[2]));
        assert!(tape.add(a, wrong).is_err());
        let s = tape.sum(c);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(b).data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn embedding_rejects_out_of_range() {
        let mut tape = Tape::new();
        let table = tape.leaf(Tensor::zeros(&[3, 2]));
        assert!(matches!(
            tape.embedding(table, &[0, 3], &[2]),
            Err(Error::Input(_))
        ));
    }
}
