use rand::Rng;

use super::matrix::Matrix;
use super::params::{glorot, ParamSet};
use super::tape::{NodeId, Tape};
use crate::scalar::Scalar;

/// Standard multi-head self-attention with biased Q/K/V/O projections.
///
/// Holds indices into a caller-owned [`ParamSet`].
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    heads: usize,
    dim: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Scalar, R: Rng>(
        params: &mut ParamSet<T>,
        prefix: &str,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Self {
        assert!(heads > 0 && dim.is_multiple_of(heads), "head count must divide the dimension");
        let mut proj = |name: &str, params: &mut ParamSet<T>| {
            let w = params.push(format!("{prefix}.{name}.weight"), glorot(rng, dim, dim));
            let b = params.push(format!("{prefix}.{name}.bias"), Matrix::zeros(1, dim));
            (w, b)
        };
        let (wq, bq) = proj("query", params);
        let (wk, bk) = proj("key", params);
        let (wv, bv) = proj("value", params);
        let (wo, bo) = proj("output", params);
        MultiHeadAttention {
            heads,
            dim,
            wq,
            bq,
            wk,
            bk,
            wv,
            bv,
            wo,
            bo,
        }
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    /// Parameter indices in creation order.
    pub fn param_indices(&self) -> [usize; 8] {
        [self.wq, self.bq, self.wk, self.bk, self.wv, self.bv, self.wo, self.bo]
    }

    /// Self-attention over the rows of `x`; `slot_offset` maps parameter
    /// indices to gradient slots.
    pub fn forward<'a, T: Scalar>(
        &self,
        tape: &mut Tape<'a, T>,
        params: &'a ParamSet<T>,
        slot_offset: usize,
        x: NodeId,
    ) -> NodeId {
        let linear = |tape: &mut Tape<'a, T>, input: NodeId, w: usize, b: usize| {
            let wn = tape.param(params.get(w), slot_offset + w);
            let bn = tape.param(params.get(b), slot_offset + b);
            let y = tape.matmul(input, wn);
            tape.add_row(y, bn)
        };
        let q = linear(tape, x, self.wq, self.bq);
        let k = linear(tape, x, self.wk, self.bk);
        let v = linear(tape, x, self.wv, self.bv);

        let head_dim = self.dim / self.heads;
        let scale = T::one() / T::of_usize(head_dim).sqrt();
        let mut outputs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice_cols(q, h * head_dim, head_dim);
            let kh = tape.slice_cols(k, h * head_dim, head_dim);
            let vh = tape.slice_cols(v, h * head_dim, head_dim);
            let scores = tape.matmul_t(qh, kh);
            let scores = tape.scale(scores, scale);
            let weights = tape.softmax(scores);
            outputs.push(tape.matmul(weights, vh));
        }
        let joined = if outputs.len() == 1 {
            outputs[0]
        } else {
            tape.concat_cols(&outputs)
        };
        linear(tape, joined, self.wo, self.bo)
    }
}
