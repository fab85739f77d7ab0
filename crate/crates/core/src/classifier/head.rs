use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{glorot, Matrix, MultiHeadAttention, NodeId, ParamSet, Tape};
use crate::scalar::Scalar;

/// Self-attention over the gathered token rows, then a bias-free `2 × d`
/// projection of the `<cls>` row.
#[derive(Debug, Clone)]
pub struct PoolingHead<T> {
    params: ParamSet<T>,
    attention: MultiHeadAttention,
    w: usize,
}

impl<T: Scalar> PoolingHead<T> {
    pub fn new<R: Rng>(dim: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if dim == 0 || heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::invalid("pooling head count must divide a positive hidden size"));
        }
        let mut params = ParamSet::new();
        let attention = MultiHeadAttention::new(&mut params, "pool.attention", dim, heads, rng);
        let w = params.push("pool.output", glorot(rng, 2, dim));
        Ok(PoolingHead { params, attention, w })
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    /// Attention parameter indices (query, key, value, output; weight then bias) and the output matrix index.
    pub fn layout(&self) -> ([usize; 8], usize) {
        (self.attention.param_indices(), self.w)
    }

    /// Logits (`1 × 2`) for encoder output `enc`, pooling `rows` with `rows[0]` the `<cls>` row.
    pub fn forward<'a>(&'a self, tape: &mut Tape<'a, T>, slot_offset: usize, enc: NodeId, rows: &[usize]) -> NodeId {
        let e_hat = tape.select_rows(enc, rows);
        let h = self.attention.forward(tape, &self.params, slot_offset, e_hat);
        let h_cls = tape.select_rows(h, &[0]);
        let w = tape.param(self.params.get(self.w), slot_offset + self.w);
        tape.matmul_t(h_cls, w)
    }
}

/// Linear-softmax layer on the `<cls>` row.
#[derive(Debug, Clone)]
pub struct LinearHead<T> {
    params: ParamSet<T>,
}

impl<T: Scalar> LinearHead<T> {
    pub fn new<R: Rng>(dim: usize, rng: &mut R) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("hidden size must be positive"));
        }
        Ok(Self::from_weights(glorot(rng, 2, dim), Matrix::zeros(1, 2)))
    }

    /// `weight` is `2 × d`, `bias` is `1 × 2`.
    pub fn from_weights(weight: Matrix<T>, bias: Matrix<T>) -> Self {
        assert_eq!(weight.rows(), 2, "linear head weight is 2 × d");
        assert_eq!(bias.shape(), (1, 2), "linear head bias is 1 × 2");
        let mut params = ParamSet::new();
        params.push("linear.weight", weight);
        params.push("linear.bias", bias);
        LinearHead { params }
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn forward<'a>(&'a self, tape: &mut Tape<'a, T>, slot_offset: usize, enc: NodeId) -> NodeId {
        let cls = tape.select_rows(enc, &[0]);
        let w = tape.param(self.params.get(0), slot_offset);
        let b = tape.param(self.params.get(1), slot_offset + 1);
        let logits = tape.matmul_t(cls, w);
        tape.add_row(logits, b)
    }
}

#[derive(Debug, Clone)]
pub enum ClassifierHead<T> {
    Pooling(PoolingHead<T>),
    Linear(LinearHead<T>),
}

impl<T: Scalar> ClassifierHead<T> {
    pub fn params(&self) -> &ParamSet<T> {
        match self {
            ClassifierHead::Pooling(h) => h.params(),
            ClassifierHead::Linear(h) => h.params(),
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        match self {
            ClassifierHead::Pooling(h) => h.params_mut(),
            ClassifierHead::Linear(h) => h.params_mut(),
        }
    }

    pub fn forward<'a>(&'a self, tape: &mut Tape<'a, T>, slot_offset: usize, enc: NodeId, rows: &[usize]) -> NodeId {
        match self {
            ClassifierHead::Pooling(h) => h.forward(tape, slot_offset, enc, rows),
            ClassifierHead::Linear(h) => h.forward(tape, slot_offset, enc),
        }
    }
}

pub(crate) fn softmax_pair<T: Scalar>(logits: &Matrix<T>) -> [T; 2] {
    let row = logits.row(0);
    let m = row[0].max(row[1]);
    let (a, b) = ((row[0] - m).exp(), (row[1] - m).exp());
    [a / (a + b), b / (a + b)]
}
