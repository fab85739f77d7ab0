//! Reverse-mode differentiation over matrix-valued nodes.
//!
//! A [`Tape`] records one forward pass. Parameters enter as borrowed leaves
//! tagged with a gradient slot; [`Tape::backward`] returns the gradient of a
//! scalar objective for every slot it reached.

use super::matrix::{axpy, dot, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Value<'a, T> {
    Owned(Matrix<T>),
    Borrowed(&'a Matrix<T>),
}

enum Op<T> {
    Constant,
    Param(usize),
    Embed { slot: usize, rows: usize, ids: Vec<usize> },
    MatMul(NodeId, NodeId),
    MatMulT(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, T),
    Softmax(NodeId),
    LayerNorm { x: NodeId, gamma: NodeId, beta: NodeId, xhat: Matrix<T>, inv_std: Vec<T> },
    Gelu(NodeId),
    SelectRows(NodeId, Vec<usize>),
    SliceCols(NodeId, usize),
    ConcatCols(Vec<NodeId>),
}

struct Node<'a, T> {
    value: Value<'a, T>,
    op: Op<T>,
}

/// Per-slot parameter gradients.
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    slots: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> Default for Gradients<T> {
    fn default() -> Self {
        Gradients { slots: Vec::new() }
    }
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, slot: usize) -> Option<&Matrix<T>> {
        self.slots.get(slot).and_then(Option::as_ref)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.iter().all(Option::is_none)
    }

    fn entry(&mut self, slot: usize, rows: usize, cols: usize) -> &mut Matrix<T> {
        if self.slots.len() <= slot {
            self.slots.resize(slot + 1, None);
        }
        self.slots[slot].get_or_insert_with(|| Matrix::zeros(rows, cols))
    }

    pub fn add(&mut self, slot: usize, g: &Matrix<T>) {
        self.entry(slot, g.rows(), g.cols()).add_assign(g);
    }

    pub fn accumulate(&mut self, other: &Gradients<T>) {
        for (slot, g) in other.slots.iter().enumerate() {
            if let Some(g) = g {
                self.add(slot, g);
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for g in self.slots.iter_mut().flatten() {
            g.scale_assign(s);
        }
    }

    pub fn norm(&self) -> T {
        self.slots
            .iter()
            .flatten()
            .map(Matrix::sum_squares)
            .sum::<T>()
            .sqrt()
    }
}

const LN_EPS: f64 = 1e-5;

pub struct Tape<'a, T> {
    nodes: Vec<Node<'a, T>>,
}

impl<T: Scalar> Default for Tape<'_, T> {
    fn default() -> Self {
        Tape { nodes: Vec::new() }
    }
}

impl<'a, T: Scalar> Tape<'a, T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, id: NodeId) -> &Matrix<T> {
        match &self.nodes[id.0].value {
            Value::Owned(m) => m,
            Value::Borrowed(m) => m,
        }
    }

    fn push(&mut self, value: Matrix<T>, op: Op<T>) -> NodeId {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, m: Matrix<T>) -> NodeId {
        self.push(m, Op::Constant)
    }

    pub fn param(&mut self, m: &'a Matrix<T>, slot: usize) -> NodeId {
        self.nodes.push(Node {
            value: Value::Borrowed(m),
            op: Op::Param(slot),
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Row gather from a parameter table.
    pub fn embed(&mut self, table: &'a Matrix<T>, slot: usize, ids: &[usize]) -> NodeId {
        let mut out = Matrix::zeros(ids.len(), table.cols());
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(table.row(id));
        }
        self.push(
            out,
            Op::Embed {
                slot,
                rows: table.rows(),
                ids: ids.to_vec(),
            },
        )
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul_t(self.value(b));
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    /// Adds the `1 × c` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: NodeId, bias: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        let b = self.value(bias);
        assert_eq!((1, v.cols()), b.shape(), "bias shape mismatch");
        for r in 0..v.rows() {
            for (x, &y) in v.row_mut(r).iter_mut().zip(b.row(0)) {
                *x += y;
            }
        }
        self.push(v, Op::AddRow(a, bias))
    }

    pub fn scale(&mut self, a: NodeId, s: T) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        self.push(v, Op::Scale(a, s))
    }

    /// Row-wise softmax.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        for r in 0..v.rows() {
            softmax_in_place(v.row_mut(r));
        }
        self.push(v, Op::Softmax(a))
    }

    /// Row-wise layer normalization with `1 × c` gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId) -> NodeId {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let n = T::of_usize(cols);
        let mut xhat = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<T>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let is = T::one() / (var + T::of(LN_EPS)).sqrt();
            for (o, &v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let g = self.value(gamma).row(0);
        let b = self.value(beta).row(0);
        let mut out = xhat.clone();
        for r in 0..rows {
            for ((o, &gi), &bi) in out.row_mut(r).iter_mut().zip(g).zip(b) {
                *o = *o * gi + bi;
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn select_rows(&mut self, a: NodeId, rows: &[usize]) -> NodeId {
        let src = self.value(a);
        let mut v = Matrix::zeros(rows.len(), src.cols());
        for (o, &r) in rows.iter().enumerate() {
            v.row_mut(o).copy_from_slice(src.row(r));
        }
        self.push(v, Op::SelectRows(a, rows.to_vec()))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let src = self.value(a);
        let mut v = Matrix::zeros(src.rows(), len);
        for r in 0..src.rows() {
            v.row_mut(r).copy_from_slice(&src.row(r)[start..start + len]);
        }
        self.push(v, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut v = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let pv = self.value(p);
            assert_eq!(pv.rows(), rows, "concat row mismatch");
            for r in 0..rows {
                v.row_mut(r)[offset..offset + pv.cols()].copy_from_slice(pv.row(r));
            }
            offset += pv.cols();
        }
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    /// Back-propagates `seed = ∂objective/∂root` and returns parameter gradients.
    pub fn backward(&self, root: NodeId, seed: Matrix<T>) -> Gradients<T> {
        assert_eq!(seed.shape(), self.value(root).shape(), "seed shape mismatch");
        let mut grads: Vec<Option<Matrix<T>>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(seed);
        let mut out = Gradients::default();

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let mut send = |id: NodeId, contrib: Matrix<T>| match &mut grads[id.0] {
                Some(acc) => acc.add_assign(&contrib),
                slot @ None => *slot = Some(contrib),
            };
            match &self.nodes[idx].op {
                Op::Constant => {}
                Op::Param(slot) => out.add(*slot, &g),
                Op::Embed { slot, rows, ids } => {
                    let acc = out.entry(*slot, *rows, g.cols());
                    for (r, &id) in ids.iter().enumerate() {
                        axpy(acc.row_mut(id), T::one(), g.row(r));
                    }
                }
                Op::MatMul(a, b) => {
                    send(*a, g.matmul_t(self.value(*b)));
                    send(*b, self.value(*a).t_matmul(&g));
                }
                Op::MatMulT(a, b) => {
                    send(*a, g.matmul(self.value(*b)));
                    send(*b, g.t_matmul(self.value(*a)));
                }
                Op::Add(a, b) => {
                    send(*b, g.clone());
                    send(*a, g);
                }
                Op::AddRow(a, bias) => {
                    send(*bias, column_sums(&g));
                    send(*a, g);
                }
                Op::Scale(a, s) => send(*a, g.map(|x| x * *s)),
                Op::Softmax(a) => {
                    let y = self.value(NodeId(idx));
                    let mut dx = g;
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let inner = dot(dx.row(r), yr);
                        for (d, &yi) in dx.row_mut(r).iter_mut().zip(yr) {
                            *d = yi * (*d - inner);
                        }
                    }
                    send(*a, dx);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gv = self.value(*gamma).row(0);
                    let cols = xhat.cols();
                    let n = T::of_usize(cols);
                    let mut dgamma = Matrix::zeros(1, cols);
                    let mut dx = Matrix::zeros(xhat.rows(), cols);
                    for (r, &istd) in inv_std.iter().enumerate() {
                        let gr = g.row(r);
                        let xr = xhat.row(r);
                        let dxhat: Vec<T> = gr.iter().zip(gv).map(|(&a, &b)| a * b).collect();
                        for ((dg, &gi), &xi) in dgamma.row_mut(0).iter_mut().zip(gr).zip(xr) {
                            *dg += gi * xi;
                        }
                        let mean_d = dxhat.iter().copied().sum::<T>() / n;
                        let mean_dx = dot(&dxhat, xr) / n;
                        for ((o, &d), &xi) in dx.row_mut(r).iter_mut().zip(&dxhat).zip(xr) {
                            *o = istd * (d - mean_d - xi * mean_dx);
                        }
                    }
                    send(*beta, column_sums(&g));
                    send(*gamma, dgamma);
                    send(*x, dx);
                }
                Op::Gelu(a) => {
                    let xv = self.value(*a);
                    let mut dx = g;
                    for (d, &x) in dx.as_mut_slice().iter_mut().zip(xv.as_slice()) {
                        *d *= gelu_grad(x);
                    }
                    send(*a, dx);
                }
                Op::SelectRows(a, rows) => {
                    let src = self.value(*a);
                    let mut dx = Matrix::zeros(src.rows(), src.cols());
                    for (o, &r) in rows.iter().enumerate() {
                        axpy(dx.row_mut(r), T::one(), g.row(o));
                    }
                    send(*a, dx);
                }
                Op::SliceCols(a, start) => {
                    let src = self.value(*a);
                    let mut dx = Matrix::zeros(src.rows(), src.cols());
                    for r in 0..g.rows() {
                        dx.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    send(*a, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let cols = self.value(p).cols();
                        let mut dp = Matrix::zeros(g.rows(), cols);
                        for r in 0..g.rows() {
                            dp.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        offset += cols;
                        send(p, dp);
                    }
                }
            }
        }
        out
    }
}

fn column_sums<T: Scalar>(g: &Matrix<T>) -> Matrix<T> {
    let mut s = Matrix::zeros(1, g.cols());
    for r in 0..g.rows() {
        axpy(s.row_mut(0), T::one(), g.row(r));
    }
    s
}

/// Numerically stable in-place softmax; `-inf` entries get probability zero.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
}

/// Log-softmax of a score vector.
pub fn log_softmax<T: Scalar>(scores: &[T]) -> Vec<T> {
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = scores.iter().map(|&x| (x - max).exp()).sum::<T>().ln() + max;
    scores.iter().map(|&x| x - lse).collect()
}

fn gelu_consts<T: Scalar>() -> (T, T) {
    (T::of((2.0 / std::f64::consts::PI).sqrt()), T::of(0.044715))
}

fn gelu<T: Scalar>(x: T) -> T {
    let (c, a) = gelu_consts::<T>();
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let (c, a) = gelu_consts::<T>();
    let half = T::of(0.5);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::of(3.0) * a * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Objective `Σ w ⊙ f(params)` with fixed random weights `w`.
    fn check<F>(params: Vec<Matrix<f64>>, f: F)
    where
        F: for<'a> Fn(&mut Tape<'a, f64>, &[NodeId]) -> NodeId,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let eval = |ps: &[Matrix<f64>]| {
            let mut tape = Tape::new();
            let ids: Vec<NodeId> = ps.iter().enumerate().map(|(i, p)| tape.param(p, i)).collect();
            let out = f(&mut tape, &ids);
            tape.value(out).clone()
        };
        let out0 = eval(&params);
        let w = random(&mut rng, out0.rows(), out0.cols());
        let objective = |ps: &[Matrix<f64>]| {
            dot(eval(ps).as_slice(), w.as_slice())
        };
        let grads = {
            let mut tape = Tape::new();
            let ids: Vec<NodeId> = params.iter().enumerate().map(|(i, p)| tape.param(p, i)).collect();
            let out = f(&mut tape, &ids);
            tape.backward(out, w.clone())
        };
        let h = 1e-5;
        for (slot, p) in params.iter().enumerate() {
            for e in 0..p.as_slice().len() {
                let mut plus = params.clone();
                plus[slot].as_mut_slice()[e] += h;
                let mut minus = params.clone();
                minus[slot].as_mut_slice()[e] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                let an = grads.get(slot).map_or(0.0, |g| g.as_slice()[e]);
                assert!(
                    (fd - an).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "slot {slot} entry {e}: analytic {an} vs numeric {fd}"
                );
            }
        }
    }

    #[test]
    fn matmul_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        check(vec![random(&mut rng, 3, 4), random(&mut rng, 4, 2)], |t, p| t.matmul(p[0], p[1]));
        check(vec![random(&mut rng, 3, 4), random(&mut rng, 5, 4)], |t, p| t.matmul_t(p[0], p[1]));
    }

    #[test]
    fn elementwise_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        check(vec![random(&mut rng, 3, 4), random(&mut rng, 1, 4)], |t, p| {
            let a = t.add_row(p[0], p[1]);
            let b = t.gelu(a);
            let c = t.add(b, p[0]);
            t.scale(c, 0.7)
        });
    }

    #[test]
    fn softmax_and_norm_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        check(vec![random(&mut rng, 3, 5)], |t, p| t.softmax(p[0]));
        check(
            vec![random(&mut rng, 3, 5), random(&mut rng, 1, 5), random(&mut rng, 1, 5)],
            |t, p| t.layer_norm(p[0], p[1], p[2]),
        );
    }

    #[test]
    fn structural_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        check(vec![random(&mut rng, 4, 6)], |t, p| {
            let a = t.slice_cols(p[0], 1, 3);
            let b = t.slice_cols(p[0], 4, 2);
            let c = t.concat_cols(&[b, a]);
            t.select_rows(c, &[3, 0, 3])
        });
    }

    #[test]
    fn embedding_grads_scatter() {
        let table = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        let mut tape = Tape::new();
        let e = tape.embed(&table, 0, &[2, 0, 2]);
        assert_eq!(tape.value(e).row(0), &[5.0, 6.0]);
        let g = tape.backward(e, Matrix::filled(3, 2, 1.0));
        assert_eq!(g.get(0).unwrap().as_slice(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn log_softmax_handles_neg_infinity() {
        let lp = log_softmax(&[0.0, f64::NEG_INFINITY, 0.0]);
        assert!((lp[0] - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(lp[1], f64::NEG_INFINITY);
    }
}
