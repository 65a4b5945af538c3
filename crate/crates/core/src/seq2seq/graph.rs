//! Reverse-mode differentiation over dense row-major `f64` matrices.
//!
//! A [`Graph`] records every operation of one forward pass. Parameters are
//! borrowed from a [`ParamStore`] rather than copied; [`Graph::backward`]
//! accumulates their gradients into a [`Grads`] buffer of matching shapes.

use alloc::vec;
use alloc::vec::Vec;

use super::params::{Grads, ParamStore};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    fn add_assign(&mut self, other: &Matrix) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }
}

/// `a * b`
fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.rows, "matmul shape mismatch");
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for k in 0..a.cols {
            let av = a.data[i * a.cols + k];
            if av == 0.0 {
                continue;
            }
            let b_row = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a * b^T`
fn matmul_bt(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols, b.cols, "matmul_bt shape mismatch");
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let a_row = a.row(i);
        for j in 0..b.rows {
            let b_row = b.row(j);
            out.data[i * b.rows + j] = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `a^T * b`
fn matmul_at(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.rows, b.rows, "matmul_at shape mismatch");
    let mut out = Matrix::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let a_row = a.row(k);
        let b_row = b.row(k);
        for (i, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose(a: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.cols, a.rows);
    for r in 0..a.rows {
        for c in 0..a.cols {
            out.data[c * a.rows + r] = a.data[r * a.cols + c];
        }
    }
    out
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::tanh(GELU_C * (x + GELU_A * x * x * x)))
}

fn gelu_grad(x: f64) -> f64 {
    let t = libm::tanh(GELU_C * (x + GELU_A * x * x * x));
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of one row; entries with `blocked` set get 0.
pub(crate) fn softmax_row(row: &[f64], blocked: Option<&[bool]>, out: &mut [f64]) {
    let open = |i: usize| blocked.is_none_or(|b| !b[i]);
    let max = row
        .iter()
        .enumerate()
        .filter(|(i, _)| open(*i))
        .map(|(_, &x)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        out.iter_mut().for_each(|o| *o = 0.0);
        return;
    }
    let mut sum = 0.0;
    for (i, (o, &x)) in out.iter_mut().zip(row).enumerate() {
        *o = if open(i) { libm::exp(x - max) } else { 0.0 };
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(usize),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Gelu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Gather(Var, Vec<usize>),
    LayerNorm(Var, Vec<f64>),
    Softmax(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SliceRows(Var, usize),
    Transpose(Var),
    MeanRows(Var),
    CrossEntropy(Var, Vec<usize>, Vec<f64>),
}

struct Node {
    op: Op,
    // `None` for parameters, whose value lives in the store.
    value: Option<Matrix>,
}

pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
}

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (Op::Param(idx), _) => &self.store.get(*idx).value,
            (_, Some(m)) => m,
            _ => unreachable!("non-parameter node without value"),
        }
    }

    pub fn param(&mut self, idx: usize) -> Var {
        self.nodes.push(Node {
            op: Op::Param(idx),
            value: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(Op::Constant, m)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = matmul(self.value(a), self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    /// `a * b^T`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = matmul_bt(self.value(a), self.value(b));
        self.push(Op::MatMulBt(a, b), v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert!(x.same_shape(y), "add shape mismatch");
        let mut v = x.clone();
        v.add_assign(y);
        self.push(Op::Add(a, b), v)
    }

    /// Adds a `1 x cols` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert!(r.rows == 1 && r.cols == x.cols, "add_row shape mismatch");
        let mut v = x.clone();
        for i in 0..v.rows {
            for (o, b) in v.row_mut(i).iter_mut().zip(&r.data) {
                *o += b;
            }
        }
        self.push(Op::AddRow(a, row), v)
    }

    /// Multiplies every row of `a` elementwise by a `1 x cols` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert!(r.rows == 1 && r.cols == x.cols, "mul_row shape mismatch");
        let mut v = x.clone();
        for i in 0..v.rows {
            for (o, b) in v.row_mut(i).iter_mut().zip(&r.data) {
                *o *= b;
            }
        }
        self.push(Op::MulRow(a, row), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert!(x.same_shape(y), "mul shape mismatch");
        let v = Matrix {
            rows: x.rows,
            cols: x.cols,
            data: x.data.iter().zip(&y.data).map(|(p, q)| p * q).collect(),
        };
        self.push(Op::Mul(a, b), v)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), v)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 1.0 - x);
        self.push(Op::OneMinus(a), v)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(gelu);
        self.push(Op::Gelu(a), v)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(libm::tanh);
        self.push(Op::Tanh(a), v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    /// Selects rows of `table` (typically an embedding parameter).
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let mut v = Matrix::zeros(ids.len(), t.cols);
        for (r, &id) in ids.iter().enumerate() {
            assert!(id < t.rows, "gather index {id} out of range {}", t.rows);
            v.row_mut(r).copy_from_slice(t.row(id));
        }
        self.push(Op::Gather(table, ids.to_vec()), v)
    }

    /// Row-wise standardization without gain or bias.
    pub fn layer_norm(&mut self, a: Var) -> Var {
        const EPS: f64 = 1e-5;
        let x = self.value(a);
        let mut v = Matrix::zeros(x.rows, x.cols);
        let mut inv_std = Vec::with_capacity(x.rows);
        let n = x.cols as f64;
        for r in 0..x.rows {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
            let is = 1.0 / libm::sqrt(var + EPS);
            for (o, y) in v.row_mut(r).iter_mut().zip(row) {
                *o = (y - mean) * is;
            }
            inv_std.push(is);
        }
        self.push(Op::LayerNorm(a, inv_std), v)
    }

    /// Row-wise softmax; `blocked[r * cols + c]` forces a zero probability.
    pub fn softmax(&mut self, a: Var, blocked: Option<Vec<bool>>) -> Var {
        let x = self.value(a);
        let mut v = Matrix::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let mask = blocked.as_ref().map(|b| &b[r * x.cols..(r + 1) * x.cols]);
            softmax_row(x.row(r), mask, v.row_mut(r));
        }
        self.push(Op::Softmax(a), v)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut v = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                v.data[r * cols + offset..r * cols + offset + m.cols].copy_from_slice(m.row(r));
            }
            offset += m.cols;
        }
        self.push(Op::ConcatCols(parts.to_vec()), v)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols, "slice_cols out of range");
        let mut v = Matrix::zeros(x.rows, len);
        for r in 0..x.rows {
            v.row_mut(r).copy_from_slice(&x.row(r)[start..start + len]);
        }
        self.push(Op::SliceCols(a, start), v)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let m = self.value(*p);
            assert_eq!(m.cols, cols, "concat_rows col mismatch");
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        self.push(Op::ConcatRows(parts.to_vec()), Matrix::from_vec(rows, cols, data))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.rows, "slice_rows out of range");
        let data = x.data[start * x.cols..(start + len) * x.cols].to_vec();
        let cols = x.cols;
        self.push(Op::SliceRows(a, start), Matrix::from_vec(len, cols, data))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = transpose(self.value(a));
        self.push(Op::Transpose(a), v)
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = Matrix::zeros(1, x.cols);
        for r in 0..x.rows {
            for (o, y) in v.data.iter_mut().zip(x.row(r)) {
                *o += y;
            }
        }
        let n = x.rows.max(1) as f64;
        v.data.iter_mut().for_each(|o| *o /= n);
        self.push(Op::MeanRows(a), v)
    }

    /// Weighted mean token cross-entropy of `logits` (one row per position)
    /// against `targets`. Positions with weight 0 are ignored. Yields a
    /// `1 x 1` node.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], weights: &[f64]) -> Var {
        let x = self.value(logits);
        assert_eq!(x.rows, targets.len(), "cross_entropy target count mismatch");
        assert_eq!(targets.len(), weights.len());
        let total: f64 = weights.iter().sum();
        let mut loss = 0.0;
        let mut probs = vec![0.0; x.cols];
        for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
            if w == 0.0 {
                continue;
            }
            softmax_row(x.row(r), None, &mut probs);
            loss -= w * libm::log(probs[t]);
        }
        let v = Matrix::from_vec(1, 1, vec![if total > 0.0 { loss / total } else { 0.0 }]);
        self.push(Op::CrossEntropy(logits, targets.to_vec(), weights.to_vec()), v)
    }

    /// Backpropagates from the scalar node `loss`, adding parameter gradients
    /// into `grads`.
    pub fn backward(&self, loss: Var, grads: &mut Grads) {
        let root = self.value(loss);
        assert!(root.rows == 1 && root.cols == 1, "backward needs a scalar root");
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = adj[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut acc = |v: Var, m: Matrix| match &mut adj[v.0] {
                Some(existing) => existing.add_assign(&m),
                slot @ None => *slot = Some(m),
            };
            match &node.op {
                Op::Constant => {}
                Op::Param(p) => grads.get_mut(*p).add_assign(&g),
                Op::MatMul(a, b) => {
                    acc(*a, matmul_bt(&g, self.value(*b)));
                    acc(*b, matmul_at(self.value(*a), &g));
                }
                Op::MatMulBt(a, b) => {
                    acc(*a, matmul(&g, self.value(*b)));
                    acc(*b, matmul_at(&g, self.value(*a)));
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::AddRow(a, row) => {
                    let mut dr = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (o, y) in dr.data.iter_mut().zip(g.row(r)) {
                            *o += y;
                        }
                    }
                    acc(*row, dr);
                    acc(*a, g);
                }
                Op::MulRow(a, row) => {
                    let x = self.value(*a);
                    let rv = self.value(*row);
                    let mut da = g.clone();
                    let mut dr = Matrix::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for c in 0..g.cols {
                            let gi = g.at(r, c);
                            da.data[r * g.cols + c] = gi * rv.data[c];
                            dr.data[c] += gi * x.at(r, c);
                        }
                    }
                    acc(*a, da);
                    acc(*row, dr);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let da = Matrix {
                        rows: g.rows,
                        cols: g.cols,
                        data: g.data.iter().zip(&y.data).map(|(p, q)| p * q).collect(),
                    };
                    let db = Matrix {
                        rows: g.rows,
                        cols: g.cols,
                        data: g.data.iter().zip(&x.data).map(|(p, q)| p * q).collect(),
                    };
                    acc(*a, da);
                    acc(*b, db);
                }
                Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
                Op::OneMinus(a) => acc(*a, g.map(|x| -x)),
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let d = Matrix {
                        rows: g.rows,
                        cols: g.cols,
                        data: g.data.iter().zip(&x.data).map(|(gi, &xi)| gi * gelu_grad(xi)).collect(),
                    };
                    acc(*a, d);
                }
                Op::Tanh(a) => {
                    let y = node.value.as_ref().unwrap();
                    let d = Matrix {
                        rows: g.rows,
                        cols: g.cols,
                        data: g.data.iter().zip(&y.data).map(|(gi, yi)| gi * (1.0 - yi * yi)).collect(),
                    };
                    acc(*a, d);
                }
                Op::Sigmoid(a) => {
                    let y = node.value.as_ref().unwrap();
                    let d = Matrix {
                        rows: g.rows,
                        cols: g.cols,
                        data: g.data.iter().zip(&y.data).map(|(gi, yi)| gi * yi * (1.0 - yi)).collect(),
                    };
                    acc(*a, d);
                }
                Op::Gather(table, ids) => {
                    let t = self.value(*table);
                    let mut d = Matrix::zeros(t.rows, t.cols);
                    for (r, &id) in ids.iter().enumerate() {
                        for (o, y) in d.row_mut(id).iter_mut().zip(g.row(r)) {
                            *o += y;
                        }
                    }
                    acc(*table, d);
                }
                Op::LayerNorm(a, inv_std) => {
                    let y = node.value.as_ref().unwrap();
                    let n = g.cols as f64;
                    let mut d = Matrix::zeros(g.rows, g.cols);
                    for (r, &s) in inv_std.iter().enumerate().take(g.rows) {
                        let gr = g.row(r);
                        let yr = y.row(r);
                        let mean_g = gr.iter().sum::<f64>() / n;
                        let mean_gy = gr.iter().zip(yr).map(|(p, q)| p * q).sum::<f64>() / n;
                        for (c, o) in d.row_mut(r).iter_mut().enumerate() {
                            *o = s * (gr[c] - mean_g - yr[c] * mean_gy);
                        }
                    }
                    acc(*a, d);
                }
                Op::Softmax(a) => {
                    let y = node.value.as_ref().unwrap();
                    let mut d = Matrix::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let gr = g.row(r);
                        let yr = y.row(r);
                        let dot: f64 = gr.iter().zip(yr).map(|(p, q)| p * q).sum();
                        for (c, o) in d.row_mut(r).iter_mut().enumerate() {
                            *o = yr[c] * (gr[c] - dot);
                        }
                    }
                    acc(*a, d);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).cols;
                        let mut d = Matrix::zeros(g.rows, w);
                        for r in 0..g.rows {
                            d.row_mut(r).copy_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        offset += w;
                        acc(*p, d);
                    }
                }
                Op::SliceCols(a, start) => {
                    let x = self.value(*a);
                    let mut d = Matrix::zeros(x.rows, x.cols);
                    for r in 0..g.rows {
                        d.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    acc(*a, d);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let h = self.value(*p).rows;
                        let data = g.data[offset * g.cols..(offset + h) * g.cols].to_vec();
                        offset += h;
                        acc(*p, Matrix::from_vec(h, g.cols, data));
                    }
                }
                Op::SliceRows(a, start) => {
                    let x = self.value(*a);
                    let mut d = Matrix::zeros(x.rows, x.cols);
                    d.data[start * x.cols..(start + g.rows) * x.cols].copy_from_slice(&g.data);
                    acc(*a, d);
                }
                Op::Transpose(a) => acc(*a, transpose(&g)),
                Op::MeanRows(a) => {
                    let x = self.value(*a);
                    let n = x.rows.max(1) as f64;
                    let mut d = Matrix::zeros(x.rows, x.cols);
                    for r in 0..x.rows {
                        for (o, y) in d.row_mut(r).iter_mut().zip(&g.data) {
                            *o = y / n;
                        }
                    }
                    acc(*a, d);
                }
                Op::CrossEntropy(logits, targets, weights) => {
                    let x = self.value(*logits);
                    let total: f64 = weights.iter().sum();
                    let mut d = Matrix::zeros(x.rows, x.cols);
                    if total > 0.0 {
                        let scale = g.data[0] / total;
                        for (r, (&t, &w)) in targets.iter().zip(weights).enumerate() {
                            if w == 0.0 {
                                continue;
                            }
                            let out = d.row_mut(r);
                            softmax_row(x.row(r), None, out);
                            out[t] -= 1.0;
                            out.iter_mut().for_each(|o| *o *= w * scale);
                        }
                    }
                    acc(*logits, d);
                }
            }
        }
    }
}
