//! Reverse-mode tape. Nodes are appended in evaluation order, so walking the
//! node list backwards is a valid topological order for backpropagation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernels;
use super::tensor::Tensor;
use super::LAYER_NORM_EPS;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Arithmetic precision of forward values. `F32` rounds every op output to
/// single precision; gradients stay in `f64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Transpose(Var),
    SoftmaxRows(Var),
    LayerNormRows { x: Var, inv_std: Vec<f64> },
    Gelu(Var),
    GatherRows(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Sum(Var),
    Mean(Var),
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
    Dropout { x: Var, mask: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    precision: Precision,
}

/// Gradients of the leaves reachable from a loss.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// `None` when the variable did not receive any gradient.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn dims(t: &Tensor) -> (usize, usize) {
    (t.rows(), t.cols())
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_precision(precision: Precision) -> Self {
        Graph {
            nodes: Vec::new(),
            precision,
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, mut value: Tensor, op: Op, requires_grad: bool) -> Var {
        if self.precision == Precision::F32 {
            for v in value.data_mut() {
                *v = *v as f32 as f64;
            }
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.item()
    }

    /// A trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A leaf that never receives gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Same value, no gradient path back to `v`.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.nodes[v.0].value.clone();
        self.push(value, Op::Leaf, false)
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a);
        let out = Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|v| v * s).collect());
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, s), rg)
    }

    fn row_broadcast(&mut self, x: Var, row: Var, name: &'static str, mul: bool) -> Result<Var> {
        let (tx, tr) = (self.value(x), self.value(row));
        if tr.len() != tx.cols() {
            return Err(mismatch(name, tx, tr));
        }
        let cols = tx.cols();
        let r = tr.data();
        let data = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| if mul { v * r[i % cols] } else { v + r[i % cols] })
            .collect();
        let out = Tensor::from_parts(tx.shape().to_vec(), data);
        let rg = self.rg(x) || self.rg(row);
        let op = if mul { Op::MulRow(x, row) } else { Op::AddRow(x, row) };
        Ok(self.push(out, op, rg))
    }

    /// `x + row` broadcast over rows (bias add).
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        self.row_broadcast(x, row, "add_row", false)
    }

    /// `x * row` broadcast over rows (per-feature gain).
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        self.row_broadcast(x, row, "mul_row", true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let ((m, k), (k2, n)) = (dims(ta), dims(tb));
        if k != k2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let out = Tensor::from_parts(vec![m, n], kernels::matmul(ta.data(), tb.data(), m, k, n));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `a * b^T`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let ((m, k), (n, k2)) = (dims(ta), dims(tb));
        if k != k2 {
            return Err(mismatch("matmul_t", ta, tb));
        }
        let out = Tensor::from_parts(vec![m, n], kernels::matmul_bt(ta.data(), tb.data(), m, k, n));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMulT(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (m, n) = dims(t);
        let out = Tensor::from_parts(vec![n, m], kernels::transpose(t.data(), m, n));
        let rg = self.rg(a);
        self.push(out, Op::Transpose(a), rg)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor::from_parts(t.shape().to_vec(), kernels::softmax_rows(t.data(), t.cols()));
        let rg = self.rg(a);
        self.push(out, Op::SoftmaxRows(a), rg)
    }

    /// Row standardisation without affine parameters.
    pub fn layer_norm_rows(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (data, inv_std) = kernels::layer_norm_rows(t.data(), t.cols(), LAYER_NORM_EPS);
        let out = Tensor::from_parts(t.shape().to_vec(), data);
        let rg = self.rg(a);
        self.push(out, Op::LayerNormRows { x: a, inv_std }, rg)
    }

    /// `gamma * norm(x) + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let n = self.layer_norm_rows(x);
        let s = self.mul_row(n, gamma)?;
        self.add_row(s, beta)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor::from_parts(t.shape().to_vec(), t.data().iter().map(|v| kernels::gelu(*v)).collect());
        let rg = self.rg(a);
        self.push(out, Op::Gelu(a), rg)
    }

    /// Selects rows of a 2-D tensor (embedding lookup).
    pub fn gather_rows(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (rows, cols) = dims(t);
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::ShapeMismatch {
                op: "gather_rows",
                left: t.shape().to_vec(),
                right: vec![bad],
            });
        }
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(t.row_slice(i));
        }
        let out = Tensor::from_parts(vec![indices.len(), cols], data);
        let rg = self.rg(table);
        Ok(self.push(out, Op::GatherRows(table, indices.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = self.value(*p);
            if t.cols() != cols {
                return Err(mismatch("concat_rows", self.value(parts[0]), t));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(Tensor::from_parts(vec![rows, cols], data), Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        let mut total = 0;
        for p in parts {
            let t = self.value(*p);
            if t.rows() != rows {
                return Err(mismatch("concat_cols", self.value(parts[0]), t));
            }
            total += t.cols();
        }
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row_slice(r));
            }
        }
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(Tensor::from_parts(vec![rows, total], data), Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        let (rows, cols) = dims(t);
        if start > end || end > rows {
            return Err(Error::SpanOutOfBounds { start, end, len: rows });
        }
        let data = t.data()[start * cols..end * cols].to_vec();
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(vec![end - start, cols], data), Op::SliceRows(a, start), rg))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        let (rows, cols) = dims(t);
        if start > end || end > cols {
            return Err(Error::SpanOutOfBounds { start, end, len: cols });
        }
        let mut data = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            data.extend_from_slice(&t.row_slice(r)[start..end]);
        }
        let rg = self.rg(a);
        Ok(self.push(Tensor::from_parts(vec![rows, end - start], data), Op::SliceCols(a, start), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Mean over rows of `-log softmax(row)[target]`, evaluated in log space.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        let (rows, cols) = dims(t);
        if rows != targets.len() {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                left: t.shape().to_vec(),
                right: vec![targets.len()],
            });
        }
        if rows == 0 {
            return Err(Error::NoMaskedPositions);
        }
        if let Some(&bad) = targets.iter().find(|&&c| c >= cols) {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                left: t.shape().to_vec(),
                right: vec![bad],
            });
        }
        let mut loss = 0.0;
        let mut probs = Vec::with_capacity(rows * cols);
        for (r, &target) in targets.iter().enumerate() {
            let row = t.row_slice(r);
            let lse = kernels::log_sum_exp(row);
            loss += lse - row[target];
            probs.extend(row.iter().map(|v| (v - lse).exp()));
        }
        let value = Tensor::scalar(loss / rows as f64);
        let rg = self.rg(logits);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Inverted dropout; identity when `rate == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Var {
        if rate <= 0.0 {
            return a;
        }
        let keep = 1.0 - rate;
        let t = self.value(a);
        let mask: Vec<f64> = (0..t.len())
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let data = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::from_parts(t.shape().to_vec(), data);
        let rg = self.rg(a);
        self.push(out, Op::Dropout { x: a, mask }, rg)
    }

    /// `softmax(q k^T / sqrt(d_head)) v`, with `n_heads` column blocks.
    pub fn multi_head_attention(&mut self, q: Var, k: Var, v: Var, n_heads: usize) -> Result<Var> {
        let d = self.value(q).cols();
        if n_heads == 0 || d % n_heads != 0 {
            return Err(Error::InvalidConfig(format!("{d} columns do not split into {n_heads} heads")));
        }
        let dh = d / n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(n_heads);
        for h in 0..n_heads {
            let (qh, kh, vh) = if n_heads == 1 {
                (q, k, v)
            } else {
                (
                    self.slice_cols(q, h * dh, (h + 1) * dh)?,
                    self.slice_cols(k, h * dh, (h + 1) * dh)?,
                    self.slice_cols(v, h * dh, (h + 1) * dh)?,
                )
            };
            let scores = self.matmul_t(qh, kh)?;
            let scores = self.scale(scores, scale);
            let attn = self.softmax_rows(scores);
            heads.push(self.matmul(attn, vh)?);
        }
        if n_heads == 1 {
            Ok(heads[0])
        } else {
            self.concat_cols(&heads)
        }
    }

    /// Backpropagates from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        if self.rg(loss) {
            grads[loss.0] = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients {
            grads: grads
                .into_iter()
                .enumerate()
                .map(|(i, g)| g.map(|g| Tensor::from_parts(self.nodes[i].value.shape().to_vec(), g)))
                .collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, contribution: Vec<f64>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (e, c) in existing.iter_mut().zip(contribution) {
                    *e += c;
                }
            }
            slot => *slot = Some(contribution),
        }
    }

    /// Adds `f(i)` into the gradient of `v` without allocating a contribution.
    fn accumulate_with(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl Fn(usize) -> f64) {
        if !self.rg(v) {
            return;
        }
        let n = self.value(v).len();
        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; n]);
        for (i, e) in slot.iter_mut().enumerate() {
            *e += f(i);
        }
    }

    fn propagate(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate_with(grads, *a, |i| g[i]);
                self.accumulate_with(grads, *b, |i| g[i]);
            }
            Op::Sub(a, b) => {
                self.accumulate_with(grads, *a, |i| g[i]);
                self.accumulate_with(grads, *b, |i| -g[i]);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate_with(grads, *a, |i| g[i] * vb[i]);
                self.accumulate_with(grads, *b, |i| g[i] * va[i]);
            }
            Op::Scale(a, s) => self.accumulate_with(grads, *a, |i| g[i] * s),
            Op::AddRow(x, row) => {
                self.accumulate_with(grads, *x, |i| g[i]);
                if self.rg(*row) {
                    let cols = out.cols();
                    let mut acc = vec![0.0; cols];
                    for (i, gv) in g.iter().enumerate() {
                        acc[i % cols] += gv;
                    }
                    self.accumulate(grads, *row, acc);
                }
            }
            Op::MulRow(x, row) => {
                let cols = out.cols();
                let (vx, vr) = (self.value(*x).data(), self.value(*row).data());
                self.accumulate_with(grads, *x, |i| g[i] * vr[i % cols]);
                if self.rg(*row) {
                    let mut acc = vec![0.0; cols];
                    for (i, gv) in g.iter().enumerate() {
                        acc[i % cols] += gv * vx[i];
                    }
                    self.accumulate(grads, *row, acc);
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ((m, k), n) = (dims(ta), tb.cols());
                if self.rg(*a) {
                    self.accumulate(grads, *a, kernels::matmul_bt(g, tb.data(), m, n, k));
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, kernels::matmul_at(ta.data(), g, m, k, n));
                }
            }
            Op::MatMulT(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ((m, k), n) = (dims(ta), tb.rows());
                if self.rg(*a) {
                    self.accumulate(grads, *a, kernels::matmul(g, tb.data(), m, n, k));
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, kernels::matmul_at(g, ta.data(), m, n, k));
                }
            }
            Op::Transpose(a) => {
                let (m, n) = dims(out);
                self.accumulate(grads, *a, kernels::transpose(g, m, n));
            }
            Op::SoftmaxRows(a) => {
                let cols = out.cols();
                let y = out.data();
                let mut dx = vec![0.0; y.len()];
                for r in 0..out.rows() {
                    let s = r * cols..(r + 1) * cols;
                    let inner: f64 = g[s.clone()].iter().zip(&y[s.clone()]).map(|(a, b)| a * b).sum();
                    for i in s {
                        dx[i] = y[i] * (g[i] - inner);
                    }
                }
                self.accumulate(grads, *a, dx);
            }
            Op::LayerNormRows { x, inv_std } => {
                let cols = out.cols();
                let n = cols as f64;
                let y = out.data();
                let mut dx = vec![0.0; y.len()];
                for (r, inv) in inv_std.iter().enumerate() {
                    let s = r * cols..(r + 1) * cols;
                    let sum_g: f64 = g[s.clone()].iter().sum();
                    let sum_gy: f64 = g[s.clone()].iter().zip(&y[s.clone()]).map(|(a, b)| a * b).sum();
                    for i in s {
                        dx[i] = inv / n * (n * g[i] - sum_g - y[i] * sum_gy);
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Gelu(a) => {
                let va = self.value(*a).data();
                self.accumulate_with(grads, *a, |i| g[i] * kernels::gelu_grad(va[i]));
            }
            Op::GatherRows(table, idx) => {
                if self.rg(*table) {
                    let cols = out.cols();
                    let n = self.value(*table).len();
                    let slot = grads[table.0].get_or_insert_with(|| vec![0.0; n]);
                    for (r, &i) in idx.iter().enumerate() {
                        for c in 0..cols {
                            slot[i * cols + c] += g[r * cols + c];
                        }
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    self.accumulate(grads, *p, g[offset..offset + len].to_vec());
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let total = out.cols();
                let mut offset = 0;
                for p in parts {
                    let (rows, cols) = dims(self.value(*p));
                    if self.rg(*p) {
                        let mut part = Vec::with_capacity(rows * cols);
                        for r in 0..rows {
                            part.extend_from_slice(&g[r * total + offset..r * total + offset + cols]);
                        }
                        self.accumulate(grads, *p, part);
                    }
                    offset += cols;
                }
            }
            Op::SliceRows(a, start) => {
                let cols = out.cols();
                let base = start * cols;
                self.accumulate_with(grads, *a, |i| {
                    if i >= base && i < base + g.len() {
                        g[i - base]
                    } else {
                        0.0
                    }
                });
            }
            Op::SliceCols(a, start) => {
                let width = out.cols();
                let cols = self.value(*a).cols();
                self.accumulate_with(grads, *a, |i| {
                    let (r, c) = (i / cols, i % cols);
                    if c >= *start && c < start + width {
                        g[r * width + c - start]
                    } else {
                        0.0
                    }
                });
            }
            Op::Sum(a) => self.accumulate_with(grads, *a, |_| g[0]),
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                self.accumulate_with(grads, *a, |_| g[0] / n);
            }
            Op::CrossEntropy { logits, targets, probs } => {
                let cols = self.value(*logits).cols();
                let scale = g[0] / targets.len() as f64;
                let mut dx: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (r, t) in targets.iter().enumerate() {
                    dx[r * cols + t] -= scale;
                }
                self.accumulate(grads, *logits, dx);
            }
            Op::Dropout { x, mask } => self.accumulate_with(grads, *x, |i| g[i] * mask[i]),
        }
    }
}
