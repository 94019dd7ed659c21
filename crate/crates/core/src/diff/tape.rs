//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive applied to its variables in evaluation
//! order. [`Tape::backward`] walks the record in reverse, returns the
//! gradients of all leaves that require them and clears the tape; it can run
//! only once per tape.

use std::ops::Range;
use std::sync::Arc;

use super::matrix::Matrix;
use super::sparse::SparsePattern;
use crate::error::{Error, Result};

const ENTROPY_EPS: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// A trainable (or constant) matrix living outside any tape.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    value: Matrix,
    grad: Option<Matrix>,
}

impl Tensor {
    /// A tensor that takes part in differentiation; its gradient starts at zero.
    pub fn parameter(value: Matrix) -> Self {
        let grad = Some(Matrix::zeros(value.rows(), value.cols()));
        Self { value, grad }
    }

    pub fn constant(value: Matrix) -> Self {
        Self { value, grad: None }
    }

    pub fn requires_grad(&self) -> bool {
        self.grad.is_some()
    }

    pub fn value(&self) -> &Matrix {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Matrix {
        &mut self.value
    }

    pub fn grad(&self) -> Option<&Matrix> {
        self.grad.as_ref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut Matrix> {
        self.grad.as_mut()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Hadamard(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Log(Var),
    Exp(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    RowNormalize(Var),
    Transpose(Var),
    Sum(Var),
    Mean(Var),
    SumSquares(Var),
    BinaryEntropy(Var),
    GatherRows(Var, Arc<Vec<usize>>),
    ConcatRows(Var, Var),
    SegmentMeanRows(Var, Arc<Vec<Range<usize>>>),
    CrossEntropy(Var, Arc<Vec<(usize, usize)>>),
    Spmm {
        coef: Var,
        x: Var,
        pattern: Arc<SparsePattern>,
    },
    SegmentSoftmax(Var, Arc<SparsePattern>),
    GcnAggregate {
        weights: Var,
        h: Var,
        pattern: Arc<SparsePattern>,
        self_weight: f64,
        dinv: Vec<f64>,
        degree: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    requires_grad: bool,
    op: Op,
}

/// Gradients produced by one backward pass, keyed by leaf [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Matrix> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Adds the gradient of `var` into the tensor's gradient buffer.
    pub fn accumulate_into(&self, var: Var, tensor: &mut Tensor) -> Result<()> {
        if let (Some(g), Some(buf)) = (self.get(var), tensor.grad_mut()) {
            buf.add_assign(g)?;
        }
        Ok(())
    }
}

/// Recording of primitive operations for reverse-mode differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Matrix {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    fn push(&mut self, value: Matrix, requires_grad: bool, op: Op) -> Result<Var> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Result<Var> {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, value: Matrix) -> Result<Var> {
        self.leaf(value, false)
    }

    /// Records the current value of `tensor` as a leaf.
    pub fn watch(&mut self, tensor: &Tensor) -> Result<Var> {
        self.leaf(tensor.value().clone(), tensor.requires_grad())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(&[a, b]);
        self.push(v, rg, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        self.push(v, rg, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        self.push(v, rg, Op::Sub(a, b))
    }

    /// `a + 1 row` broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(Error::Shape(format!(
                "add_row: {:?} with row {:?}",
                x.shape(),
                r.shape()
            )));
        }
        let v = Matrix::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) + r.get(0, j));
        let rg = self.rg(&[a, row]);
        self.push(v, rg, Op::AddRow(a, row))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        self.push(v, rg, Op::Hadamard(a, b))
    }

    /// `a ⊙ row` with the row broadcast over the rows of `a`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (x, r) = (self.value(a), self.value(row));
        if r.rows() != 1 || r.cols() != x.cols() {
            return Err(Error::Shape(format!(
                "mul_row: {:?} with row {:?}",
                x.shape(),
                r.shape()
            )));
        }
        let v = Matrix::from_fn(x.rows(), x.cols(), |i, j| x.get(i, j) * r.get(0, j));
        let rg = self.rg(&[a, row]);
        self.push(v, rg, Op::MulRow(a, row))
    }

    pub fn scalar_mul(&mut self, a: Var, s: f64) -> Result<Var> {
        let v = self.value(a).scale(s);
        let rg = self.rg(&[a]);
        self.push(v, rg, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        let v = self.value(a).map(|x| x + s);
        let rg = self.rg(&[a]);
        self.push(v, rg, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(&[a]);
        self.push(v, rg, Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        let rg = self.rg(&[a]);
        self.push(v, rg, Op::LeakyRelu(a, slope))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(sigmoid);
        let rg = self.rg(&[a]);
        self.push(v, rg, Op::Sigmoid(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::ln);
        let rg = self.rg(&[a]);
        self.push(v, rg, Op::Log(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f64::exp);
        let rg = self.rg(&[a]);
        self.push(v, rg, Op::Exp(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let v = softmax_rows(self.value(a));
        let rg = self.rg(&[a]);
        self.push(v, rg, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let mut v = x.clone();
        for i in 0..x.rows() {
            let lse = log_sum_exp(x.row(i));
            v.row_mut(i).iter_mut().for_each(|y| *y -= lse);
        }
        let rg = self.rg(&[a]);
        self.push(v, rg, Op::LogSoftmaxRows(a))
    }

    /// Divides every row by its sum.
    pub fn row_normalize(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let mut v = x.clone();
        for i in 0..x.rows() {
            let s: f64 = x.row(i).iter().sum();
            v.row_mut(i).iter_mut().for_each(|y| *y /= s);
        }
        let rg = self.rg(&[a]);
        self.push(v, rg, Op::RowNormalize(a))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).transpose();
        let rg = self.rg(&[a]);
        self.push(v, rg, Op::Transpose(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = Matrix::scalar(self.value(a).sum());
        let rg = self.rg(&[a]);
        self.push(v, rg, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(Error::Shape("mean of an empty matrix".into()));
        }
        let v = Matrix::scalar(x.sum() / x.len() as f64);
        let rg = self.rg(&[a]);
        self.push(v, rg, Op::Mean(a))
    }

    /// Squared Frobenius norm.
    pub fn sum_squares(&mut self, a: Var) -> Result<Var> {
        let v = Matrix::scalar(self.value(a).data().iter().map(|x| x * x).sum());
        let rg = self.rg(&[a]);
        self.push(v, rg, Op::SumSquares(a))
    }

    /// Element-wise binary entropy `-p ln p - (1-p) ln(1-p)` of probabilities.
    pub fn binary_entropy(&mut self, p: Var) -> Result<Var> {
        let v = self.value(p).map(|x| {
            let x = x.clamp(ENTROPY_EPS, 1.0 - ENTROPY_EPS);
            -x * x.ln() - (1.0 - x) * (1.0 - x).ln()
        });
        let rg = self.rg(&[p]);
        self.push(v, rg, Op::BinaryEntropy(p))
    }

    /// Output row `k` is row `index[k]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: Arc<Vec<usize>>) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::Shape(format!(
                "gather_rows: index {bad} out of {} rows",
                x.rows()
            )));
        }
        let mut data = Vec::with_capacity(index.len() * x.cols());
        for &i in index.iter() {
            data.extend_from_slice(x.row(i));
        }
        let v = Matrix::from_vec(index.len(), x.cols(), data)?;
        let rg = self.rg(&[a]);
        self.push(v, rg, Op::GatherRows(a, index))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.cols() {
            return Err(Error::Shape(format!(
                "concat_rows: {:?} and {:?}",
                x.shape(),
                y.shape()
            )));
        }
        let mut data = x.data().to_vec();
        data.extend_from_slice(y.data());
        let v = Matrix::from_vec(x.rows() + y.rows(), x.cols(), data)?;
        let rg = self.rg(&[a, b]);
        self.push(v, rg, Op::ConcatRows(a, b))
    }

    /// Mean of each row range; one output row per segment.
    pub fn segment_mean_rows(&mut self, a: Var, segments: Arc<Vec<Range<usize>>>) -> Result<Var> {
        let x = self.value(a);
        let mut v = Matrix::zeros(segments.len(), x.cols());
        for (s, seg) in segments.iter().enumerate() {
            if seg.is_empty() || seg.end > x.rows() {
                return Err(Error::Shape(format!(
                    "segment {seg:?} invalid for {} rows",
                    x.rows()
                )));
            }
            let inv = 1.0 / seg.len() as f64;
            for i in seg.clone() {
                for (o, &y) in v.row_mut(s).iter_mut().zip(x.row(i)) {
                    *o += y;
                }
            }
            v.row_mut(s).iter_mut().for_each(|o| *o *= inv);
        }
        let rg = self.rg(&[a]);
        self.push(v, rg, Op::SegmentMeanRows(a, segments))
    }

    /// Mean negative log-likelihood of `(row, class)` targets under a row softmax of `logits`.
    pub fn cross_entropy(&mut self, logits: Var, targets: Arc<Vec<(usize, usize)>>) -> Result<Var> {
        let x = self.value(logits);
        if targets.is_empty() {
            return Err(Error::Shape("cross_entropy without targets".into()));
        }
        let mut total = 0.0;
        for &(r, c) in targets.iter() {
            if r >= x.rows() || c >= x.cols() {
                return Err(Error::Shape(format!(
                    "cross_entropy target ({r}, {c}) outside {:?}",
                    x.shape()
                )));
            }
            total += log_sum_exp(x.row(r)) - x.get(r, c);
        }
        let v = Matrix::scalar(total / targets.len() as f64);
        let rg = self.rg(&[logits]);
        self.push(v, rg, Op::CrossEntropy(logits, targets))
    }

    /// Sparse-times-dense product: `out[i] = Σ_e coef[e] * x[col(e)]` over entries of row `i`.
    pub fn spmm(&mut self, coef: Var, pattern: Arc<SparsePattern>, x: Var) -> Result<Var> {
        let (c, xv) = (self.value(coef), self.value(x));
        if c.shape() != (pattern.nnz(), 1) || xv.rows() != pattern.n() {
            return Err(Error::Shape(format!(
                "spmm: coefficients {:?}, features {:?}, pattern n={} nnz={}",
                c.shape(),
                xv.shape(),
                pattern.n(),
                pattern.nnz()
            )));
        }
        let k = xv.cols();
        let mut v = Matrix::zeros(pattern.n(), k);
        for i in 0..pattern.n() {
            let out = v.row_mut(i);
            for e in pattern.row_range(i) {
                let w = c.data()[e];
                for (o, &y) in out.iter_mut().zip(xv.row(pattern.col_of(e))) {
                    *o += w * y;
                }
            }
        }
        let rg = self.rg(&[coef, x]);
        self.push(v, rg, Op::Spmm { coef, x, pattern })
    }

    /// Softmax over the entries of each pattern row.
    pub fn segment_softmax(&mut self, scores: Var, pattern: Arc<SparsePattern>) -> Result<Var> {
        let s = self.value(scores);
        if s.shape() != (pattern.nnz(), 1) {
            return Err(Error::Shape(format!(
                "segment_softmax: scores {:?} for nnz {}",
                s.shape(),
                pattern.nnz()
            )));
        }
        let mut v = Matrix::zeros(pattern.nnz(), 1);
        for i in 0..pattern.n() {
            let r = pattern.row_range(i);
            if r.is_empty() {
                continue;
            }
            let seg = &s.data()[r.clone()];
            let max = seg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for (o, &x) in v.data_mut()[r.clone()].iter_mut().zip(seg) {
                *o = (x - max).exp();
                z += *o;
            }
            v.data_mut()[r].iter_mut().for_each(|o| *o /= z);
        }
        let rg = self.rg(&[scores]);
        self.push(v, rg, Op::SegmentSoftmax(scores, pattern))
    }

    /// Symmetrically normalized aggregation `D^{-1/2} (W + s I) D^{-1/2} H`.
    ///
    /// `weights` holds one value per off-diagonal entry of `pattern`, `s` is
    /// `self_weight`, and the degree of node `i` is
    /// `s + extra_degree[i] + Σ_j W[i, j]`. Nodes with zero degree receive no
    /// messages. The diagonal term is accumulated at its sorted column
    /// position so that results do not depend on how a node set was indexed
    /// as long as the relative order of node ids is preserved.
    pub fn gcn_aggregate(
        &mut self,
        weights: Var,
        pattern: Arc<SparsePattern>,
        h: Var,
        self_weight: f64,
        extra_degree: &[f64],
    ) -> Result<Var> {
        let (w, hv) = (self.value(weights), self.value(h));
        let n = pattern.n();
        if w.shape() != (pattern.nnz(), 1) || hv.rows() != n || extra_degree.len() != n {
            return Err(Error::Shape(format!(
                "gcn_aggregate: weights {:?}, features {:?}, pattern n={} nnz={}, extra {}",
                w.shape(),
                hv.shape(),
                n,
                pattern.nnz(),
                extra_degree.len()
            )));
        }
        if pattern.has_diagonal_entries() {
            return Err(Error::Shape(
                "gcn_aggregate: pattern must not contain diagonal entries".into(),
            ));
        }
        let mut degree = vec![0.0; n];
        for i in 0..n {
            let mut d = self_weight + extra_degree[i];
            for e in pattern.row_range(i) {
                d += w.data()[e];
            }
            degree[i] = d;
        }
        let dinv: Vec<f64> = degree
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        let k = hv.cols();
        let mut v = Matrix::zeros(n, k);
        for i in 0..n {
            let mut diag_done = self_weight == 0.0;
            let out = v.row_mut(i);
            for e in pattern.row_range(i) {
                let j = pattern.col_of(e);
                if !diag_done && j > i {
                    axpy(out, self_weight * (dinv[i] * dinv[i]), hv.row(i));
                    diag_done = true;
                }
                axpy(out, w.data()[e] * (dinv[i] * dinv[j]), hv.row(j));
            }
            if !diag_done {
                axpy(out, self_weight * (dinv[i] * dinv[i]), hv.row(i));
            }
        }
        let rg = self.rg(&[weights, h]);
        self.push(
            v,
            rg,
            Op::GcnAggregate {
                weights,
                h,
                pattern,
                self_weight,
                dinv,
                degree,
            },
        )
    }

    /// Runs reverse-mode differentiation from the scalar `loss` and clears the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        let (rows, cols) = self.value(loss).shape();
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarLoss { rows, cols });
        }
        let nodes = std::mem::take(&mut self.nodes);
        self.consumed = true;

        let mut grads: Vec<Option<Matrix>> = (0..nodes.len()).map(|_| None).collect();
        if nodes[loss.0].requires_grad {
            grads[loss.0] = Some(Matrix::scalar(1.0));
        }
        for idx in (0..=loss.0).rev() {
            let node = &nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            backprop(&nodes, idx, &g, &mut grads)?;
        }
        // Only leaves keep their gradients.
        for (idx, node) in nodes.iter().enumerate() {
            if !matches!(node.op, Op::Leaf) || !node.requires_grad {
                grads[idx] = None;
            } else if grads[idx].is_none() {
                grads[idx] = Some(Matrix::zeros(node.value.rows(), node.value.cols()));
            }
        }
        Ok(Gradients { grads })
    }
}

#[inline]
fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, &y) in out.iter_mut().zip(x) {
        *o += a * y;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn softmax_rows(x: &Matrix) -> Matrix {
    let mut v = x.clone();
    for i in 0..x.rows() {
        let lse = log_sum_exp(x.row(i));
        v.row_mut(i).iter_mut().for_each(|y| *y = (*y - lse).exp());
    }
    v
}

fn add_grad(grads: &mut [Option<Matrix>], nodes: &[Node], var: Var, g: Matrix) -> Result<()> {
    if !nodes[var.0].requires_grad {
        return Ok(());
    }
    match &mut grads[var.0] {
        Some(existing) => existing.add_assign(&g)?,
        slot @ None => *slot = Some(g),
    }
    Ok(())
}

fn backprop(nodes: &[Node], idx: usize, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
    let out = &nodes[idx].value;
    let val = |v: Var| &nodes[v.0].value;
    let needs = |v: Var| nodes[v.0].requires_grad;
    match &nodes[idx].op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            if needs(*a) {
                let ga = g.matmul(&val(*b).transpose())?;
                add_grad(grads, nodes, *a, ga)?;
            }
            if needs(*b) {
                let gb = val(*a).transpose().matmul(g)?;
                add_grad(grads, nodes, *b, gb)?;
            }
        }
        Op::Add(a, b) => {
            add_grad(grads, nodes, *a, g.clone())?;
            add_grad(grads, nodes, *b, g.clone())?;
        }
        Op::Sub(a, b) => {
            add_grad(grads, nodes, *a, g.clone())?;
            add_grad(grads, nodes, *b, g.scale(-1.0))?;
        }
        Op::AddRow(a, row) => {
            add_grad(grads, nodes, *a, g.clone())?;
            if needs(*row) {
                let mut gr = Matrix::zeros(1, g.cols());
                for i in 0..g.rows() {
                    axpy(gr.row_mut(0), 1.0, g.row(i));
                }
                add_grad(grads, nodes, *row, gr)?;
            }
        }
        Op::Hadamard(a, b) => {
            if needs(*a) {
                add_grad(grads, nodes, *a, g.zip_map(val(*b), |x, y| x * y)?)?;
            }
            if needs(*b) {
                add_grad(grads, nodes, *b, g.zip_map(val(*a), |x, y| x * y)?)?;
            }
        }
        Op::MulRow(a, row) => {
            let (x, r) = (val(*a), val(*row));
            if needs(*a) {
                let ga = Matrix::from_fn(g.rows(), g.cols(), |i, j| g.get(i, j) * r.get(0, j));
                add_grad(grads, nodes, *a, ga)?;
            }
            if needs(*row) {
                let mut gr = Matrix::zeros(1, g.cols());
                for i in 0..g.rows() {
                    for j in 0..g.cols() {
                        gr.add_at(0, j, g.get(i, j) * x.get(i, j));
                    }
                }
                add_grad(grads, nodes, *row, gr)?;
            }
        }
        Op::Scale(a, s) => add_grad(grads, nodes, *a, g.scale(*s))?,
        Op::AddScalar(a) => add_grad(grads, nodes, *a, g.clone())?,
        Op::Relu(a) => {
            let ga = g.zip_map(val(*a), |gi, x| if x > 0.0 { gi } else { 0.0 })?;
            add_grad(grads, nodes, *a, ga)?;
        }
        Op::LeakyRelu(a, slope) => {
            let ga = g.zip_map(val(*a), |gi, x| if x > 0.0 { gi } else { slope * gi })?;
            add_grad(grads, nodes, *a, ga)?;
        }
        Op::Sigmoid(a) => {
            let ga = g.zip_map(out, |gi, y| gi * y * (1.0 - y))?;
            add_grad(grads, nodes, *a, ga)?;
        }
        Op::Log(a) => {
            let ga = g.zip_map(val(*a), |gi, x| gi / x)?;
            add_grad(grads, nodes, *a, ga)?;
        }
        Op::Exp(a) => {
            let ga = g.zip_map(out, |gi, y| gi * y)?;
            add_grad(grads, nodes, *a, ga)?;
        }
        Op::SoftmaxRows(a) => {
            let mut ga = Matrix::zeros(g.rows(), g.cols());
            for i in 0..g.rows() {
                let s = dot(g.row(i), out.row(i));
                for j in 0..g.cols() {
                    ga.set(i, j, out.get(i, j) * (g.get(i, j) - s));
                }
            }
            add_grad(grads, nodes, *a, ga)?;
        }
        Op::LogSoftmaxRows(a) => {
            let mut ga = Matrix::zeros(g.rows(), g.cols());
            for i in 0..g.rows() {
                let s: f64 = g.row(i).iter().sum();
                for j in 0..g.cols() {
                    ga.set(i, j, g.get(i, j) - out.get(i, j).exp() * s);
                }
            }
            add_grad(grads, nodes, *a, ga)?;
        }
        Op::RowNormalize(a) => {
            let x = val(*a);
            let mut ga = Matrix::zeros(g.rows(), g.cols());
            for i in 0..g.rows() {
                let s: f64 = x.row(i).iter().sum();
                let c = dot(g.row(i), out.row(i));
                for j in 0..g.cols() {
                    ga.set(i, j, (g.get(i, j) - c) / s);
                }
            }
            add_grad(grads, nodes, *a, ga)?;
        }
        Op::Transpose(a) => add_grad(grads, nodes, *a, g.transpose())?,
        Op::Sum(a) => {
            let x = val(*a);
            add_grad(grads, nodes, *a, Matrix::filled(x.rows(), x.cols(), g.get(0, 0)))?;
        }
        Op::Mean(a) => {
            let x = val(*a);
            let s = g.get(0, 0) / x.len() as f64;
            add_grad(grads, nodes, *a, Matrix::filled(x.rows(), x.cols(), s))?;
        }
        Op::SumSquares(a) => {
            let s = g.get(0, 0);
            add_grad(grads, nodes, *a, val(*a).map(|x| 2.0 * s * x))?;
        }
        Op::BinaryEntropy(p) => {
            let ga = g.zip_map(val(*p), |gi, x| {
                let x = x.clamp(ENTROPY_EPS, 1.0 - ENTROPY_EPS);
                gi * ((1.0 - x) / x).ln()
            })?;
            add_grad(grads, nodes, *p, ga)?;
        }
        Op::GatherRows(a, index) => {
            let x = val(*a);
            let mut ga = Matrix::zeros(x.rows(), x.cols());
            for (k, &i) in index.iter().enumerate() {
                axpy(ga.row_mut(i), 1.0, g.row(k));
            }
            add_grad(grads, nodes, *a, ga)?;
        }
        Op::ConcatRows(a, b) => {
            let ra = val(*a).rows();
            let c = g.cols();
            if needs(*a) {
                let ga = Matrix::from_vec(ra, c, g.data()[..ra * c].to_vec())?;
                add_grad(grads, nodes, *a, ga)?;
            }
            if needs(*b) {
                let gb = Matrix::from_vec(g.rows() - ra, c, g.data()[ra * c..].to_vec())?;
                add_grad(grads, nodes, *b, gb)?;
            }
        }
        Op::SegmentMeanRows(a, segments) => {
            let x = val(*a);
            let mut ga = Matrix::zeros(x.rows(), x.cols());
            for (s, seg) in segments.iter().enumerate() {
                let inv = 1.0 / seg.len() as f64;
                for i in seg.clone() {
                    axpy(ga.row_mut(i), inv, g.row(s));
                }
            }
            add_grad(grads, nodes, *a, ga)?;
        }
        Op::CrossEntropy(logits, targets) => {
            let x = val(*logits);
            let scale = g.get(0, 0) / targets.len() as f64;
            let mut ga = Matrix::zeros(x.rows(), x.cols());
            for &(r, c) in targets.iter() {
                let lse = log_sum_exp(x.row(r));
                for j in 0..x.cols() {
                    let p = (x.get(r, j) - lse).exp();
                    let t = if j == c { 1.0 } else { 0.0 };
                    ga.add_at(r, j, scale * (p - t));
                }
            }
            add_grad(grads, nodes, *logits, ga)?;
        }
        Op::Spmm { coef, x, pattern } => {
            let (c, xv) = (val(*coef), val(*x));
            if needs(*coef) {
                let mut gc = Matrix::zeros(pattern.nnz(), 1);
                for e in 0..pattern.nnz() {
                    gc.data_mut()[e] = dot(g.row(pattern.row_of(e)), xv.row(pattern.col_of(e)));
                }
                add_grad(grads, nodes, *coef, gc)?;
            }
            if needs(*x) {
                let mut gx = Matrix::zeros(xv.rows(), xv.cols());
                for e in 0..pattern.nnz() {
                    axpy(
                        gx.row_mut(pattern.col_of(e)),
                        c.data()[e],
                        g.row(pattern.row_of(e)),
                    );
                }
                add_grad(grads, nodes, *x, gx)?;
            }
        }
        Op::SegmentSoftmax(scores, pattern) => {
            let mut gs = Matrix::zeros(pattern.nnz(), 1);
            for i in 0..pattern.n() {
                let r = pattern.row_range(i);
                let s: f64 = r.clone().map(|e| g.data()[e] * out.data()[e]).sum();
                for e in r {
                    gs.data_mut()[e] = out.data()[e] * (g.data()[e] - s);
                }
            }
            add_grad(grads, nodes, *scores, gs)?;
        }
        Op::GcnAggregate {
            weights,
            h,
            pattern,
            self_weight,
            dinv,
            degree,
        } => {
            let (w, hv) = (val(*weights), val(*h));
            let n = pattern.n();
            if needs(*weights) {
                // <g_i, h_j> per entry, and per diagonal.
                let gh: Vec<f64> = (0..pattern.nnz())
                    .map(|e| dot(g.row(pattern.row_of(e)), hv.row(pattern.col_of(e))))
                    .collect();
                let gh_diag: Vec<f64> = (0..n).map(|i| dot(g.row(i), hv.row(i))).collect();
                // Sensitivity of the loss to each node's degree.
                let mut gdeg = vec![0.0; n];
                for i in 0..n {
                    if degree[i] > 0.0 {
                        gdeg[i] += 2.0 * self_weight * dinv[i] * dinv[i] * gh_diag[i];
                    }
                }
                for e in 0..pattern.nnz() {
                    let (i, j) = (pattern.row_of(e), pattern.col_of(e));
                    let term = w.data()[e] * dinv[i] * dinv[j] * gh[e];
                    gdeg[i] += term;
                    gdeg[j] += term;
                }
                for i in 0..n {
                    gdeg[i] = if degree[i] > 0.0 {
                        -0.5 * gdeg[i] / degree[i]
                    } else {
                        0.0
                    };
                }
                let mut gw = Matrix::zeros(pattern.nnz(), 1);
                for e in 0..pattern.nnz() {
                    let (i, j) = (pattern.row_of(e), pattern.col_of(e));
                    gw.data_mut()[e] = dinv[i] * dinv[j] * gh[e] + gdeg[i];
                }
                add_grad(grads, nodes, *weights, gw)?;
            }
            if needs(*h) {
                let mut gh = Matrix::zeros(hv.rows(), hv.cols());
                for i in 0..n {
                    let c = self_weight * dinv[i] * dinv[i];
                    if c != 0.0 {
                        axpy(gh.row_mut(i), c, g.row(i));
                    }
                }
                for e in 0..pattern.nnz() {
                    let (i, j) = (pattern.row_of(e), pattern.col_of(e));
                    axpy(gh.row_mut(j), w.data()[e] * dinv[i] * dinv[j], g.row(i));
                }
                add_grad(grads, nodes, *h, gh)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_at_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::scalar(0.0), true).unwrap();
        let y = t.sigmoid(x).unwrap();
        assert_eq!(t.value(y).get(0, 0), 0.5);
        let s = t.sum(y).unwrap();
        let g = t.backward(s).unwrap();
        assert!((g.get(x).unwrap().get(0, 0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut t = Tape::new();
        let x = t.constant(Matrix::zeros(1, 2)).unwrap();
        let y = t.softmax_rows(x).unwrap();
        assert_eq!(t.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn backward_twice_fails() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::scalar(2.0), true).unwrap();
        let y = t.hadamard(x, x).unwrap();
        t.backward(y).unwrap();
        assert!(matches!(t.backward(y), Err(Error::TapeConsumed)));
        assert!(matches!(t.constant(Matrix::scalar(1.0)), Err(Error::TapeConsumed)));
    }

    #[test]
    fn constants_have_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant(Matrix::scalar(3.0)).unwrap();
        let x = t.leaf(Matrix::scalar(2.0), true).unwrap();
        let y = t.hadamard(c, x).unwrap();
        let g = t.backward(y).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(x).unwrap().get(0, 0), 3.0);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut t = Tape::new();
        let x = t.leaf(Matrix::zeros(2, 1), true).unwrap();
        assert!(matches!(
            t.backward(x),
            Err(Error::NonScalarLoss { rows: 2, cols: 1 })
        ));
    }

    #[test]
    fn gcn_aggregate_matches_dense_normalization() {
        // path 0-1-2 with unit weights and self loops
        let pattern = Arc::new(SparsePattern::from_undirected(3, &[(0, 1), (1, 2)], false).unwrap());
        let mut t = Tape::new();
        let w = t.constant(Matrix::filled(4, 1, 1.0)).unwrap();
        let h = t.constant(Matrix::identity(3)).unwrap();
        let y = t.gcn_aggregate(w, pattern, h, 1.0, &[0.0; 3]).unwrap();
        let d = [2.0f64, 3.0, 2.0];
        let a = [[1.0, 1.0, 0.0], [1.0, 1.0, 1.0], [0.0, 1.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                let expect = a[i][j] / (d[i].sqrt() * d[j].sqrt());
                assert!((t.value(y).get(i, j) - expect).abs() < 1e-15);
            }
        }
    }
}
