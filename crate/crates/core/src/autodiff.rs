//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Tape`] records every operation in execution order, so the node list
//! is already a topological order and backward is a single reverse sweep.
//! Leaves may borrow their values (model parameters) instead of copying.

use std::borrow::Cow;

use rand::Rng;

use crate::error::CoreError;
use crate::tensor::{gemm, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Clamp(Var, f64, f64),
    Concat(Vec<Var>, Axis),
    Slice(Var, Axis, usize),
    Sum(Var),
    SoftmaxCe(Var, Vec<Option<usize>>, Tensor),
    Mse(Var, Var),
    Dropout(Var, Vec<f64>),
    Gather(Var, Vec<usize>),
}

struct Node<'a> {
    value: Cow<'a, Tensor>,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

fn matrix_shape(op: &str, t: &Tensor) -> Result<(usize, usize), CoreError> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(CoreError::Shape(format!("{op}: expected a matrix, got {s:?}"))),
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.push_node(Cow::Owned(value), op, needs_grad)
    }

    fn push_node(&mut self, value: Cow<'a, Tensor>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf borrowing `t`.
    pub fn param(&mut self, t: &'a Tensor) -> Var {
        self.push_node(Cow::Borrowed(t), Op::Leaf, true)
    }

    /// Differentiable leaf owning its value.
    pub fn param_owned(&mut self, t: Tensor) -> Var {
        self.push_node(Cow::Owned(t), Op::Leaf, true)
    }

    /// Leaf that receives no gradient.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push_node(Cow::Owned(t), Op::Leaf, false)
    }

    pub fn constant_ref(&mut self, t: &'a Tensor) -> Var {
        self.push_node(Cow::Borrowed(t), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Value of a one-element tensor.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<(), CoreError> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(CoreError::shape_pair(op, x.shape(), y.shape()));
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, CoreError> {
        let (x, y) = (self.value(a), self.value(b));
        let (m, k) = matrix_shape("matmul", x)?;
        let (k2, n) = matrix_shape("matmul", y)?;
        if k != k2 {
            return Err(CoreError::shape_pair("matmul", x.shape(), y.shape()));
        }
        let mut out = vec![0.0; m * n];
        gemm(x.data(), m, k, false, y.data(), k, n, false, &mut out, false);
        let t = Tensor::matrix(m, n, out)?;
        Ok(self.push(t, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, CoreError> {
        self.same_shape("add", a, b)?;
        let t = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(t, Op::Add(a, b), &[a, b]))
    }

    /// Adds a `1×c` row to every row of an `r×c` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, CoreError> {
        let (x, b) = (self.value(a), self.value(row));
        let (_, c) = matrix_shape("add_row", x)?;
        if b.shape() != [1, c] {
            return Err(CoreError::shape_pair("add_row", x.shape(), b.shape()));
        }
        let bias = b.data();
        let mut t = x.clone();
        for chunk in t.data_mut().chunks_mut(c) {
            for (v, bb) in chunk.iter_mut().zip(bias) {
                *v += bb;
            }
        }
        Ok(self.push(t, Op::AddRow(a, row), &[a, row]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, CoreError> {
        self.same_shape("sub", a, b)?;
        let t = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(t, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, CoreError> {
        self.same_shape("mul", a, b)?;
        let t = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(t, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a).map(|x| x * s);
        self.push(t, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a).map(|x| x + s);
        self.push(t, Op::AddScalar(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::tanh);
        self.push(t, Op::Tanh(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(sigmoid);
        self.push(t, Op::Sigmoid(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.max(0.0));
        self.push(t, Op::Relu(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::exp);
        self.push(t, Op::Exp(a), &[a])
    }

    pub fn log(&mut self, a: Var) -> Var {
        let t = self.value(a).map(f64::ln);
        self.push(t, Op::Log(a), &[a])
    }

    /// Clamps into `[lo, hi]`; the gradient is zero where clamping applied.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let t = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(t, Op::Clamp(a, lo, hi), &[a])
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var, CoreError> {
        let Some(&first) = parts.first() else {
            return Err(CoreError::Shape("concat of zero tensors".into()));
        };
        let (r0, c0) = matrix_shape("concat", self.value(first))?;
        let mut shapes = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = matrix_shape("concat", self.value(p))?;
            let ok = match axis {
                Axis::Rows => c == c0,
                Axis::Cols => r == r0,
            };
            if !ok {
                return Err(CoreError::shape_pair("concat", self.value(first).shape(), self.value(p).shape()));
            }
            shapes.push((r, c));
        }
        let t = match axis {
            Axis::Rows => {
                let rows: usize = shapes.iter().map(|s| s.0).sum();
                let mut data = Vec::with_capacity(rows * c0);
                for &p in parts {
                    data.extend_from_slice(self.value(p).data());
                }
                Tensor::matrix(rows, c0, data)?
            }
            Axis::Cols => {
                let cols: usize = shapes.iter().map(|s| s.1).sum();
                let mut data = Vec::with_capacity(r0 * cols);
                for r in 0..r0 {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row_slice(r));
                    }
                }
                Tensor::matrix(r0, cols, data)?
            }
        };
        Ok(self.push(t, Op::Concat(parts.to_vec(), axis), parts))
    }

    /// `len` rows or columns starting at `start`.
    pub fn slice(&mut self, a: Var, axis: Axis, start: usize, len: usize) -> Result<Var, CoreError> {
        let x = self.value(a);
        let (r, c) = matrix_shape("slice", x)?;
        let extent = if axis == Axis::Rows { r } else { c };
        if len == 0 || start + len > extent {
            return Err(CoreError::Shape(format!(
                "slice {start}..{} out of range for {:?} along {axis:?}",
                start + len,
                x.shape()
            )));
        }
        let t = match axis {
            Axis::Rows => Tensor::matrix(len, c, x.data()[start * c..(start + len) * c].to_vec())?,
            Axis::Cols => {
                let mut data = Vec::with_capacity(r * len);
                for i in 0..r {
                    data.extend_from_slice(&x.row_slice(i)[start..start + len]);
                }
                Tensor::matrix(r, len, data)?
            }
        };
        Ok(self.push(t, Op::Slice(a, axis, start), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let t = Tensor::scalar(self.value(a).sum());
        self.push(t, Op::Sum(a), &[a])
    }

    /// Summed negative log-likelihood of `targets` under a row-wise softmax.
    /// Rows with `None` (padding) contribute nothing.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[Option<usize>]) -> Result<Var, CoreError> {
        let x = self.value(logits);
        let (r, c) = matrix_shape("softmax_cross_entropy", x)?;
        if targets.len() != r {
            return Err(CoreError::Shape(format!(
                "softmax_cross_entropy: {r} rows but {} targets",
                targets.len()
            )));
        }
        if let Some(bad) = targets.iter().flatten().find(|&&t| t >= c) {
            return Err(CoreError::Shape(format!("target {bad} out of range for {c} classes")));
        }
        let mut probs = Tensor::zeros(&[r, c]);
        let mut loss = 0.0;
        for (i, target) in targets.iter().enumerate() {
            let Some(t) = *target else { continue };
            let row = x.row_slice(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + z.ln();
            loss += lse - row[t];
            let p = &mut probs.data_mut()[i * c..(i + 1) * c];
            for (pj, v) in p.iter_mut().zip(row) {
                *pj = (v - lse).exp();
            }
        }
        let t = Tensor::scalar(loss);
        Ok(self.push(t, Op::SoftmaxCe(logits, targets.to_vec(), probs), &[logits]))
    }

    /// Squared error summed over columns and averaged over rows.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var, CoreError> {
        self.same_shape("mse", pred, target)?;
        let (p, t) = (self.value(pred), self.value(target));
        let rows = p.rows() as f64;
        let s: f64 = p.data().iter().zip(t.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(self.push(Tensor::scalar(s / rows), Op::Mse(pred, target), &[pred, target]))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `p` and survivors are scaled by `1/(1-p)`. Identity
    /// otherwise.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, train: bool, rng: &mut R) -> Result<Var, CoreError> {
        if !(0.0..1.0).contains(&p) {
            return Err(CoreError::Config(format!("dropout probability {p} outside [0, 1)")));
        }
        if !train || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let x = self.value(a);
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let t = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Dropout(a, mask), &[a]))
    }

    /// Rows of `table` selected by `idx` (embedding lookup).
    pub fn gather(&mut self, table: Var, idx: &[usize]) -> Result<Var, CoreError> {
        let x = self.value(table);
        let (r, _) = matrix_shape("gather", x)?;
        if let Some(bad) = idx.iter().find(|&&i| i >= r) {
            return Err(CoreError::Shape(format!("gather index {bad} out of range for {r} rows")));
        }
        let t = x.gather_rows(idx);
        Ok(self.push(t, Op::Gather(table, idx.to_vec()), &[table]))
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, CoreError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(CoreError::NonScalarLoss(lv.shape().to_vec()));
        }
        if !lv.is_finite() {
            return Err(CoreError::NonFinite(format!("loss = {}", lv.data()[0])));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(self.nodes.len());
        grads.resize_with(self.nodes.len(), || None);
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn propagate(&self, node: &Node<'a>, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &*node.value;
        let mut acc = |v: Var, t: Tensor| {
            if !self.wants(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                let (m, k) = (x.rows(), x.cols());
                let n = y.cols();
                if self.wants(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(g.data(), m, n, false, y.data(), k, n, true, &mut da, false);
                    acc(*a, Tensor::matrix(m, k, da).expect("shape"));
                }
                if self.wants(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(x.data(), m, k, true, g.data(), m, n, false, &mut db, false);
                    acc(*b, Tensor::matrix(k, n, db).expect("shape"));
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::AddRow(a, row) => {
                acc(*a, g.clone());
                let c = g.cols();
                let mut db = vec![0.0; c];
                for chunk in g.data().chunks(c) {
                    for (d, v) in db.iter_mut().zip(chunk) {
                        *d += v;
                    }
                }
                acc(*row, Tensor::row(db));
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(self.value(*b), |x, y| x * y));
                acc(*b, g.zip_map(self.value(*a), |x, y| x * y));
            }
            Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Tanh(a) => acc(*a, g.zip_map(out, |x, y| x * (1.0 - y * y))),
            Op::Sigmoid(a) => acc(*a, g.zip_map(out, |x, y| x * y * (1.0 - y))),
            Op::Relu(a) => acc(*a, g.zip_map(out, |x, y| if y > 0.0 { x } else { 0.0 })),
            Op::Exp(a) => acc(*a, g.zip_map(out, |x, y| x * y)),
            Op::Log(a) => acc(*a, g.zip_map(self.value(*a), |x, y| x / y)),
            Op::Clamp(a, lo, hi) => acc(
                *a,
                g.zip_map(self.value(*a), |x, y| if y < *lo || y > *hi { 0.0 } else { x }),
            ),
            Op::Concat(parts, axis) => {
                let mut offset = 0;
                for &p in parts {
                    let (r, c) = (self.value(p).rows(), self.value(p).cols());
                    let piece = match axis {
                        Axis::Rows => g.data()[offset * c..(offset + r) * c].to_vec(),
                        Axis::Cols => {
                            let mut d = Vec::with_capacity(r * c);
                            for i in 0..r {
                                d.extend_from_slice(&g.row_slice(i)[offset..offset + c]);
                            }
                            d
                        }
                    };
                    offset += if *axis == Axis::Rows { r } else { c };
                    acc(p, Tensor::matrix(r, c, piece).expect("shape"));
                }
            }
            Op::Slice(a, axis, start) => {
                let x = self.value(*a);
                let mut d = Tensor::zeros(x.shape());
                let c = x.cols();
                match axis {
                    Axis::Rows => d.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data()),
                    Axis::Cols => {
                        let w = g.cols();
                        for i in 0..x.rows() {
                            d.data_mut()[i * c + start..i * c + start + w].copy_from_slice(g.row_slice(i));
                        }
                    }
                }
                acc(*a, d);
            }
            Op::Sum(a) => acc(*a, Tensor::full(self.value(*a).shape(), g.data()[0])),
            Op::SoftmaxCe(logits, targets, probs) => {
                let s = g.data()[0];
                let c = probs.cols();
                let mut d = probs.clone();
                for (i, t) in targets.iter().enumerate() {
                    if let Some(t) = t {
                        d.data_mut()[i * c + t] -= 1.0;
                    }
                }
                for v in d.data_mut() {
                    *v *= s;
                }
                acc(*logits, d);
            }
            Op::Mse(pred, target) => {
                let s = 2.0 * g.data()[0] / self.value(*pred).rows() as f64;
                let diff = self.value(*pred).zip_map(self.value(*target), |p, t| (p - t) * s);
                acc(*target, diff.map(|x| -x));
                acc(*pred, diff);
            }
            Op::Dropout(a, mask) => {
                let data = g.data().iter().zip(mask).map(|(x, m)| x * m).collect();
                acc(*a, Tensor::new(g.shape().to_vec(), data).expect("shape"));
            }
            Op::Gather(table, idx) => {
                let x = self.value(*table);
                let c = x.cols();
                let mut d = Tensor::zeros(x.shape());
                for (k, &row) in idx.iter().enumerate() {
                    for (dst, v) in d.data_mut()[row * c..(row + 1) * c].iter_mut().zip(g.row_slice(k)) {
                        *dst += v;
                    }
                }
                acc(*table, d);
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of a leaf; `None` when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.0].take()
    }

    /// Gradient of a leaf, zeros of `like`'s shape when absent.
    pub fn take_or_zeros(&mut self, v: Var, like: &Tensor) -> Tensor {
        self.take(v).unwrap_or_else(|| Tensor::zeros(like.shape()))
    }
}

/// Worst relative error between reverse-mode gradients of `f` and central
/// differences (step 1e-5) over every element of `params`. Errors are
/// relative to `max(|analytic|, |numeric|, 1e-3)`.
pub fn check_gradients(
    params: &mut [Tensor],
    f: &dyn Fn(&mut Tape<'_>, &[Var]) -> Var,
) -> f64 {
    let analytic: Vec<Tensor> = {
        let snapshot = params.to_vec();
        let mut tape = Tape::new();
        let vars: Vec<Var> = snapshot.iter().map(|p| tape.param(p)).collect();
        let loss = f(&mut tape, &vars);
        let mut g = tape.backward(loss).expect("finite scalar loss");
        vars.iter().zip(&snapshot).map(|(&v, p)| g.take_or_zeros(v, p)).collect()
    };
    let eval = |ps: &[Tensor]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p)).collect();
        let loss = f(&mut tape, &vars);
        tape.scalar(loss)
    };
    let h = 1e-5;
    let mut worst = 0.0f64;
    for pi in 0..params.len() {
        for j in 0..params[pi].len() {
            let orig = params[pi].data()[j];
            params[pi].data_mut()[j] = orig + h;
            let up = eval(params);
            params[pi].data_mut()[j] = orig - h;
            let down = eval(params);
            params[pi].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[pi].data()[j];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(err);
        }
    }
    worst
}
