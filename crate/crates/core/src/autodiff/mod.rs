//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records every operation in execution order, so node inputs always
//! reference earlier nodes and the reverse sweep is a single backwards pass over
//! the node list. Shapes must match exactly: there is no implicit broadcasting.
//! The only mixed-shape ops are [`Tape::scale`], [`Tape::mul_scalar`] and the
//! explicit row-bias [`Tape::add_row`].

mod check;
mod kernels;
mod tensor;

pub use check::{central_difference, grad_check};
pub use tensor::Tensor;

use crate::error::{Error, Result};
use kernels::*;

/// Norm below which [`Tape::normalize`] refuses to divide.
pub const NORMALIZE_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    MulScalar { s: NodeId, x: NodeId },
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Reshape(NodeId),
    SoftmaxRows(NodeId),
    SoftmaxCols(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Abs(NodeId),
    Pow(NodeId, f64),
    Sum(NodeId),
    Mean(NodeId),
    ReduceAxis { x: NodeId, axis: usize, mean: bool },
    Extremum { x: NodeId, axis: usize, max: bool, index: Vec<usize> },
    L2Norm(NodeId),
    Normalize(NodeId),
    Dot(NodeId, NodeId),
    Sort { x: NodeId, perm: Vec<usize> },
    Gather { x: NodeId, index: Vec<usize> },
    AddRow { x: NodeId, row: NodeId },
    PairwiseSqDist(NodeId, NodeId),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Append-only record of a computation.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to tape nodes.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `id`; nodes the root does not depend on get zeros.
    pub fn get(&self, id: NodeId) -> Tensor {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[id.0]),
        }
    }

    pub fn get_ref(&self, id: NodeId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    pub fn take(&mut self, id: NodeId) -> Tensor {
        match self.grads[id.0].take() {
            Some(g) => g,
            None => Tensor::zeros(&self.shapes[id.0]),
        }
    }
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

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.item()
    }

    /// Total number of `f64` slots held by cached forward values. Used to
    /// check memory scaling of attention variants.
    pub fn allocated_elements(&self) -> usize {
        self.nodes.iter().map(|n| n.value.numel()).sum()
    }

    /// Largest single cached value on the tape.
    pub fn max_node_elements(&self) -> usize {
        self.nodes.iter().map(|n| n.value.numel()).max().unwrap_or(0)
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push_raw(Op::Leaf, value, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_raw(Op::Constant, value, false)
    }

    fn push_raw(&mut self, op: Op, value: Tensor, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[NodeId]) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite(op_name(&op)));
        }
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        Ok(self.push_raw(op, value, requires_grad))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape("add", va, vb)?;
        let v = zip_with(va, vb, |x, y| x + y);
        self.push(Op::Add(a, b), v, &[a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape("sub", va, vb)?;
        let v = zip_with(va, vb, |x, y| x - y);
        self.push(Op::Sub(a, b), v, &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape("mul", va, vb)?;
        let v = zip_with(va, vb, |x, y| x * y);
        self.push(Op::Mul(a, b), v, &[a, b])
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let v = self.value(x).map(|t| t * c);
        self.push(Op::Scale(x, c), v, &[x])
    }

    /// Multiplication of a tensor by a one-element node.
    pub fn mul_scalar(&mut self, s: NodeId, x: NodeId) -> Result<NodeId> {
        let vs = self.value(s);
        if vs.numel() != 1 {
            return Err(Error::shape("mul_scalar", format!("scalar operand {:?}", vs.shape())));
        }
        let c = vs.item();
        let v = self.value(x).map(|t| t * c);
        self.push(Op::MulScalar { s, x }, v, &[s, x])
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = matmul(self.value(a), self.value(b))?;
        self.push(Op::MatMul(a, b), v, &[a, b])
    }

    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x).transposed()?;
        self.push(Op::Transpose(x), v, &[x])
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(x).clone().reshaped(shape.to_vec())?;
        self.push(Op::Reshape(x), v, &[x])
    }

    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let v = softmax_rows(self.value(x))?;
        self.push(Op::SoftmaxRows(x), v, &[x])
    }

    pub fn softmax_cols(&mut self, x: NodeId) -> Result<NodeId> {
        let v = softmax_cols(self.value(x))?;
        self.push(Op::SoftmaxCols(x), v, &[x])
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x).map(sigmoid);
        self.push(Op::Sigmoid(x), v, &[x])
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x).map(|t| t.max(0.0));
        self.push(Op::Relu(x), v, &[x])
    }

    pub fn abs(&mut self, x: NodeId) -> Result<NodeId> {
        let v = self.value(x).map(f64::abs);
        self.push(Op::Abs(x), v, &[x])
    }

    /// Elementwise `x^p` for a constant exponent.
    pub fn pow(&mut self, x: NodeId, p: f64) -> Result<NodeId> {
        let v = self.value(x).map(|t| t.powf(p));
        self.push(Op::Pow(x, p), v, &[x])
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let v = Tensor::scalar(self.value(x).data().iter().sum());
        self.push(Op::Sum(x), v, &[x])
    }

    /// Mean of all entries, as a scalar.
    pub fn mean(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.value(x);
        if t.numel() == 0 {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let v = Tensor::scalar(t.data().iter().sum::<f64>() / t.numel() as f64);
        self.push(Op::Mean(x), v, &[x])
    }

    pub fn sum_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let v = reduce_axis(self.value(x), axis, false)?;
        self.push(Op::ReduceAxis { x, axis, mean: false }, v, &[x])
    }

    pub fn mean_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let v = reduce_axis(self.value(x), axis, true)?;
        self.push(Op::ReduceAxis { x, axis, mean: true }, v, &[x])
    }

    pub fn max_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let (v, index) = extremum_axis(self.value(x), axis, true)?;
        self.push(Op::Extremum { x, axis, max: true, index }, v, &[x])
    }

    pub fn min_axis(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let (v, index) = extremum_axis(self.value(x), axis, false)?;
        self.push(Op::Extremum { x, axis, max: false, index }, v, &[x])
    }

    /// Euclidean (Frobenius) norm of all entries, as a scalar.
    pub fn l2_norm(&mut self, x: NodeId) -> Result<NodeId> {
        let v = Tensor::scalar(self.value(x).norm());
        self.push(Op::L2Norm(x), v, &[x])
    }

    /// `v / ||v||_2`; fails when the norm is below [`NORMALIZE_EPS`].
    pub fn normalize(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.value(x);
        let n = t.norm();
        if !(n >= NORMALIZE_EPS) {
            return Err(Error::DegenerateDirection { norm: n });
        }
        let v = t.map(|e| e / n);
        self.push(Op::Normalize(x), v, &[x])
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape("dot", va, vb)?;
        let v = Tensor::scalar(va.data().iter().zip(vb.data()).map(|(x, y)| x * y).sum());
        self.push(Op::Dot(a, b), v, &[a, b])
    }

    /// Stable ascending sort of a vector, or of each column of a matrix.
    ///
    /// Returns the sorted node and the permutation (see the kernel docs for the
    /// column-major layout used with matrices). The gradient routes through the
    /// permutation found here.
    pub fn sort(&mut self, x: NodeId) -> Result<(NodeId, Vec<usize>)> {
        let (v, perm) = sort_axis0(self.value(x))?;
        let id = self.push(Op::Sort { x, perm: perm.clone() }, v, &[x])?;
        Ok((id, perm))
    }

    /// Gathers rows (or entries of a vector): output `i` is input `index[i]`.
    pub fn gather(&mut self, x: NodeId, index: &[usize]) -> Result<NodeId> {
        let v = gather_rows(self.value(x), index)?;
        self.push(Op::Gather { x, index: index.to_vec() }, v, &[x])
    }

    /// Adds a length-`c` vector to every row of an `r x c` matrix.
    pub fn add_row(&mut self, x: NodeId, row: NodeId) -> Result<NodeId> {
        let v = add_row(self.value(x), self.value(row))?;
        self.push(Op::AddRow { x, row }, v, &[x, row])
    }

    /// Matrix of squared Euclidean distances between rows of `a` and rows of `b`.
    pub fn pairwise_sq_dist(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = pairwise_sq_dist(self.value(a), self.value(b))?;
        self.push(Op::PairwiseSqDist(a, b), v, &[a, b])
    }

    /// Recomputes every non-leaf value from its inputs.
    pub fn replay(&self) -> Result<Vec<Tensor>> {
        let mut out: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let get = |id: &NodeId| &out[id.0];
            let v = match &node.op {
                Op::Leaf | Op::Constant => node.value.clone(),
                Op::Add(a, b) => zip_with(get(a), get(b), |x, y| x + y),
                Op::Sub(a, b) => zip_with(get(a), get(b), |x, y| x - y),
                Op::Mul(a, b) => zip_with(get(a), get(b), |x, y| x * y),
                Op::Scale(x, c) => get(x).map(|t| t * c),
                Op::MulScalar { s, x } => {
                    let c = get(s).item();
                    get(x).map(|t| t * c)
                }
                Op::MatMul(a, b) => matmul(get(a), get(b))?,
                Op::Transpose(x) => get(x).transposed()?,
                Op::Reshape(x) => get(x).clone().reshaped(node.value.shape().to_vec())?,
                Op::SoftmaxRows(x) => softmax_rows(get(x))?,
                Op::SoftmaxCols(x) => softmax_cols(get(x))?,
                Op::Sigmoid(x) => get(x).map(sigmoid),
                Op::Relu(x) => get(x).map(|t| t.max(0.0)),
                Op::Abs(x) => get(x).map(f64::abs),
                Op::Pow(x, p) => get(x).map(|t| t.powf(*p)),
                Op::Sum(x) => Tensor::scalar(get(x).data().iter().sum()),
                Op::Mean(x) => {
                    let t = get(x);
                    Tensor::scalar(t.data().iter().sum::<f64>() / t.numel() as f64)
                }
                Op::ReduceAxis { x, axis, mean } => reduce_axis(get(x), *axis, *mean)?,
                Op::Extremum { x, axis, max, .. } => extremum_axis(get(x), *axis, *max)?.0,
                Op::L2Norm(x) => Tensor::scalar(get(x).norm()),
                Op::Normalize(x) => {
                    let t = get(x);
                    let n = t.norm();
                    t.map(|e| e / n)
                }
                Op::Dot(a, b) => Tensor::scalar(
                    get(a).data().iter().zip(get(b).data()).map(|(x, y)| x * y).sum(),
                ),
                Op::Sort { x, .. } => sort_axis0(get(x))?.0,
                Op::Gather { x, index } => gather_rows(get(x), index)?,
                Op::AddRow { x, row } => add_row(get(x), get(row))?,
                Op::PairwiseSqDist(a, b) => pairwise_sq_dist(get(a), get(b))?,
            };
            out.push(v);
        }
        Ok(out)
    }

    /// Reverse sweep from a one-element root.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let rv = self.value(root);
        if rv.numel() != 1 {
            return Err(Error::shape("backward", format!("root shape {:?}", rv.shape())));
        }
        let n = root.0 + 1;
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::full(rv.shape(), 1.0));

        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if !g.is_finite() {
                return Err(Error::NonFinite("backward"));
            }
            self.propagate(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                if self.wants(*b) {
                    self.accumulate(grads, *b, g.map(|t| -t));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(*a) {
                    self.accumulate(grads, *a, zip_with(g, self.value(*b), |u, v| u * v));
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, zip_with(g, self.value(*a), |u, v| u * v));
                }
            }
            Op::Scale(x, c) => self.accumulate(grads, *x, g.map(|t| t * c)),
            Op::MulScalar { s, x } => {
                if self.wants(*s) {
                    let ds: f64 = g.data().iter().zip(self.value(*x).data()).map(|(u, v)| u * v).sum();
                    let shape = self.value(*s).shape().to_vec();
                    self.accumulate(grads, *s, Tensor::new(shape, vec![ds])?);
                }
                if self.wants(*x) {
                    let c = self.value(*s).item();
                    self.accumulate(grads, *x, g.map(|t| t * c));
                }
            }
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    let bt = self.value(*b).transposed()?;
                    self.accumulate(grads, *a, matmul(g, &bt)?);
                }
                if self.wants(*b) {
                    let at = self.value(*a).transposed()?;
                    self.accumulate(grads, *b, matmul(&at, g)?);
                }
            }
            Op::Transpose(x) => self.accumulate(grads, *x, g.transposed()?),
            Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                self.accumulate(grads, *x, g.clone().reshaped(shape)?);
            }
            Op::SoftmaxRows(x) => self.accumulate(grads, *x, softmax_rows_backward(y, g)?),
            Op::SoftmaxCols(x) => {
                let dx = softmax_rows_backward(&y.transposed()?, &g.transposed()?)?;
                self.accumulate(grads, *x, dx.transposed()?);
            }
            Op::Sigmoid(x) => self.accumulate(grads, *x, zip_with(g, y, |u, s| u * s * (1.0 - s))),
            Op::Relu(x) => {
                let dx = zip_with(g, self.value(*x), |u, v| if v > 0.0 { u } else { 0.0 });
                self.accumulate(grads, *x, dx);
            }
            Op::Abs(x) => {
                let dx = zip_with(g, self.value(*x), |u, v| {
                    if v > 0.0 {
                        u
                    } else if v < 0.0 {
                        -u
                    } else {
                        0.0
                    }
                });
                self.accumulate(grads, *x, dx);
            }
            Op::Pow(x, p) => {
                let p = *p;
                let dx = zip_with(g, self.value(*x), |u, v| {
                    if p == 1.0 {
                        u
                    } else if p == 2.0 {
                        2.0 * u * v
                    } else {
                        u * p * v.powf(p - 1.0)
                    }
                });
                self.accumulate(grads, *x, dx);
            }
            Op::Sum(x) => {
                let s = self.value(*x).shape().to_vec();
                self.accumulate(grads, *x, Tensor::full(&s, g.item()));
            }
            Op::Mean(x) => {
                let t = self.value(*x);
                let v = g.item() / t.numel() as f64;
                self.accumulate(grads, *x, Tensor::full(t.shape(), v));
            }
            Op::ReduceAxis { x, axis, mean } => {
                let t = self.value(*x);
                let dx = reduce_axis_backward(t.shape(), *axis, *mean, g)?;
                self.accumulate(grads, *x, dx);
            }
            Op::Extremum { x, axis, index, .. } => {
                let t = self.value(*x);
                let c = t.cols();
                let mut dx = Tensor::zeros(t.shape());
                let d = dx.data_mut();
                for (k, (&w, &gv)) in index.iter().zip(g.data()).enumerate() {
                    let flat = if *axis == 0 { w * c + k } else { k * c + w };
                    d[flat] += gv;
                }
                self.accumulate(grads, *x, dx);
            }
            Op::L2Norm(x) => {
                let n = y.item();
                let gv = g.item();
                let dx = if n > 0.0 {
                    self.value(*x).map(|t| gv * t / n)
                } else {
                    Tensor::zeros(self.value(*x).shape())
                };
                self.accumulate(grads, *x, dx);
            }
            Op::Normalize(x) => {
                let n = self.value(*x).norm();
                let proj: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
                let dx = zip_with(g, y, |gv, yv| (gv - yv * proj) / n);
                self.accumulate(grads, *x, dx);
            }
            Op::Dot(a, b) => {
                let gv = g.item();
                if self.wants(*a) {
                    self.accumulate(grads, *a, self.value(*b).map(|t| t * gv));
                }
                if self.wants(*b) {
                    self.accumulate(grads, *b, self.value(*a).map(|t| t * gv));
                }
            }
            Op::Sort { x, perm } => {
                let t = self.value(*x);
                let (r, c) = (t.rows(), t.numel() / t.rows().max(1));
                let mut dx = Tensor::zeros(t.shape());
                let d = dx.data_mut();
                for j in 0..c {
                    for i in 0..r {
                        d[perm[j * r + i] * c + j] += g.data()[i * c + j];
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Gather { x, index } => {
                let t = self.value(*x);
                let c = t.numel() / t.rows().max(1);
                let mut dx = Tensor::zeros(t.shape());
                let d = dx.data_mut();
                for (i, &src) in index.iter().enumerate() {
                    for k in 0..c {
                        d[src * c + k] += g.data()[i * c + k];
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::AddRow { x, row } => {
                self.accumulate(grads, *x, g.clone());
                if self.wants(*row) {
                    self.accumulate(grads, *row, reduce_axis(g, 0, false)?);
                }
            }
            Op::PairwiseSqDist(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (n, d) = (va.rows(), va.cols());
                let m = vb.rows();
                let mut da = Tensor::zeros(va.shape());
                let mut db = Tensor::zeros(vb.shape());
                for i in 0..n {
                    for j in 0..m {
                        let w = 2.0 * g.data()[i * m + j];
                        if w == 0.0 {
                            continue;
                        }
                        for k in 0..d {
                            let diff = va.data()[i * d + k] - vb.data()[j * d + k];
                            da.data_mut()[i * d + k] += w * diff;
                            db.data_mut()[j * d + k] -= w * diff;
                        }
                    }
                }
                self.accumulate(grads, *a, da);
                self.accumulate(grads, *b, db);
            }
        }
        Ok(())
    }
}

fn softmax_rows_backward(y: &Tensor, g: &Tensor) -> Result<Tensor> {
    let (r, c) = require_2d("softmax_backward", y)?;
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let (yr, gr) = (y.row(i), g.row(i));
        let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for j in 0..c {
            out[i * c + j] = yr[j] * (gr[j] - inner);
        }
    }
    Tensor::matrix(r, c, out)
}

fn reduce_axis_backward(shape: &[usize], axis: usize, mean: bool, g: &Tensor) -> Result<Tensor> {
    match (shape, axis) {
        ([n], 0) => {
            let v = if mean { g.item() / *n as f64 } else { g.item() };
            Ok(Tensor::full(shape, v))
        }
        ([r, c], 0) => {
            let scale = if mean { 1.0 / *r as f64 } else { 1.0 };
            let mut out = vec![0.0; r * c];
            for i in 0..*r {
                for j in 0..*c {
                    out[i * c + j] = g.data()[j] * scale;
                }
            }
            Tensor::matrix(*r, *c, out)
        }
        ([r, c], 1) => {
            let scale = if mean { 1.0 / *c as f64 } else { 1.0 };
            let mut out = vec![0.0; r * c];
            for i in 0..*r {
                for j in 0..*c {
                    out[i * c + j] = g.data()[i] * scale;
                }
            }
            Tensor::matrix(*r, *c, out)
        }
        (s, ax) => Err(Error::shape("reduce_axis", format!("axis {} of {:?}", ax, s))),
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Constant => "constant",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::Scale(..) => "scale",
        Op::MulScalar { .. } => "mul_scalar",
        Op::MatMul(..) => "matmul",
        Op::Transpose(..) => "transpose",
        Op::Reshape(..) => "reshape",
        Op::SoftmaxRows(..) => "softmax_rows",
        Op::SoftmaxCols(..) => "softmax_cols",
        Op::Sigmoid(..) => "sigmoid",
        Op::Relu(..) => "relu",
        Op::Abs(..) => "abs",
        Op::Pow(..) => "pow",
        Op::Sum(..) => "sum",
        Op::Mean(..) => "mean",
        Op::ReduceAxis { .. } => "reduce_axis",
        Op::Extremum { .. } => "extremum",
        Op::L2Norm(..) => "l2_norm",
        Op::Normalize(..) => "normalize",
        Op::Dot(..) => "dot",
        Op::Sort { .. } => "sort",
        Op::Gather { .. } => "gather",
        Op::AddRow { .. } => "add_row",
        Op::PairwiseSqDist(..) => "pairwise_sq_dist",
    }
}
