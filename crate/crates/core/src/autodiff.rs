//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation of a forward pass. Nodes are appended
//! in evaluation order, so a single reverse sweep over the node indices is a
//! valid reverse topological order and visits each node exactly once.
//! Gradients from multiple consumers of a node are summed.
//!
//! ```
//! use anchorlab::autodiff::Tape;
//! use ndarray::array;
//!
//! let mut tape = Tape::new();
//! let x = tape.param(array![[2.0]]);
//! let y = tape.param(array![[3.0]]);
//! let xy = tape.mul(x, y).unwrap();
//! let grads = tape.backward(xy).unwrap();
//! assert_eq!(grads.get(x).unwrap()[[0, 0]], 3.0);
//! assert_eq!(grads.get(y).unwrap()[[0, 0]], 2.0);
//! ```

use std::sync::Arc;

use ndarray::{Array2, Axis, Zip};

use crate::error::{Error, Result};

/// Predictions are clamped into `[BCE_CLAMP, 1 - BCE_CLAMP]` before taking logs.
pub const BCE_CLAMP: f64 = 1e-7;

/// Inputs with a smaller norm are treated as degenerate by [`Tape::l2_normalize`].
pub const L2_DEGENERATE_NORM: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Row-compressed sparse matrix used for neighborhood aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from per-row `(column, weight)` lists.
    pub fn from_rows(n_cols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for row in &rows {
            for &(j, w) in row {
                indices.push(j);
                values.push(w);
            }
            indptr.push(indices.len());
        }
        SparseMatrix {
            n_rows: rows.len(),
            n_cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[i]..self.indptr[i + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// `self · x`
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, x.ncols()));
        for (i, mut out_row) in out.axis_iter_mut(Axis(0)).enumerate() {
            for (j, w) in self.row(i) {
                out_row.scaled_add(w, &x.row(j));
            }
        }
        out
    }

    /// `selfᵀ · y`
    pub fn apply_transpose(&self, y: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_cols, y.ncols()));
        for i in 0..self.n_rows {
            let yi = y.row(i);
            for (j, w) in self.row(i) {
                out.row_mut(j).scaled_add(w, &yi);
            }
        }
        out
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    Relu(Var),
    Sigmoid(Var),
    ConcatCols(Vec<Var>),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    GatherRows(Var, Vec<usize>),
    Sparse(Var, Arc<SparseMatrix>),
    L2Normalize { input: Var, norm: f64 },
    Bce { pred: Var, labels: Array2<f64> },
}

struct Node {
    value: Array2<f64>,
    op: Op,
    needs_grad: bool,
}

/// Records a forward computation for one reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_str(a: &Array2<f64>) -> String {
    format!("{}×{}", a.nrows(), a.ncols())
}

/// Result shape when broadcasting `a` against `b`: each dimension must match
/// or be 1 on one side.
fn broadcast_shape(op: &str, a: &Array2<f64>, b: &Array2<f64>) -> Result<(usize, usize)> {
    let dim = |x: usize, y: usize| match (x, y) {
        _ if x == y => Some(x),
        (1, y) => Some(y),
        (x, 1) => Some(x),
        _ => None,
    };
    match (dim(a.nrows(), b.nrows()), dim(a.ncols(), b.ncols())) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::Shape(format!(
            "{op}: cannot broadcast {} with {}",
            shape_str(a),
            shape_str(b)
        ))),
    }
}

/// Sums a broadcast gradient back down to `shape`.
fn reduce_to(mut grad: Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    if shape.0 == 1 && grad.nrows() != 1 {
        grad = grad.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && grad.ncols() != 1 {
        grad = grad.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    grad
}

fn broadcast_to(a: &Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    a.broadcast(shape)
        .expect("shape checked at record time")
        .to_owned()
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

    fn push(&mut self, value: Array2<f64>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A trainable leaf; gradients are reported for it.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant leaf; no gradient is propagated into it.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.ncols() != y.nrows() {
            return Err(Error::Shape(format!(
                "matmul: {} · {}",
                shape_str(x),
                shape_str(y)
            )));
        }
        let out = x.dot(y);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::MatMul(a, b), ng))
    }

    /// Elementwise sum with broadcasting of unit dimensions.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        broadcast_shape("add", self.value(a), self.value(b))?;
        let out = self.value(a) + self.value(b);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        broadcast_shape("sub", self.value(a), self.value(b))?;
        let out = self.value(a) - self.value(b);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    /// Elementwise (Hadamard) product with broadcasting of unit dimensions.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        broadcast_shape("mul", self.value(a), self.value(b))?;
        let out = self.value(a) * self.value(b);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, Op::Mul(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let out = self.value(a) * factor;
        let ng = self.needs(a);
        self.push(out, Op::Scale(a, factor), ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).t().to_owned();
        let ng = self.needs(a);
        self.push(out, Op::Transpose(a), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(|x| x.max(0.0));
        let ng = self.needs(a);
        self.push(out, Op::Relu(a), ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).mapv(sigmoid);
        let ng = self.needs(a);
        self.push(out, Op::Sigmoid(a), ng)
    }

    /// Horizontal concatenation; all parts must have the same row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Shape("concat_cols: no inputs".into()));
        };
        let rows = self.value(first).nrows();
        if let Some(bad) = parts.iter().find(|&&p| self.value(p).nrows() != rows) {
            return Err(Error::Shape(format!(
                "concat_cols: {} vs {}",
                shape_str(self.value(first)),
                shape_str(self.value(*bad))
            )));
        }
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views)
            .map_err(|e| Error::Shape(format!("concat_cols: {e}")))?;
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), ng))
    }

    /// Sum of all entries as a 1×1 value.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Array2::from_elem((1, 1), self.value(a).sum());
        let ng = self.needs(a);
        self.push(out, Op::Sum(a), ng)
    }

    /// Mean of all entries as a 1×1 value.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(Error::Shape("mean of an empty matrix".into()));
        }
        let out = Array2::from_elem((1, 1), x.sum() / x.len() as f64);
        let ng = self.needs(a);
        Ok(self.push(out, Op::Mean(a), ng))
    }

    /// Per-row sums as an r×1 column.
    pub fn row_sum(&mut self, a: Var) -> Var {
        let out = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ng = self.needs(a);
        self.push(out, Op::RowSum(a), ng)
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let x = self.value(a);
        if let Some(&bad) = rows.iter().find(|&&r| r >= x.nrows()) {
            return Err(Error::Shape(format!(
                "gather_rows: row {bad} of a {} matrix",
                shape_str(x)
            )));
        }
        let out = x.select(Axis(0), rows);
        let ng = self.needs(a);
        Ok(self.push(out, Op::GatherRows(a, rows.to_vec()), ng))
    }

    /// Left-multiplies by a fixed sparse matrix.
    pub fn sparse_matmul(&mut self, matrix: &Arc<SparseMatrix>, a: Var) -> Result<Var> {
        let x = self.value(a);
        if matrix.n_cols != x.nrows() {
            return Err(Error::Shape(format!(
                "sparse_matmul: {}×{} · {}",
                matrix.n_rows,
                matrix.n_cols,
                shape_str(x)
            )));
        }
        let out = matrix.apply(x);
        let ng = self.needs(a);
        Ok(self.push(out, Op::Sparse(a, Arc::clone(matrix)), ng))
    }

    /// Divides a row or column vector by its Euclidean norm.
    ///
    /// The backward pass applies the dense Jacobian `(I − ŷŷᵀ)/‖v‖`, so every
    /// input entry receives gradient from every output entry. When
    /// `‖v‖ < 1e−12` the output and its gradient are zero and the returned
    /// flag is `true`.
    pub fn l2_normalize(&mut self, a: Var) -> Result<(Var, bool)> {
        let x = self.value(a);
        if x.nrows() != 1 && x.ncols() != 1 {
            return Err(Error::Shape(format!(
                "l2_normalize expects a vector, got {}",
                shape_str(x)
            )));
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let degenerate = !(norm >= L2_DEGENERATE_NORM);
        let out = if degenerate {
            Array2::zeros(x.raw_dim())
        } else {
            x / norm
        };
        let ng = self.needs(a);
        let norm = if degenerate { 0.0 } else { norm };
        Ok((self.push(out, Op::L2Normalize { input: a, norm }, ng), degenerate))
    }

    /// Mean binary cross-entropy of probabilities `pred` against constant
    /// `labels` of the same shape.
    pub fn bce(&mut self, pred: Var, labels: Array2<f64>) -> Result<Var> {
        let p = self.value(pred);
        if p.raw_dim() != labels.raw_dim() {
            return Err(Error::Shape(format!(
                "bce: predictions {} vs labels {}",
                shape_str(p),
                shape_str(&labels)
            )));
        }
        if p.is_empty() {
            return Err(Error::Shape("bce of an empty batch".into()));
        }
        let mut total = 0.0;
        Zip::from(p).and(&labels).for_each(|&p, &y| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            total -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
        });
        let out = Array2::from_elem((1, 1), total / p.len() as f64);
        let ng = self.needs(pred);
        Ok(self.push(out, Op::Bce { pred, labels }, ng))
    }

    /// Reverse sweep from a 1×1 `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.value(loss).dim();
        if shape != (1, 1) {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got {}×{}",
                shape.0, shape.1
            )));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));
        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Array2<f64>, grads: &mut [Option<Array2<f64>>]) {
        let mut send = |v: Var, contribution: Array2<f64>| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => *acc += &contribution,
                slot @ None => *slot = Some(contribution),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    send(*a, g.dot(&self.value(*b).t()));
                }
                if self.needs(*b) {
                    send(*b, self.value(*a).t().dot(g));
                }
            }
            Op::Add(a, b) => {
                send(*a, reduce_to(g.clone(), self.value(*a).dim()));
                send(*b, reduce_to(g.clone(), self.value(*b).dim()));
            }
            Op::Sub(a, b) => {
                send(*a, reduce_to(g.clone(), self.value(*a).dim()));
                send(*b, reduce_to(-g, self.value(*b).dim()));
            }
            Op::Mul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                if self.needs(*a) {
                    send(*a, reduce_to(g * y, x.dim()));
                }
                if self.needs(*b) {
                    send(*b, reduce_to(g * x, y.dim()));
                }
            }
            Op::Scale(a, f) => send(*a, g * *f),
            Op::Transpose(a) => send(*a, g.t().to_owned()),
            Op::Relu(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(self.value(*a))
                    .for_each(|d, &x| {
                        if x <= 0.0 {
                            *d = 0.0
                        }
                    });
                send(*a, d);
            }
            Op::Sigmoid(a) => {
                let mut d = g.clone();
                Zip::from(&mut d)
                    .and(&node.value)
                    .for_each(|d, &s| *d *= s * (1.0 - s));
                send(*a, d);
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let width = self.value(p).ncols();
                    if self.needs(p) {
                        send(
                            p,
                            g.slice(ndarray::s![.., start..start + width]).to_owned(),
                        );
                    }
                    start += width;
                }
            }
            Op::Sum(a) => send(*a, Array2::from_elem(self.value(*a).dim(), g[[0, 0]])),
            Op::Mean(a) => {
                let x = self.value(*a);
                send(*a, Array2::from_elem(x.dim(), g[[0, 0]] / x.len() as f64));
            }
            Op::RowSum(a) => send(*a, broadcast_to(g, self.value(*a).dim())),
            Op::GatherRows(a, rows) => {
                let mut d = Array2::zeros(self.value(*a).dim());
                for (i, &r) in rows.iter().enumerate() {
                    let mut dst = d.row_mut(r);
                    dst += &g.row(i);
                }
                send(*a, d);
            }
            Op::Sparse(a, matrix) => send(*a, matrix.apply_transpose(g)),
            Op::L2Normalize { input, norm } => {
                if *norm == 0.0 {
                    send(*input, Array2::zeros(g.dim()));
                } else {
                    let y = &node.value;
                    let proj: f64 = (y * g).sum();
                    send(*input, (g - &(y * proj)) / *norm);
                }
            }
            Op::Bce { pred, labels } => {
                let p = self.value(*pred);
                let m = p.len() as f64;
                let mut d = Array2::zeros(p.dim());
                Zip::from(&mut d)
                    .and(p)
                    .and(labels)
                    .for_each(|d, &p, &y| {
                        // Evaluated at the clamped value so saturated
                        // predictions still receive a gradient.
                        let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                        *d = g[[0, 0]] * (p - y) / (p * (1.0 - p)) / m;
                    });
                send(*pred, d);
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

/// Dense Jacobian of `v ↦ v/‖v‖` at `v`, for inspection and testing.
pub fn l2_normalize_jacobian(v: &[f64]) -> Array2<f64> {
    let n = v.len();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut jac = Array2::zeros((n, n));
    if norm < L2_DEGENERATE_NORM {
        return jac;
    }
    for i in 0..n {
        for j in 0..n {
            let delta = if i == j { 1.0 } else { 0.0 };
            jac[[i, j]] = (delta - v[i] * v[j] / (norm * norm)) / norm;
        }
    }
    jac
}

/// Gradients of a scalar with respect to every node that required one.
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// `None` when `v` does not influence the loss or is a constant.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
