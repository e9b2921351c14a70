//! Reverse-mode differentiation tape.
//!
//! A [`Tape`] records every forward operation as a node holding its output
//! value. [`Tape::backward`] walks the nodes once in reverse order and returns
//! the gradient of a scalar with respect to every node that requires one.

use rand::Rng;

use super::tensor::{gemm, Tensor};
use super::NumError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Down the rows: one result per column.
    Rows,
    /// Across the columns: one result per row.
    Cols,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Recip(Var),
    Clamp(Var, f64, f64),
    Softmax(Var, Axis),
    Sum(Var),
    SumAxis(Var, Axis),
    SqNormRows(Var),
    SqNorm(Var),
    Dropout(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation. Owned by one worker for the duration of a forward
/// and backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> NumError {
    NumError::Shape {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_raw(a.rows(), a.cols(), data)
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => {
            for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                *a += v;
            }
        }
        None => *slot = Some(g),
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Result<Var, NumError> {
        if !value.is_finite() {
            return Err(NumError::NonFinite(op_name(&op)));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Inserts an input tensor. `requires_grad` marks it as a differentiation
    /// target.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(shape_err("matmul", av, bv));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), false, 0.0, &mut out);
        let rg = self.rg(&[a, b]);
        self.push(Tensor::from_raw(m, n, out), Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ`; the layout used for `x Wᵀ` with weights stored `out × in`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(shape_err("matmul_t", av, bv));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.rows());
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, av.data(), false, bv.data(), true, 0.0, &mut out);
        let rg = self.rg(&[a, b]);
        self.push(Tensor::from_raw(m, n, out), Op::MatMulT(a, b), rg)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NumError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(op, av, bv));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.same_shape("add", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.same_shape("sub", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Sub(a, b), rg)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumError> {
        self.same_shape("mul", a, b)?;
        let out = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Mul(a, b), rg)
    }

    /// Adds a `1 × n` row to every row of an `m × n` tensor (bias add).
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, NumError> {
        let (av, rv) = (self.value(a), self.value(row));
        if rv.rows() != 1 || rv.cols() != av.cols() {
            return Err(shape_err("add_row", av, rv));
        }
        let n = av.cols();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + rv.data()[i % n])
            .collect();
        let out = Tensor::from_raw(av.rows(), n, data);
        let rg = self.rg(&[a, row]);
        self.push(out, Op::AddRow(a, row), rg)
    }

    /// Multiplies every row `i` of an `m × n` tensor by entry `i` of an
    /// `m × 1` column.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var, NumError> {
        let (av, cv) = (self.value(a), self.value(col));
        if cv.cols() != 1 || cv.rows() != av.rows() {
            return Err(shape_err("mul_col", av, cv));
        }
        let n = av.cols();
        let data = av
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * cv.data()[i / n])
            .collect();
        let out = Tensor::from_raw(av.rows(), n, data);
        let rg = self.rg(&[a, col]);
        self.push(out, Op::MulCol(a, col), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, NumError> {
        let out = self.value(a).scale(s);
        let rg = self.rg(&[a]);
        self.push(out, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var, NumError> {
        let out = self.value(a).map(|x| x + s);
        let rg = self.rg(&[a]);
        self.push(out, Op::AddScalar(a), rg)
    }

    /// Side-by-side concatenation; all parts must share a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        let first = parts
            .first()
            .ok_or_else(|| NumError::Contract("concat of zero tensors".into()))?;
        let rows = self.value(*first).rows();
        for p in parts {
            if self.value(*p).rows() != rows {
                return Err(shape_err("concat_cols", self.value(*first), self.value(*p)));
            }
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row_slice(r));
            }
        }
        let rg = self.rg(parts);
        self.push(Tensor::from_raw(rows, cols, data), Op::ConcatCols(parts.to_vec()), rg)
    }

    /// Stacked concatenation; all parts must share a column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumError> {
        let first = parts
            .first()
            .ok_or_else(|| NumError::Contract("concat of zero tensors".into()))?;
        let cols = self.value(*first).cols();
        let mut data = Vec::new();
        for p in parts {
            let v = self.value(*p);
            if v.cols() != cols {
                return Err(shape_err("concat_rows", self.value(*first), v));
            }
            data.extend_from_slice(v.data());
        }
        let rows = data.len() / cols;
        let rg = self.rg(parts);
        self.push(Tensor::from_raw(rows, cols, data), Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var, NumError> {
        match axis {
            Axis::Rows => self.concat_rows(parts),
            Axis::Cols => self.concat_cols(parts),
        }
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NumError> {
        let av = self.value(a);
        if len == 0 || start + len > av.cols() {
            return Err(NumError::Contract(format!(
                "column slice {start}..{} out of range for shape {:?}",
                start + len,
                av.shape()
            )));
        }
        let mut data = Vec::with_capacity(av.rows() * len);
        for r in 0..av.rows() {
            data.extend_from_slice(&av.row_slice(r)[start..start + len]);
        }
        let out = Tensor::from_raw(av.rows(), len, data);
        let rg = self.rg(&[a]);
        self.push(out, Op::SliceCols(a, start), rg)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var, NumError> {
        let av = self.value(a);
        if len == 0 || start + len > av.rows() {
            return Err(NumError::Contract(format!(
                "row slice {start}..{} out of range for shape {:?}",
                start + len,
                av.shape()
            )));
        }
        let n = av.cols();
        let out = Tensor::from_raw(len, n, av.data()[start * n..(start + len) * n].to_vec());
        let rg = self.rg(&[a]);
        self.push(out, Op::SliceRows(a, start), rg)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var, NumError> {
        let out = self.value(a).map(f);
        let rg = self.rg(&[a]);
        self.push(out, op, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var, NumError> {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, NumError> {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, NumError> {
        self.unary(a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, NumError> {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var, NumError> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| x <= 0.0) {
            return Err(NumError::Domain {
                op: "log",
                detail: format!("non-positive argument {bad}"),
            });
        }
        self.unary(a, f64::ln, Op::Log(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var, NumError> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| x <= 0.0) {
            return Err(NumError::Domain {
                op: "sqrt",
                detail: format!("non-positive argument {bad}"),
            });
        }
        self.unary(a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn recip(&mut self, a: Var) -> Result<Var, NumError> {
        if self.value(a).data().contains(&0.0) {
            return Err(NumError::Domain {
                op: "recip",
                detail: "division by zero".into(),
            });
        }
        self.unary(a, |x| 1.0 / x, Op::Recip(a))
    }

    /// Clamps into `[lo, hi]`. The gradient is zero wherever the clamp binds.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var, NumError> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(NumError::Contract(format!("clamp bounds {lo} > {hi}")));
        }
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    pub fn softmax(&mut self, a: Var, axis: Axis) -> Result<Var, NumError> {
        let av = self.value(a);
        let (rows, cols) = (av.rows(), av.cols());
        let mut out = av.clone();
        let (outer, inner, stride_outer, stride_inner) = match axis {
            Axis::Cols => (rows, cols, cols, 1),
            Axis::Rows => (cols, rows, 1, cols),
        };
        let d = out.data_mut();
        for o in 0..outer {
            let idx = |i: usize| o * stride_outer + i * stride_inner;
            let max = (0..inner).map(|i| d[idx(i)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for i in 0..inner {
                let e = (d[idx(i)] - max).exp();
                d[idx(i)] = e;
                total += e;
            }
            for i in 0..inner {
                d[idx(i)] /= total;
            }
        }
        let rg = self.rg(&[a]);
        self.push(out, Op::Softmax(a, axis), rg)
    }

    /// Sum of all entries, `1 × 1`.
    pub fn sum(&mut self, a: Var) -> Result<Var, NumError> {
        let total = self.value(a).data().iter().sum();
        let rg = self.rg(&[a]);
        self.push(Tensor::scalar(total), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, NumError> {
        let n = self.value(a).len() as f64;
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n)
    }

    /// Sum along an axis: `Cols` gives an `m × 1` column of row sums, `Rows`
    /// a `1 × n` row of column sums.
    pub fn sum_axis(&mut self, a: Var, axis: Axis) -> Result<Var, NumError> {
        let av = self.value(a);
        let (rows, cols) = (av.rows(), av.cols());
        let out = match axis {
            Axis::Cols => {
                let data = (0..rows).map(|r| av.row_slice(r).iter().sum()).collect();
                Tensor::from_raw(rows, 1, data)
            }
            Axis::Rows => {
                let mut data = vec![0.0; cols];
                for r in 0..rows {
                    for (acc, v) in data.iter_mut().zip(av.row_slice(r)) {
                        *acc += v;
                    }
                }
                Tensor::from_raw(1, cols, data)
            }
        };
        let rg = self.rg(&[a]);
        self.push(out, Op::SumAxis(a, axis), rg)
    }

    /// Squared Euclidean norm of every row, `m × 1`.
    pub fn sq_norm_rows(&mut self, a: Var) -> Result<Var, NumError> {
        let av = self.value(a);
        let data = (0..av.rows())
            .map(|r| av.row_slice(r).iter().map(|v| v * v).sum())
            .collect();
        let out = Tensor::from_raw(av.rows(), 1, data);
        let rg = self.rg(&[a]);
        self.push(out, Op::SqNormRows(a), rg)
    }

    /// Squared Frobenius norm, `1 × 1`.
    pub fn sq_norm(&mut self, a: Var) -> Result<Var, NumError> {
        let out = Tensor::scalar(self.value(a).sq_norm());
        let rg = self.rg(&[a]);
        self.push(out, Op::SqNorm(a), rg)
    }

    /// Inverted dropout. Identity when `training` is false; otherwise each
    /// entry is zeroed with probability `p` and survivors scaled by `1/(1-p)`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        a: Var,
        p: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<Var, NumError> {
        if !(0.0..1.0).contains(&p) {
            return Err(NumError::Contract(format!("dropout rate {p} outside [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let av = self.value(a);
        let data = av.data().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let out = Tensor::from_raw(av.rows(), av.cols(), data);
        let rg = self.rg(&[a]);
        self.push(out, Op::Dropout(a, mask), rg)
    }

    /// Propagates the gradient of the scalar `loss` back to every node that
    /// requires one. Consumes the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients, NumError> {
        let lv = &self.nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(NumError::NonScalar(lv.shape()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(node, &g, &mut grads);
            // leaves keep their gradient; intermediates are dropped as we go
            if matches!(node.op, Op::Leaf) {
                grads[idx] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let mut send = |v: Var, t: Tensor| {
            if self.nodes[v.0].requires_grad {
                accumulate(&mut grads[v.0], t);
            }
        };
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if wants(*a) {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, bv.data(), true, 0.0, &mut ga);
                    send(*a, Tensor::from_raw(m, k, ga));
                }
                if wants(*b) {
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, av.data(), true, g.data(), false, 0.0, &mut gb);
                    send(*b, Tensor::from_raw(k, n, gb));
                }
            }
            Op::MatMulT(a, b) => {
                // out = a bᵀ with a: m×k, b: n×k
                let (av, bv) = (val(*a), val(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                if wants(*a) {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, bv.data(), false, 0.0, &mut ga);
                    send(*a, Tensor::from_raw(m, k, ga));
                }
                if wants(*b) {
                    let mut gb = vec![0.0; n * k];
                    gemm(n, m, k, g.data(), true, av.data(), false, 0.0, &mut gb);
                    send(*b, Tensor::from_raw(n, k, gb));
                }
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    send(*a, zip_map(g, val(*b), |x, y| x * y));
                }
                if wants(*b) {
                    send(*b, zip_map(g, val(*a), |x, y| x * y));
                }
            }
            Op::AddRow(a, row) => {
                send(*a, g.clone());
                if wants(*row) {
                    let n = g.cols();
                    let mut gr = vec![0.0; n];
                    for r in 0..g.rows() {
                        for (acc, v) in gr.iter_mut().zip(g.row_slice(r)) {
                            *acc += v;
                        }
                    }
                    send(*row, Tensor::from_raw(1, n, gr));
                }
            }
            Op::MulCol(a, col) => {
                let (av, cv) = (val(*a), val(*col));
                let n = av.cols();
                if wants(*a) {
                    let data = g
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| x * cv.data()[i / n])
                        .collect();
                    send(*a, Tensor::from_raw(av.rows(), n, data));
                }
                if wants(*col) {
                    let data = (0..av.rows())
                        .map(|r| {
                            g.row_slice(r)
                                .iter()
                                .zip(av.row_slice(r))
                                .map(|(x, y)| x * y)
                                .sum()
                        })
                        .collect();
                    send(*col, Tensor::from_raw(av.rows(), 1, data));
                }
            }
            Op::Scale(a, s) => send(*a, g.scale(*s)),
            Op::AddScalar(a) => send(*a, g.clone()),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let w = val(*p).cols();
                    if wants(*p) {
                        let mut data = Vec::with_capacity(g.rows() * w);
                        for r in 0..g.rows() {
                            data.extend_from_slice(&g.row_slice(r)[offset..offset + w]);
                        }
                        send(*p, Tensor::from_raw(g.rows(), w, data));
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let n = g.cols();
                let mut offset = 0;
                for p in parts {
                    let h = val(*p).rows();
                    if wants(*p) {
                        let data = g.data()[offset * n..(offset + h) * n].to_vec();
                        send(*p, Tensor::from_raw(h, n, data));
                    }
                    offset += h;
                }
            }
            Op::SliceCols(a, start) => {
                let av = val(*a);
                let mut ga = Tensor::zeros(av.rows(), av.cols());
                for r in 0..g.rows() {
                    for (c, v) in g.row_slice(r).iter().enumerate() {
                        ga.set(r, start + c, *v);
                    }
                }
                send(*a, ga);
            }
            Op::SliceRows(a, start) => {
                let av = val(*a);
                let n = av.cols();
                let mut ga = Tensor::zeros(av.rows(), n);
                ga.data_mut()[start * n..start * n + g.len()].copy_from_slice(g.data());
                send(*a, ga);
            }
            Op::Sigmoid(a) => send(*a, zip_map(g, out, |g, y| g * y * (1.0 - y))),
            Op::Tanh(a) => send(*a, zip_map(g, out, |g, y| g * (1.0 - y * y))),
            Op::Relu(a) => send(*a, zip_map(g, val(*a), |g, x| if x > 0.0 { g } else { 0.0 })),
            Op::Exp(a) => send(*a, zip_map(g, out, |g, y| g * y)),
            Op::Log(a) => send(*a, zip_map(g, val(*a), |g, x| g / x)),
            Op::Sqrt(a) => send(*a, zip_map(g, out, |g, y| g * 0.5 / y)),
            Op::Recip(a) => send(*a, zip_map(g, out, |g, y| -g * y * y)),
            Op::Clamp(a, lo, hi) => send(
                *a,
                zip_map(g, val(*a), |g, x| if x < *lo || x > *hi { 0.0 } else { g }),
            ),
            Op::Softmax(a, axis) => {
                let (rows, cols) = (out.rows(), out.cols());
                let (outer, inner, so, si) = match axis {
                    Axis::Cols => (rows, cols, cols, 1),
                    Axis::Rows => (cols, rows, 1, cols),
                };
                let mut ga = Tensor::zeros(rows, cols);
                let (y, gd) = (out.data(), g.data());
                let gad = ga.data_mut();
                for o in 0..outer {
                    let idx = |i: usize| o * so + i * si;
                    let dot: f64 = (0..inner).map(|i| gd[idx(i)] * y[idx(i)]).sum();
                    for i in 0..inner {
                        gad[idx(i)] = y[idx(i)] * (gd[idx(i)] - dot);
                    }
                }
                send(*a, ga);
            }
            Op::Sum(a) => {
                let av = val(*a);
                send(*a, Tensor::full(av.rows(), av.cols(), g.data()[0]));
            }
            Op::SumAxis(a, axis) => {
                let av = val(*a);
                let (rows, cols) = (av.rows(), av.cols());
                let data = (0..rows * cols)
                    .map(|i| match axis {
                        Axis::Cols => g.data()[i / cols],
                        Axis::Rows => g.data()[i % cols],
                    })
                    .collect();
                send(*a, Tensor::from_raw(rows, cols, data));
            }
            Op::SqNormRows(a) => {
                let av = val(*a);
                let n = av.cols();
                let data = av
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| 2.0 * x * g.data()[i / n])
                    .collect();
                send(*a, Tensor::from_raw(av.rows(), n, data));
            }
            Op::SqNorm(a) => {
                let s = 2.0 * g.data()[0];
                send(*a, val(*a).scale(s));
            }
            Op::Dropout(a, mask) => {
                let data = g.data().iter().zip(mask).map(|(x, m)| x * m).collect();
                send(*a, Tensor::from_raw(g.rows(), g.cols(), data));
            }
        }
    }
}

fn op_name(op: &Op) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::MatMul(..) => "matmul",
        Op::MatMulT(..) => "matmul_t",
        Op::Add(..) => "add",
        Op::Sub(..) => "sub",
        Op::Mul(..) => "mul",
        Op::AddRow(..) => "add_row",
        Op::MulCol(..) => "mul_col",
        Op::Scale(..) => "scale",
        Op::AddScalar(..) => "add_scalar",
        Op::ConcatCols(..) => "concat_cols",
        Op::ConcatRows(..) => "concat_rows",
        Op::SliceCols(..) => "slice_cols",
        Op::SliceRows(..) => "slice_rows",
        Op::Sigmoid(..) => "sigmoid",
        Op::Tanh(..) => "tanh",
        Op::Relu(..) => "relu",
        Op::Exp(..) => "exp",
        Op::Log(..) => "log",
        Op::Sqrt(..) => "sqrt",
        Op::Recip(..) => "recip",
        Op::Clamp(..) => "clamp",
        Op::Softmax(..) => "softmax",
        Op::Sum(..) => "sum",
        Op::SumAxis(..) => "sum_axis",
        Op::SqNormRows(..) => "sq_norm_rows",
        Op::SqNorm(..) => "sq_norm",
        Op::Dropout(..) => "dropout",
    }
}
