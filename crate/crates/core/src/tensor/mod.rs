//! Reverse-mode automatic differentiation over a flat operation tape.
//!
//! A [`Tape`] owns every tensor created during one forward pass. Operations
//! append nodes and record enough metadata to replay the chain rule in
//! reverse creation order, which is already a topological order because the
//! tape is append-only. Tensors are rank 1 or rank 2 (a row per point, a
//! column per coordinate); values are checked for NaN/infinity as they are
//! written so numerical failures surface at the operation that caused them.
//!
//! Tapes are independent: several may run concurrently, and running the same
//! operations on the same inputs yields bitwise-identical values and
//! gradients because accumulation order is fixed by construction.

mod gradcheck;

pub use gradcheck::gradient_check;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TensorId(usize);

/// Reduction extent: a single axis of a rank-2 tensor, or everything.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    All,
    Axis(usize),
}

#[derive(Debug)]
enum Op<S> {
    Leaf,
    Add(TensorId, TensorId),
    Sub(TensorId, TensorId),
    Mul(TensorId, TensorId),
    AddScalar(TensorId),
    MulScalar(TensorId, S),
    MatMul(TensorId, TensorId),
    Exp(TensorId),
    Log(TensorId),
    Tanh(TensorId),
    Relu(TensorId),
    Sum(TensorId, Reduce),
    Mean(TensorId, Reduce),
    /// `argmax` holds, per output element, the flat input index that won.
    Max {
        x: TensorId,
        argmax: Vec<usize>,
    },
    Concat(Vec<TensorId>),
    Slice {
        x: TensorId,
        start: usize,
    },
    Select {
        x: TensorId,
        cols: Vec<usize>,
    },
    Broadcast(TensorId),
    Reshape(TensorId),
}

#[derive(Debug)]
pub struct Tensor<S> {
    pub data: Vec<S>,
    pub shape: Vec<usize>,
    pub requires_grad: bool,
    pub grad: Option<Vec<S>>,
    op: Op<S>,
}

pub struct Tape<S> {
    nodes: Vec<Tensor<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn rows_cols(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        1 => (1, shape[0]),
        2 => (shape[0], shape[1]),
        _ => unreachable!("tape admits only rank 1 or 2"),
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn data(&self, id: TensorId) -> &[S] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Gradient of the last `backward` root with respect to `id`. `None` for
    /// tensors outside the differentiated set.
    pub fn grad(&self, id: TensorId) -> Option<&[S]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Value of a single-element tensor.
    pub fn scalar_value(&self, id: TensorId) -> S {
        debug_assert_eq!(numel(&self.nodes[id.0].shape), 1);
        self.nodes[id.0].data[0]
    }

    fn push(
        &mut self,
        data: Vec<S>,
        shape: Vec<usize>,
        requires_grad: bool,
        op: Op<S>,
        context: &'static str,
    ) -> Result<TensorId> {
        debug_assert_eq!(numel(&shape), data.len());
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: context.to_string(),
            });
        }
        self.nodes.push(Tensor {
            data,
            shape,
            requires_grad,
            grad: None,
            op,
        });
        Ok(TensorId(self.nodes.len() - 1))
    }

    pub fn leaf(&mut self, data: Vec<S>, shape: Vec<usize>, requires_grad: bool) -> Result<TensorId> {
        if shape.is_empty() || shape.len() > 2 {
            return Err(Error::InvalidArgument(format!(
                "leaf: rank must be 1 or 2, got shape {shape:?}"
            )));
        }
        if numel(&shape) != data.len() {
            return Err(Error::InvalidArgument(format!(
                "leaf: shape {:?} wants {} values, got {}",
                shape,
                numel(&shape),
                data.len()
            )));
        }
        self.push(data, shape, requires_grad, Op::Leaf, "leaf")
    }

    pub fn constant(&mut self, data: Vec<S>, shape: Vec<usize>) -> Result<TensorId> {
        self.leaf(data, shape, false)
    }

    pub fn scalar(&mut self, v: S) -> Result<TensorId> {
        self.constant(vec![v], vec![1])
    }

    // ── elementwise ──

    fn binary_map(
        &mut self,
        op_name: &'static str,
        a: TensorId,
        b: TensorId,
        f: impl Fn(S, S) -> S,
        op: Op<S>,
    ) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: op_name,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let data = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(data, shape, rg, op, op_name)
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_map("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_map("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_map("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn unary_map(
        &mut self,
        op_name: &'static str,
        x: TensorId,
        f: impl Fn(S) -> S,
        op: Op<S>,
    ) -> Result<TensorId> {
        let data = self.data(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.requires_grad(x);
        self.push(data, shape, rg, op, op_name)
    }

    pub fn add_scalar(&mut self, x: TensorId, c: S) -> Result<TensorId> {
        self.unary_map("add_scalar", x, |v| v + c, Op::AddScalar(x))
    }

    pub fn mul_scalar(&mut self, x: TensorId, c: S) -> Result<TensorId> {
        self.unary_map("mul_scalar", x, |v| v * c, Op::MulScalar(x, c))
    }

    pub fn exp(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary_map("exp", x, |v| v.exp(), Op::Exp(x))
    }

    /// Natural log. Non-positive inputs produce non-finite values and are
    /// rejected, so the domain error is caught here rather than downstream.
    pub fn log(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary_map("log", x, |v| v.ln(), Op::Log(x))
    }

    pub fn tanh(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary_map("tanh", x, |v| v.tanh(), Op::Tanh(x))
    }

    pub fn relu(&mut self, x: TensorId) -> Result<TensorId> {
        self.unary_map("relu", x, |v| v.max(S::zero()), Op::Relu(x))
    }

    // ── linear algebra ──

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![S::zero(); m * n];
        S::gemm(
            m, k, n,
            S::one(),
            self.data(a), k as isize, 1,
            self.data(b), n as isize, 1,
            S::zero(),
            &mut out, n as isize, 1,
        );
        let rg = self.requires_grad(a) || self.requires_grad(b);
        self.push(out, vec![m, n], rg, Op::MatMul(a, b), "matmul")
    }

    /// x * W + b for a batch of rows: x is [n, i], w is [i, o], b is [o].
    pub fn affine(&mut self, x: TensorId, w: TensorId, b: TensorId) -> Result<TensorId> {
        let prod = self.matmul(x, w)?;
        let rows = self.shape(prod)[0];
        let bb = self.broadcast_rows(b, rows)?;
        self.add(prod, bb)
    }

    /// Replicates a rank-1 vector into `rows` identical rows.
    pub fn broadcast_rows(&mut self, v: TensorId, rows: usize) -> Result<TensorId> {
        let shape = self.shape(v);
        if shape.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "broadcast_rows",
                lhs: shape.to_vec(),
                rhs: vec![rows],
            });
        }
        let d = shape[0];
        let mut data = Vec::with_capacity(rows * d);
        for _ in 0..rows {
            data.extend_from_slice(self.data(v));
        }
        let rg = self.requires_grad(v);
        self.push(data, vec![rows, d], rg, Op::Broadcast(v), "broadcast_rows")
    }

    pub fn reshape(&mut self, x: TensorId, shape: Vec<usize>) -> Result<TensorId> {
        if shape.is_empty() || shape.len() > 2 || numel(&shape) != numel(self.shape(x)) {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(x).to_vec(),
                rhs: shape,
            });
        }
        let data = self.data(x).to_vec();
        let rg = self.requires_grad(x);
        self.push(data, shape, rg, Op::Reshape(x), "reshape")
    }

    // ── reductions ──

    fn reduce_check(&self, op: &'static str, x: TensorId, r: Reduce) -> Result<()> {
        let rank = self.shape(x).len();
        match r {
            Reduce::All => Ok(()),
            Reduce::Axis(a) if a < rank => Ok(()),
            Reduce::Axis(a) => Err(Error::InvalidArgument(format!(
                "{op}: axis {a} out of range for shape {:?}",
                self.shape(x)
            ))),
        }
    }

    fn reduce_sum_raw(&self, x: TensorId, r: Reduce) -> (Vec<S>, Vec<usize>) {
        let (rows, cols) = rows_cols(self.shape(x));
        let data = self.data(x);
        match (self.shape(x).len(), r) {
            (_, Reduce::All) | (1, Reduce::Axis(_)) => {
                let mut acc = S::zero();
                for &v in data {
                    acc = acc + v;
                }
                (vec![acc], vec![1])
            }
            (2, Reduce::Axis(0)) => {
                let mut out = vec![S::zero(); cols];
                for i in 0..rows {
                    for (j, o) in out.iter_mut().enumerate() {
                        *o = *o + data[i * cols + j];
                    }
                }
                (out, vec![cols])
            }
            (2, Reduce::Axis(1)) => {
                let mut out = vec![S::zero(); rows];
                for (i, o) in out.iter_mut().enumerate() {
                    for j in 0..cols {
                        *o = *o + data[i * cols + j];
                    }
                }
                (out, vec![rows])
            }
            _ => unreachable!(),
        }
    }

    pub fn sum(&mut self, x: TensorId, r: Reduce) -> Result<TensorId> {
        self.reduce_check("sum", x, r)?;
        let (data, shape) = self.reduce_sum_raw(x, r);
        let rg = self.requires_grad(x);
        self.push(data, shape, rg, Op::Sum(x, r), "sum")
    }

    pub fn mean(&mut self, x: TensorId, r: Reduce) -> Result<TensorId> {
        self.reduce_check("mean", x, r)?;
        if self.data(x).is_empty() {
            return Err(Error::InvalidArgument("mean: empty tensor".into()));
        }
        let (mut data, shape) = self.reduce_sum_raw(x, r);
        let count = numel(self.shape(x)) / numel(&shape);
        let inv = S::one() / S::from_f64(count as f64);
        for v in &mut data {
            *v = *v * inv;
        }
        let rg = self.requires_grad(x);
        self.push(data, shape, rg, Op::Mean(x, r), "mean")
    }

    /// Max over one axis. Ties route the gradient to the lowest flat index,
    /// so backward is deterministic.
    pub fn max(&mut self, x: TensorId, axis: usize) -> Result<TensorId> {
        self.reduce_check("max", x, Reduce::Axis(axis))?;
        let (rows, cols) = rows_cols(self.shape(x));
        if rows == 0 || cols == 0 || self.data(x).is_empty() {
            return Err(Error::InvalidArgument("max: empty tensor".into()));
        }
        let data = self.data(x);
        let rank = self.shape(x).len();
        let (out, argmax, shape) = if rank == 1 || axis == 1 {
            // max over each row
            let mut out = Vec::with_capacity(rows);
            let mut arg = Vec::with_capacity(rows);
            for i in 0..rows {
                let row = &data[i * cols..(i + 1) * cols];
                let (mut bi, mut bv) = (0usize, row[0]);
                for (j, &v) in row.iter().enumerate().skip(1) {
                    if v > bv {
                        bv = v;
                        bi = j;
                    }
                }
                out.push(bv);
                arg.push(i * cols + bi);
            }
            (out, arg, vec![rows])
        } else {
            // max over each column
            let mut out = Vec::with_capacity(cols);
            let mut arg = Vec::with_capacity(cols);
            for j in 0..cols {
                let (mut bi, mut bv) = (0usize, data[j]);
                for i in 1..rows {
                    let v = data[i * cols + j];
                    if v > bv {
                        bv = v;
                        bi = i;
                    }
                }
                out.push(bv);
                arg.push(bi * cols + j);
            }
            (out, arg, vec![cols])
        };
        let rg = self.requires_grad(x);
        self.push(out, shape, rg, Op::Max { x, argmax }, "max")
    }

    // ── structure: concat, slice, select along the last axis ──

    pub fn concat(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("concat: no inputs".into()));
        }
        let rank = self.shape(parts[0]).len();
        let (rows, _) = rows_cols(self.shape(parts[0]));
        let mut total_cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != rank || rows_cols(s).0 != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat",
                    lhs: self.shape(parts[0]).to_vec(),
                    rhs: s.to_vec(),
                });
            }
            total_cols += rows_cols(s).1;
        }
        let mut data = Vec::with_capacity(rows * total_cols);
        for i in 0..rows {
            for &p in parts {
                let c = rows_cols(self.shape(p)).1;
                data.extend_from_slice(&self.data(p)[i * c..(i + 1) * c]);
            }
        }
        let shape = if rank == 1 {
            vec![total_cols]
        } else {
            vec![rows, total_cols]
        };
        let rg = parts.iter().any(|&p| self.requires_grad(p));
        self.push(data, shape, rg, Op::Concat(parts.to_vec()), "concat")
    }

    /// Contiguous column range [start, start+len).
    pub fn slice_cols(&mut self, x: TensorId, start: usize, len: usize) -> Result<TensorId> {
        let (rows, cols) = rows_cols(self.shape(x));
        if start + len > cols || len == 0 {
            return Err(Error::InvalidArgument(format!(
                "slice_cols: range {start}..{} out of {cols} columns",
                start + len
            )));
        }
        let rank = self.shape(x).len();
        let data_in = self.data(x);
        let mut data = Vec::with_capacity(rows * len);
        for i in 0..rows {
            data.extend_from_slice(&data_in[i * cols + start..i * cols + start + len]);
        }
        let shape = if rank == 1 { vec![len] } else { vec![rows, len] };
        let rg = self.requires_grad(x);
        self.push(data, shape, rg, Op::Slice { x, start }, "slice_cols")
    }

    /// Arbitrary column gather; `cols` may repeat or reorder. A permutation
    /// layer is the bijective case.
    pub fn select_cols(&mut self, x: TensorId, cols: &[usize]) -> Result<TensorId> {
        let (rows, width) = rows_cols(self.shape(x));
        if cols.is_empty() || cols.iter().any(|&c| c >= width) {
            return Err(Error::InvalidArgument(format!(
                "select_cols: indices {cols:?} out of {width} columns"
            )));
        }
        let rank = self.shape(x).len();
        let data_in = self.data(x);
        let mut data = Vec::with_capacity(rows * cols.len());
        for i in 0..rows {
            for &c in cols {
                data.push(data_in[i * width + c]);
            }
        }
        let shape = if rank == 1 {
            vec![cols.len()]
        } else {
            vec![rows, cols.len()]
        };
        let rg = self.requires_grad(x);
        self.push(
            data,
            shape,
            rg,
            Op::Select {
                x,
                cols: cols.to_vec(),
            },
            "select_cols",
        )
    }

    // ── backward ──

    /// Reverse pass from a single-element root. Fills `grad` on every node
    /// that requires gradients (zeros where the root does not depend on it)
    /// and clears previous gradients first.
    pub fn backward(&mut self, root: TensorId) -> Result<()> {
        if numel(self.shape(root)) != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward: root must be a single element, got shape {:?}",
                self.shape(root)
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<S>>> = (0..n).map(|_| None).collect();
        if self.nodes[root.0].requires_grad {
            grads[root.0] = Some(vec![S::one()]);
        }

        for i in (0..n).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        for (i, node) in self.nodes.iter_mut().enumerate() {
            node.grad = if node.requires_grad {
                Some(
                    grads[i]
                        .take()
                        .unwrap_or_else(|| vec![S::zero(); node.data.len()]),
                )
            } else {
                None
            };
        }
        Ok(())
    }

    fn accum(&self, grads: &mut [Option<Vec<S>>], id: TensorId, delta: impl Fn(&mut [S])) {
        if !self.nodes[id.0].requires_grad {
            return;
        }
        let slot = grads[id.0].get_or_insert_with(|| vec![S::zero(); self.nodes[id.0].data.len()]);
        delta(slot);
    }

    fn propagate(&self, i: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accum(grads, *a, |s| add_assign(s, g));
                self.accum(grads, *b, |s| add_assign(s, g));
            }
            Op::Sub(a, b) => {
                self.accum(grads, *a, |s| add_assign(s, g));
                self.accum(grads, *b, |s| {
                    for (o, &gv) in s.iter_mut().zip(g) {
                        *o = *o - gv;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (da, db) = (self.data(*a), self.data(*b));
                self.accum(grads, *a, |s| {
                    for ((o, &gv), &bv) in s.iter_mut().zip(g).zip(db) {
                        *o = *o + gv * bv;
                    }
                });
                self.accum(grads, *b, |s| {
                    for ((o, &gv), &av) in s.iter_mut().zip(g).zip(da) {
                        *o = *o + gv * av;
                    }
                });
            }
            Op::AddScalar(x) => self.accum(grads, *x, |s| add_assign(s, g)),
            Op::MulScalar(x, c) => {
                let c = *c;
                self.accum(grads, *x, |s| {
                    for (o, &gv) in s.iter_mut().zip(g) {
                        *o = *o + gv * c;
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                let (da, db) = (self.data(*a), self.data(*b));
                // dA += dC * B^T
                self.accum(grads, *a, |s| {
                    S::gemm(
                        m, n, k,
                        S::one(),
                        g, n as isize, 1,
                        db, 1, n as isize,
                        S::one(),
                        s, k as isize, 1,
                    );
                });
                // dB += A^T * dC
                self.accum(grads, *b, |s| {
                    S::gemm(
                        k, m, n,
                        S::one(),
                        da, 1, k as isize,
                        g, n as isize, 1,
                        S::one(),
                        s, n as isize, 1,
                    );
                });
            }
            Op::Exp(x) => {
                let y = &node.data;
                self.accum(grads, *x, |s| {
                    for ((o, &gv), &yv) in s.iter_mut().zip(g).zip(y) {
                        *o = *o + gv * yv;
                    }
                });
            }
            Op::Log(x) => {
                let dx = self.data(*x);
                self.accum(grads, *x, |s| {
                    for ((o, &gv), &xv) in s.iter_mut().zip(g).zip(dx) {
                        *o = *o + gv / xv;
                    }
                });
            }
            Op::Tanh(x) => {
                let y = &node.data;
                self.accum(grads, *x, |s| {
                    for ((o, &gv), &yv) in s.iter_mut().zip(g).zip(y) {
                        *o = *o + gv * (S::one() - yv * yv);
                    }
                });
            }
            Op::Relu(x) => {
                let dx = self.data(*x);
                self.accum(grads, *x, |s| {
                    for ((o, &gv), &xv) in s.iter_mut().zip(g).zip(dx) {
                        if xv > S::zero() {
                            *o = *o + gv;
                        }
                    }
                });
            }
            Op::Sum(x, r) => self.spread_reduce(grads, *x, *r, g, None),
            Op::Mean(x, r) => {
                let count = numel(self.shape(*x)) / node.data.len();
                let inv = S::one() / S::from_f64(count as f64);
                self.spread_reduce(grads, *x, *r, g, Some(inv));
            }
            Op::Max { x, argmax } => {
                self.accum(grads, *x, |s| {
                    for (o, &flat) in g.iter().zip(argmax) {
                        s[flat] = s[flat] + *o;
                    }
                });
            }
            Op::Concat(parts) => {
                let (rows, total) = rows_cols(&node.shape);
                let mut offset = 0;
                for &p in parts {
                    let c = rows_cols(self.shape(p)).1;
                    let off = offset;
                    self.accum(grads, p, |s| {
                        for i in 0..rows {
                            for j in 0..c {
                                s[i * c + j] = s[i * c + j] + g[i * total + off + j];
                            }
                        }
                    });
                    offset += c;
                }
            }
            Op::Slice { x, start } => {
                let (rows, len) = rows_cols(&node.shape);
                let cols = rows_cols(self.shape(*x)).1;
                let start = *start;
                self.accum(grads, *x, |s| {
                    for i in 0..rows {
                        for j in 0..len {
                            let t = i * cols + start + j;
                            s[t] = s[t] + g[i * len + j];
                        }
                    }
                });
            }
            Op::Select { x, cols } => {
                let rows = rows_cols(&node.shape).0;
                let width = rows_cols(self.shape(*x)).1;
                self.accum(grads, *x, |s| {
                    for i in 0..rows {
                        for (j, &c) in cols.iter().enumerate() {
                            let t = i * width + c;
                            s[t] = s[t] + g[i * cols.len() + j];
                        }
                    }
                });
            }
            Op::Broadcast(v) => {
                let (rows, d) = rows_cols(&node.shape);
                self.accum(grads, *v, |s| {
                    for i in 0..rows {
                        for (j, o) in s.iter_mut().enumerate() {
                            *o = *o + g[i * d + j];
                        }
                    }
                });
            }
            Op::Reshape(x) => self.accum(grads, *x, |s| add_assign(s, g)),
        }
    }

    fn spread_reduce(
        &self,
        grads: &mut [Option<Vec<S>>],
        x: TensorId,
        r: Reduce,
        g: &[S],
        scale: Option<S>,
    ) {
        let shape = self.shape(x);
        let (rows, cols) = rows_cols(shape);
        let rank = shape.len();
        let apply = |gv: S| match scale {
            Some(c) => gv * c,
            None => gv,
        };
        match (rank, r) {
            (_, Reduce::All) | (1, Reduce::Axis(_)) => {
                let gv = apply(g[0]);
                self.accum(grads, x, |s| {
                    for o in s.iter_mut() {
                        *o = *o + gv;
                    }
                });
            }
            (2, Reduce::Axis(0)) => {
                self.accum(grads, x, |s| {
                    for i in 0..rows {
                        for j in 0..cols {
                            s[i * cols + j] = s[i * cols + j] + apply(g[j]);
                        }
                    }
                });
            }
            (2, Reduce::Axis(1)) => {
                self.accum(grads, x, |s| {
                    for i in 0..rows {
                        for j in 0..cols {
                            s[i * cols + j] = s[i * cols + j] + apply(g[i]);
                        }
                    }
                });
            }
            _ => unreachable!(),
        }
    }
}

fn add_assign<S: Scalar>(out: &mut [S], g: &[S]) {
    for (o, &gv) in out.iter_mut().zip(g) {
        *o = *o + gv;
    }
}
