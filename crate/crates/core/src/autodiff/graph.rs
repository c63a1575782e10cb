//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! A [`Graph`] is rebuilt for every training step. Nodes are appended in
//! evaluation order, which is already a topological order, so the backward
//! pass is a single sweep over node indices from the root downwards.

use super::matrix::{gemm, Matrix};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    ClampMin(Var, f64),
    Scale(Var, f64),
    AddScalar(Var),
    SoftmaxRows(Var),
    SumAll(Var),
    SumRows(Var),
    RowSums(Var),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    ConcatCols(Vec<Var>),
    RepeatEach(Var, usize),
    TileRows(Var, usize),
    FoldRows(Var, usize),
    Reshape(Var),
}

/// A value in the graph together with the operation that produced it and the
/// gradient accumulated into it by [`Graph::backward`].
#[derive(Clone, Debug)]
pub struct DiffNode {
    value: Matrix,
    grad: Option<Matrix>,
    op: Op,
    requires_grad: bool,
}

impl DiffNode {
    pub fn value(&self) -> &Matrix {
        &self.value
    }

    pub fn grad(&self) -> Option<&Matrix> {
        self.grad.as_ref()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<DiffNode>,
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize)) -> Option<(usize, usize)> {
    let dim = |x: usize, y: usize| match (x, y) {
        _ if x == y => Some(x),
        (1, y) => Some(y),
        (x, 1) => Some(x),
        _ => None,
    };
    Some((dim(a.0, b.0)?, dim(a.1, b.1)?))
}

/// Reads `m` as if broadcast to `shape`.
#[inline]
fn bget(m: &Matrix, r: usize, c: usize) -> f64 {
    let rr = if m.rows() == 1 { 0 } else { r };
    let cc = if m.cols() == 1 { 0 } else { c };
    m.data()[rr * m.cols() + cc]
}

fn broadcast_map(a: &Matrix, b: &Matrix, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
    let shape = broadcast_shape(a.shape(), b.shape()).ok_or_else(|| {
        Error::config(format!(
            "operands of shape {:?} and {:?} do not broadcast",
            a.shape(),
            b.shape()
        ))
    })?;
    if a.shape() == b.shape() {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Matrix::from_vec(shape.0, shape.1, data);
    }
    let mut out = Matrix::zeros(shape.0, shape.1);
    for r in 0..shape.0 {
        for c in 0..shape.1 {
            out.set(r, c, f(bget(a, r, c), bget(b, r, c)));
        }
    }
    Ok(out)
}

/// Sums `g` down to `shape`, undoing a broadcast.
fn reduce_to(g: &Matrix, shape: (usize, usize)) -> Matrix {
    if g.shape() == shape {
        return g.clone();
    }
    let mut out = Matrix::zeros(shape.0, shape.1);
    for r in 0..g.rows() {
        let rr = if shape.0 == 1 { 0 } else { r };
        for c in 0..g.cols() {
            let cc = if shape.1 == 1 { 0 } else { c };
            out.data_mut()[rr * shape.1 + cc] += g.get(r, c);
        }
    }
    out
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, v: Var) -> &DiffNode {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.nodes[v.0].grad.as_ref()
    }

    /// Leaf that never receives a gradient (inputs, masks).
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf whose gradient is accumulated by `backward`.
    pub fn variable(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    fn push(&mut self, value: Matrix, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(DiffNode {
            value,
            grad: None,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let value = self.value(a).map(f);
        let rg = self.rg(a);
        self.push(value, op, rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = broadcast_map(self.value(a), self.value(b), |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = broadcast_map(self.value(a), self.value(b), |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = broadcast_map(self.value(a), self.value(b), |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, Op::Neg(a), |x| -x)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > 0.0 || x.is_nan() { x } else { 0.0 })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).data().iter().find(|&&x| x <= 0.0 || x.is_nan()) {
            return Err(Error::NumericDomain(format!("log of non-positive value {bad}")));
        }
        Ok(self.unary(a, Op::Log(a), f64::ln))
    }

    /// `max(a, floor)`; the gradient is zero where the floor is active.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        self.unary(a, Op::ClampMin(a, floor), |x| x.max(floor))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let value = softmax_rows(self.value(a))?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::SoftmaxRows(a), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(value, Op::SumAll(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len().max(1) as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Column sums as a 1×c row.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let mut out = Matrix::zeros(1, m.cols());
        for r in 0..m.rows() {
            for (o, v) in out.data_mut().iter_mut().zip(m.row(r)) {
                *o += v;
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::SumRows(a), rg)
    }

    /// Column means as a 1×c row.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let n = self.value(a).rows().max(1) as f64;
        let s = self.sum_rows(a);
        self.scale(s, 1.0 / n)
    }

    /// Row sums as an r×1 column.
    pub fn row_sums(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let data = (0..m.rows()).map(|r| m.row(r).iter().sum()).collect();
        let rg = self.rg(a);
        self.push(Matrix::column_vector(data), Op::RowSums(a), rg)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let m = self.value(a);
        if start >= end || end > m.cols() {
            return Err(Error::config(format!(
                "column slice {start}..{end} out of range for {} columns",
                m.cols()
            )));
        }
        let mut out = Matrix::zeros(m.rows(), end - start);
        for r in 0..m.rows() {
            out.row_mut(r).copy_from_slice(&m.row(r)[start..end]);
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceCols(a, start), rg))
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let m = self.value(a);
        if start >= end || end > m.rows() {
            return Err(Error::config(format!(
                "row slice {start}..{end} out of range for {} rows",
                m.rows()
            )));
        }
        let c = m.cols();
        let out = Matrix::from_vec(end - start, c, m.data()[start * c..end * c].to_vec())?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::SliceRows(a, start), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = match parts.first() {
            Some(&p) => self.value(p).rows(),
            None => return Err(Error::usage("concat of zero matrices")),
        };
        if parts.iter().any(|&p| self.value(p).rows() != rows) {
            return Err(Error::config("concat_cols operands differ in row count"));
        }
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for &p in parts {
                let src = self.value(p).row(r);
                out.row_mut(r)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Each row repeated `n` times consecutively: row `r·n + j` is row `r`.
    pub fn repeat_each(&mut self, a: Var, n: usize) -> Var {
        let m = self.value(a);
        let mut out = Matrix::zeros(m.rows() * n, m.cols());
        for r in 0..m.rows() {
            for j in 0..n {
                out.row_mut(r * n + j).copy_from_slice(m.row(r));
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::RepeatEach(a, n), rg)
    }

    /// The whole matrix stacked `n` times: row `b·rows + r` is row `r`.
    pub fn tile_rows(&mut self, a: Var, n: usize) -> Var {
        let m = self.value(a);
        let mut data = Vec::with_capacity(m.len() * n);
        for _ in 0..n {
            data.extend_from_slice(m.data());
        }
        let out = Matrix::from_vec(m.rows() * n, m.cols(), data).expect("tile shape");
        let rg = self.rg(a);
        self.push(out, Op::TileRows(a, n), rg)
    }

    /// Sums row blocks of height `period`: `out[t] = Σ_b a[b·period + t]`.
    /// The adjoint of [`Graph::tile_rows`].
    pub fn fold_rows(&mut self, a: Var, period: usize) -> Result<Var> {
        let m = self.value(a);
        if period == 0 || !m.rows().is_multiple_of(period) {
            return Err(Error::config(format!(
                "cannot fold {} rows with period {period}",
                m.rows()
            )));
        }
        let mut out = Matrix::zeros(period, m.cols());
        for r in 0..m.rows() {
            let t = r % period;
            for (o, v) in out.row_mut(t).iter_mut().zip(m.row(r)) {
                *o += v;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::FoldRows(a, period), rg))
    }

    /// Reinterprets the row-major data with a new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = Matrix::from_vec(rows, cols, self.value(a).data().to_vec())?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::Reshape(a), rg))
    }

    /// `x·W + b` with `b` broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let h = self.matmul(x, w)?;
        self.add(h, b)
    }

    /// Clears every accumulated gradient.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Propagates d(root)/d(node) to every node reachable from `root` that
    /// requires a gradient. Leaf gradients accumulate across calls; interior
    /// gradients hold the contribution of the latest call.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.value(root).shape() != (1, 1) {
            return Err(Error::usage(format!(
                "backward needs a scalar root, got shape {:?}",
                self.value(root).shape()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; root.0 + 1];
        grads[root.0] = Some(Matrix::scalar(1.0));

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            let node = &mut self.nodes[i];
            match (&node.op, &mut node.grad) {
                (Op::Leaf, Some(acc)) => acc.add_assign(&g),
                _ => node.grad = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut send = |v: Var, contrib: Matrix| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&contrib),
                slot => *slot = Some(contrib),
            }
        };
        let out = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    let mut ga = Matrix::zeros(val(*a).rows(), val(*a).cols());
                    gemm(g, false, val(*b), true, &mut ga, 0.0);
                    send(*a, ga);
                }
                if self.rg(*b) {
                    let mut gb = Matrix::zeros(val(*b).rows(), val(*b).cols());
                    gemm(val(*a), true, g, false, &mut gb, 0.0);
                    send(*b, gb);
                }
            }
            Op::Add(a, b) => {
                send(*a, reduce_to(g, val(*a).shape()));
                send(*b, reduce_to(g, val(*b).shape()));
            }
            Op::Sub(a, b) => {
                send(*a, reduce_to(g, val(*a).shape()));
                send(*b, reduce_to(&g.map(|x| -x), val(*b).shape()));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                if self.rg(*a) {
                    let full = broadcast_map(g, vb, |x, y| x * y).expect("shape checked in forward");
                    send(*a, reduce_to(&full, va.shape()));
                }
                if self.rg(*b) {
                    let full = broadcast_map(g, va, |x, y| x * y).expect("shape checked in forward");
                    send(*b, reduce_to(&full, vb.shape()));
                }
            }
            Op::Neg(a) => send(*a, g.map(|x| -x)),
            Op::Relu(a) => send(*a, zip_map(g, val(*a), |gi, x| if x > 0.0 { gi } else { 0.0 })),
            Op::Sigmoid(a) => send(*a, zip_map(g, out, |gi, y| gi * y * (1.0 - y))),
            Op::Log(a) => send(*a, zip_map(g, val(*a), |gi, x| gi / x)),
            Op::ClampMin(a, floor) => {
                let floor = *floor;
                send(*a, zip_map(g, val(*a), |gi, x| if x >= floor { gi } else { 0.0 }))
            }
            Op::Scale(a, c) => {
                let c = *c;
                send(*a, g.map(|x| x * c))
            }
            Op::AddScalar(a) => send(*a, g.clone()),
            Op::SoftmaxRows(a) => {
                let mut ga = Matrix::zeros(out.rows(), out.cols());
                for r in 0..out.rows() {
                    let (y, gr) = (out.row(r), g.row(r));
                    let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (o, (&yi, &gi)) in ga.row_mut(r).iter_mut().zip(y.iter().zip(gr)) {
                        *o = yi * (gi - dot);
                    }
                }
                send(*a, ga)
            }
            Op::SumAll(a) => {
                let s = g.item();
                let (r, c) = val(*a).shape();
                send(*a, Matrix::filled(r, c, s))
            }
            Op::SumRows(a) => {
                let (r, c) = val(*a).shape();
                let mut ga = Matrix::zeros(r, c);
                for i in 0..r {
                    ga.row_mut(i).copy_from_slice(g.row(0));
                }
                send(*a, ga)
            }
            Op::RowSums(a) => {
                let (r, c) = val(*a).shape();
                let mut ga = Matrix::zeros(r, c);
                for i in 0..r {
                    ga.row_mut(i).fill(g.get(i, 0));
                }
                send(*a, ga)
            }
            Op::SliceCols(a, start) => {
                let (r, c) = val(*a).shape();
                let mut ga = Matrix::zeros(r, c);
                for i in 0..r {
                    ga.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                }
                send(*a, ga)
            }
            Op::SliceRows(a, start) => {
                let (r, c) = val(*a).shape();
                let mut ga = Matrix::zeros(r, c);
                ga.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                send(*a, ga)
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let (r, c) = val(p).shape();
                    let mut gp = Matrix::zeros(r, c);
                    for i in 0..r {
                        gp.row_mut(i).copy_from_slice(&g.row(i)[off..off + c]);
                    }
                    off += c;
                    send(p, gp);
                }
            }
            Op::RepeatEach(a, n) => {
                let (r, c) = val(*a).shape();
                let mut ga = Matrix::zeros(r, c);
                for i in 0..r {
                    for j in 0..*n {
                        for (o, v) in ga.row_mut(i).iter_mut().zip(g.row(i * n + j)) {
                            *o += v;
                        }
                    }
                }
                send(*a, ga)
            }
            Op::TileRows(a, n) => {
                let (r, c) = val(*a).shape();
                let mut ga = Matrix::zeros(r, c);
                for b in 0..*n {
                    for i in 0..r {
                        for (o, v) in ga.row_mut(i).iter_mut().zip(g.row(b * r + i)) {
                            *o += v;
                        }
                    }
                }
                send(*a, ga)
            }
            Op::FoldRows(a, period) => {
                let (r, c) = val(*a).shape();
                let mut ga = Matrix::zeros(r, c);
                for i in 0..r {
                    ga.row_mut(i).copy_from_slice(g.row(i % period));
                }
                send(*a, ga)
            }
            Op::Reshape(a) => {
                let (r, c) = val(*a).shape();
                send(*a, Matrix::from_vec(r, c, g.data().to_vec()).expect("same length"))
            }
        }
    }
}

fn zip_map(g: &Matrix, x: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    let data = g.data().iter().zip(x.data()).map(|(&a, &b)| f(a, b)).collect();
    Matrix::from_vec(g.rows(), g.cols(), data).expect("same shape")
}

/// Logistic function, kept strictly inside (0, 1): results that would round
/// to 0 or 1 saturate at the nearest representable interior value.
pub fn sigmoid(x: f64) -> f64 {
    const BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(f64::MIN_POSITIVE, BELOW_ONE)
}

/// Row-wise softmax, stable under large logits.
pub fn softmax_rows(m: &Matrix) -> Result<Matrix> {
    if let Some(bad) = m.data().iter().find(|x| !x.is_finite()) {
        return Err(Error::NumericDomain(format!("non-finite logit {bad} in softmax")));
    }
    let mut out = m.clone();
    for r in 0..out.rows() {
        softmax_in_place(out.row_mut(r));
    }
    Ok(out)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
