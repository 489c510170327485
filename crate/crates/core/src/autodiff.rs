//! Reverse-mode automatic differentiation on a re-entrant tape.
//!
//! Every primitive applied to a [`Var`] appends a node to its [`Tape`]. A call
//! to [`Tape::grad`] walks the tape backwards and expresses each adjoint with
//! the same primitives, so the gradients it returns are ordinary tape nodes.
//! Differentiating them again (reverse-over-reverse) is how gradient
//! penalties such as `max(0, -dh/dx)^2` are trained.
//!
//! ```
//! use monograd::autodiff::Tape;
//! use monograd::Tensor;
//!
//! let tape = Tape::new();
//! let x = tape.var(Tensor::scalar(2.0)).unwrap();
//! let y = x.mul(x).unwrap().mul(x).unwrap(); // x^3
//! let dy = tape.grad(y, &[x]).unwrap()[0];
//! let d2y = tape.grad(dy, &[x]).unwrap()[0];
//! assert_eq!(dy.item(), 12.0);
//! assert_eq!(d2y.item(), 12.0);
//! ```
//!
//! A tape is single-threaded (`!Sync`); use one tape per training step or
//! evaluation episode.

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::tensor::{matmul_raw, Tensor};

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// `[r, c] + [c]`, bias broadcast over rows.
    AddRow(usize, usize),
    Neg(usize),
    /// `scale * x + shift` with constant scale and shift.
    Affine(usize, f64),
    MatMul {
        a: usize,
        b: usize,
        ta: bool,
        tb: bool,
    },
    Relu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Softplus(usize),
    Exp(usize),
    Log(usize),
    Recip(usize),
    Square(usize),
    MaxConst(usize, f64),
    /// Elementwise product with a constant (non-differentiable) tensor.
    MaskMul(usize, Rc<Tensor>),
    Sum(usize),
    /// Scalar broadcast to the node's shape.
    Expand(usize),
    SumRows(usize),
    SumCols(usize),
    BroadcastRows(usize),
    BroadcastCols(usize),
    LogSoftmax(usize),
    /// `out[k] = in[idx[k]]` over flat buffers.
    Gather(usize, Rc<Vec<usize>>),
    /// `out[idx[k]] += in[k]` over flat buffers; inverse of `Gather`.
    Scatter(usize, Rc<Vec<usize>>),
    Reshape(usize),
    /// Column-wise concatenation of rank-2 inputs with equal row counts.
    ConcatCols(Vec<usize>),
}

impl Op {
    fn for_each_parent(&self, mut f: impl FnMut(usize)) {
        match self {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) => {
                f(*a);
                f(*b);
            }
            Op::MatMul { a, b, .. } => {
                f(*a);
                f(*b);
            }
            Op::Neg(a)
            | Op::Affine(a, _)
            | Op::Relu(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Softplus(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Recip(a)
            | Op::Square(a)
            | Op::MaxConst(a, _)
            | Op::MaskMul(a, _)
            | Op::Sum(a)
            | Op::Expand(a)
            | Op::SumRows(a)
            | Op::SumCols(a)
            | Op::BroadcastRows(a)
            | Op::BroadcastCols(a)
            | Op::LogSoftmax(a)
            | Op::Gather(a, _)
            | Op::Scatter(a, _)
            | Op::Reshape(a) => f(*a),
            Op::ConcatCols(parts) => parts.iter().copied().for_each(f),
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
}

/// An append-only record of tensor computations.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// A handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn require_rank2(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(Error::ShapeMismatch {
            op,
            left: t.shape().to_vec(),
            right: vec![0, 0],
        });
    }
    Ok((t.shape()[0], t.shape()[1]))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of nodes recorded so far.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Places a leaf on the tape. Leaves are the variables gradients can be
    /// taken with respect to; a leaf nobody differentiates against is simply
    /// a constant.
    pub fn var(&self, value: Tensor) -> Result<Var<'_>> {
        self.push(value, Op::Leaf, "leaf")
    }

    pub fn constant(&self, value: Tensor) -> Result<Var<'_>> {
        self.var(value)
    }

    pub fn scalar(&self, value: f64) -> Result<Var<'_>> {
        self.var(Tensor::scalar(value))
    }

    fn push(&self, value: Tensor, op: Op, name: &'static str) -> Result<Var<'_>> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
        });
        Ok(Var {
            tape: self,
            id: nodes.len() - 1,
        })
    }

    fn value_of(&self, id: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn wrap(&self, id: usize) -> Var<'_> {
        Var { tape: self, id }
    }

    fn owns(&self, v: Var<'_>) -> bool {
        std::ptr::eq(self, v.tape) && v.id < self.len()
    }

    /// Gradients of the scalar `target` with respect to each of `wrt`.
    ///
    /// The returned gradients live on this tape, so they can be combined
    /// further and differentiated again. A variable the target does not
    /// depend on receives a zero gradient of its own shape.
    pub fn grad<'t>(&'t self, target: Var<'t>, wrt: &[Var<'t>]) -> Result<Vec<Var<'t>>> {
        if !self.owns(target) {
            return Err(Error::NotOnTape { id: target.id });
        }
        for w in wrt {
            if !self.owns(*w) {
                return Err(Error::NotOnTape { id: w.id });
            }
        }
        let target_value = self.value_of(target.id);
        if target_value.len() != 1 {
            return Err(Error::NotScalar {
                shape: target_value.shape().to_vec(),
            });
        }

        let end = target.id + 1;
        let mut needs = vec![false; end];
        for w in wrt {
            if w.id < end {
                needs[w.id] = true;
            }
        }
        {
            let nodes = self.nodes.borrow();
            for id in 0..end {
                if needs[id] {
                    continue;
                }
                let mut hit = false;
                nodes[id].op.for_each_parent(|p| hit |= needs[p]);
                needs[id] = hit;
            }
        }

        let mut adjoint: Vec<Option<Var<'t>>> = vec![None; end];
        if needs[target.id] {
            adjoint[target.id] = Some(self.var(Tensor::ones(target_value.shape()))?);
        }

        for id in (0..end).rev() {
            if !needs[id] {
                continue;
            }
            let Some(g) = adjoint[id] else { continue };
            let op = self.nodes.borrow()[id].op.clone();
            let mut feeds = false;
            op.for_each_parent(|p| feeds |= needs[p]);
            if !feeds {
                continue;
            }
            for (parent, contribution) in self.backward_rule(id, &op, g, &needs)? {
                adjoint[parent] = Some(match adjoint[parent] {
                    None => contribution,
                    Some(acc) => acc.add(contribution)?,
                });
            }
        }

        wrt.iter()
            .map(|w| match adjoint.get(w.id).copied().flatten() {
                Some(g) => Ok(g),
                None => self.var(Tensor::zeros(self.value_of(w.id).shape())),
            })
            .collect()
    }

    /// Local vector-Jacobian products for node `id` with adjoint `g`,
    /// emitted as new tape nodes.
    fn backward_rule<'t>(&'t self, id: usize, op: &Op, g: Var<'t>, needs: &[bool]) -> Result<Vec<(usize, Var<'t>)>> {
        let y = self.wrap(id);
        let mut out = Vec::with_capacity(2);
        let want = |p: usize| needs[p];
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if want(*a) {
                    out.push((*a, g));
                }
                if want(*b) {
                    out.push((*b, g));
                }
            }
            Op::Sub(a, b) => {
                if want(*a) {
                    out.push((*a, g));
                }
                if want(*b) {
                    out.push((*b, g.neg()?));
                }
            }
            Op::Mul(a, b) => {
                if want(*a) {
                    out.push((*a, g.mul(self.wrap(*b))?));
                }
                if want(*b) {
                    out.push((*b, g.mul(self.wrap(*a))?));
                }
            }
            Op::AddRow(m, r) => {
                if want(*m) {
                    out.push((*m, g));
                }
                if want(*r) {
                    out.push((*r, g.sum_rows()?));
                }
            }
            Op::Neg(a) => out.push((*a, g.neg()?)),
            Op::Affine(a, scale) => out.push((*a, g.scale(*scale)?)),
            Op::MatMul { a, b, ta, tb } => {
                let (av, bv) = (self.wrap(*a), self.wrap(*b));
                if want(*a) {
                    let ga = if *ta {
                        bv.matmul_t(g, *tb, true)?
                    } else {
                        g.matmul_t(bv, false, !*tb)?
                    };
                    out.push((*a, ga));
                }
                if want(*b) {
                    let gb = if *tb {
                        g.matmul_t(av, true, *ta)?
                    } else {
                        av.matmul_t(g, !*ta, false)?
                    };
                    out.push((*b, gb));
                }
            }
            Op::Relu(a) => {
                let mask = self.value_of(*a).map(|v| if v > 0.0 { 1.0 } else { 0.0 });
                out.push((*a, g.mask_mul(Rc::new(mask))?));
            }
            Op::Tanh(a) => {
                // d tanh = 1 - y^2
                let local = y.square()?.affine(-1.0, 1.0)?;
                out.push((*a, g.mul(local)?));
            }
            Op::Sigmoid(a) => {
                // d σ = σ (1 - σ)
                let local = y.mul(y.affine(-1.0, 1.0)?)?;
                out.push((*a, g.mul(local)?));
            }
            Op::Softplus(a) => out.push((*a, g.mul(self.wrap(*a).sigmoid()?)?)),
            Op::Exp(a) => out.push((*a, g.mul(y)?)),
            Op::Log(a) => out.push((*a, g.mul(self.wrap(*a).recip()?)?)),
            Op::Recip(a) => {
                let local = y.square()?.neg()?;
                out.push((*a, g.mul(local)?));
            }
            Op::Square(a) => out.push((*a, g.mul(self.wrap(*a).scale(2.0)?)?)),
            Op::MaxConst(a, c) => {
                let c = *c;
                let mask = self.value_of(*a).map(|v| if v > c { 1.0 } else { 0.0 });
                out.push((*a, g.mask_mul(Rc::new(mask))?));
            }
            Op::MaskMul(a, m) => out.push((*a, g.mask_mul(Rc::clone(m))?)),
            Op::Sum(a) => {
                let shape = self.value_of(*a).shape().to_vec();
                out.push((*a, g.expand(&shape)?));
            }
            Op::Expand(a) => {
                let shape = self.value_of(*a).shape().to_vec();
                out.push((*a, g.sum()?.reshape(shape)?));
            }
            Op::SumRows(a) => {
                let rows = self.value_of(*a).shape()[0];
                out.push((*a, g.broadcast_rows(rows)?));
            }
            Op::SumCols(a) => {
                let cols = self.value_of(*a).shape()[1];
                out.push((*a, g.broadcast_cols(cols)?));
            }
            Op::BroadcastRows(a) => out.push((*a, g.sum_rows()?)),
            Op::BroadcastCols(a) => out.push((*a, g.sum_cols()?)),
            Op::LogSoftmax(a) => {
                // g - softmax * rowsum(g)
                let shape = self.value_of(id).shape().to_vec();
                let cols = *shape.last().unwrap_or(&1);
                let g2 = g.as_matrix()?;
                let soft = y.as_matrix()?.exp()?;
                let total = g2.sum_cols()?.broadcast_cols(cols)?;
                let ga = g2.sub(soft.mul(total)?)?.reshape(shape)?;
                out.push((*a, ga));
            }
            Op::Gather(a, idx) => {
                let shape = self.value_of(*a).shape().to_vec();
                out.push((*a, g.scatter(Rc::clone(idx), &shape)?));
            }
            Op::Scatter(a, idx) => {
                let shape = self.value_of(*a).shape().to_vec();
                out.push((*a, g.gather(Rc::clone(idx), &shape)?));
            }
            Op::Reshape(a) => {
                let shape = self.value_of(*a).shape().to_vec();
                out.push((*a, g.reshape(shape)?));
            }
            Op::ConcatCols(parts) => {
                let total = self.value_of(id).shape()[1];
                let mut offset = 0;
                for &p in parts {
                    let pv = self.value_of(p);
                    let (rows, cols) = (pv.shape()[0], pv.shape()[1]);
                    if want(p) {
                        out.push((p, g.slice_cols_of(rows, total, offset, cols)?));
                    }
                    offset += cols;
                }
            }
        }
        Ok(out)
    }
}

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// The value of a single-element node.
    pub fn item(&self) -> f64 {
        self.value().item()
    }

    fn unary(self, name: &'static str, op: Op, f: impl Fn(f64) -> f64) -> Result<Var<'t>> {
        let v = self.value().map(f);
        self.tape.push(v, op, name)
    }

    fn binary_same(self, other: Var<'t>, name: &'static str, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        same_shape(name, &a, &b)?;
        self.tape.push(a.zip_map(&b, f), op, name)
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary_same(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary_same(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    /// Elementwise product.
    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary_same(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    /// Adds a length-`c` row vector to every row of a `[r, c]` matrix.
    pub fn add_row(self, row: Var<'t>) -> Result<Var<'t>> {
        let (m, r) = (self.value(), row.value());
        let (rows, cols) = require_rank2("add_row", &m)?;
        if r.len() != cols || r.rank() != 1 {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                left: m.shape().to_vec(),
                right: r.shape().to_vec(),
            });
        }
        let mut data = m.data().to_vec();
        for i in 0..rows {
            for (d, b) in data[i * cols..(i + 1) * cols].iter_mut().zip(r.data()) {
                *d += b;
            }
        }
        let value = Tensor::new(m.shape().to_vec(), data)?;
        self.tape.push(value, Op::AddRow(self.id, row.id), "add_row")
    }

    pub fn neg(self) -> Result<Var<'t>> {
        self.unary("neg", Op::Neg(self.id), |v| -v)
    }

    /// `scale * self + shift`.
    pub fn affine(self, scale: f64, shift: f64) -> Result<Var<'t>> {
        self.unary("affine", Op::Affine(self.id, scale), move |v| scale * v + shift)
    }

    pub fn scale(self, factor: f64) -> Result<Var<'t>> {
        self.affine(factor, 0.0)
    }

    pub fn add_scalar(self, shift: f64) -> Result<Var<'t>> {
        self.affine(1.0, shift)
    }

    /// Matrix product of two rank-2 nodes.
    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.matmul_t(other, false, false)
    }

    /// `op(self) · op(other)` where `op` transposes when the flag is set.
    pub fn matmul_t(self, other: Var<'t>, ta: bool, tb: bool) -> Result<Var<'t>> {
        let (a, b) = (self.value(), other.value());
        let ra = require_rank2("matmul", &a)?;
        let rb = require_rank2("matmul", &b)?;
        let inner_a = if ta { ra.0 } else { ra.1 };
        let inner_b = if tb { rb.1 } else { rb.0 };
        if inner_a != inner_b {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: a.shape().to_vec(),
                right: b.shape().to_vec(),
            });
        }
        let (data, m, n) = matmul_raw(a.data(), ra, ta, b.data(), rb, tb);
        let value = Tensor::matrix(m, n, data)?;
        let op = Op::MatMul {
            a: self.id,
            b: other.id,
            ta,
            tb,
        };
        self.tape.push(value, op, "matmul")
    }

    pub fn relu(self) -> Result<Var<'t>> {
        self.unary("relu", Op::Relu(self.id), |v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn tanh(self) -> Result<Var<'t>> {
        self.unary("tanh", Op::Tanh(self.id), f64::tanh)
    }

    pub fn sigmoid(self) -> Result<Var<'t>> {
        self.unary("sigmoid", Op::Sigmoid(self.id), sigmoid)
    }

    /// `log(1 + e^x)`, evaluated without overflow.
    pub fn softplus(self) -> Result<Var<'t>> {
        self.unary("softplus", Op::Softplus(self.id), |v| {
            v.max(0.0) + (-v.abs()).exp().ln_1p()
        })
    }

    pub fn exp(self) -> Result<Var<'t>> {
        self.unary("exp", Op::Exp(self.id), f64::exp)
    }

    pub fn log(self) -> Result<Var<'t>> {
        self.unary("log", Op::Log(self.id), f64::ln)
    }

    pub fn recip(self) -> Result<Var<'t>> {
        self.unary("recip", Op::Recip(self.id), |v| 1.0 / v)
    }

    pub fn square(self) -> Result<Var<'t>> {
        self.unary("square", Op::Square(self.id), |v| v * v)
    }

    /// `max(self, c)` elementwise; the derivative at `self == c` is 0.
    pub fn max_const(self, c: f64) -> Result<Var<'t>> {
        self.unary(
            "max_const",
            Op::MaxConst(self.id, c),
            move |v| if v > c { v } else { c },
        )
    }

    /// Elementwise product with a constant tensor that is not differentiated.
    pub fn mask_mul(self, mask: Rc<Tensor>) -> Result<Var<'t>> {
        let a = self.value();
        same_shape("mask_mul", &a, &mask)?;
        let value = a.zip_map(&mask, |x, m| x * m);
        self.tape.push(value, Op::MaskMul(self.id, mask), "mask_mul")
    }

    /// Sum of all elements, as a rank-0 node.
    pub fn sum(self) -> Result<Var<'t>> {
        let s = self.value().data().iter().sum();
        self.tape.push(Tensor::scalar(s), Op::Sum(self.id), "sum")
    }

    pub fn mean(self) -> Result<Var<'t>> {
        let n = self.value().len();
        if n == 0 {
            return Err(Error::invalid("mean of an empty tensor"));
        }
        self.sum()?.scale(1.0 / n as f64)
    }

    /// Broadcasts a single-element node to `shape`.
    pub fn expand(self, shape: &[usize]) -> Result<Var<'t>> {
        let a = self.value();
        if a.len() != 1 {
            return Err(Error::ShapeMismatch {
                op: "expand",
                left: a.shape().to_vec(),
                right: shape.to_vec(),
            });
        }
        let value = Tensor::full(shape, a.item());
        self.tape.push(value, Op::Expand(self.id), "expand")
    }

    /// `[r, c] -> [c]`, summing over rows.
    pub fn sum_rows(self) -> Result<Var<'t>> {
        let a = self.value();
        let (rows, cols) = require_rank2("sum_rows", &a)?;
        let mut out = vec![0.0; cols];
        for i in 0..rows {
            for (o, v) in out.iter_mut().zip(a.row(i)) {
                *o += v;
            }
        }
        self.tape.push(Tensor::vector(out), Op::SumRows(self.id), "sum_rows")
    }

    /// `[r, c] -> [r]`, summing within each row.
    pub fn sum_cols(self) -> Result<Var<'t>> {
        let a = self.value();
        let (rows, _) = require_rank2("sum_cols", &a)?;
        let out = (0..rows).map(|i| a.row(i).iter().sum()).collect();
        self.tape.push(Tensor::vector(out), Op::SumCols(self.id), "sum_cols")
    }

    /// `[c] -> [rows, c]`.
    pub fn broadcast_rows(self, rows: usize) -> Result<Var<'t>> {
        let a = self.value();
        if a.rank() != 1 {
            return Err(Error::ShapeMismatch {
                op: "broadcast_rows",
                left: a.shape().to_vec(),
                right: vec![0],
            });
        }
        let cols = a.len();
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend_from_slice(a.data());
        }
        let value = Tensor::matrix(rows, cols, data)?;
        self.tape.push(value, Op::BroadcastRows(self.id), "broadcast_rows")
    }

    /// `[r] -> [r, cols]`.
    pub fn broadcast_cols(self, cols: usize) -> Result<Var<'t>> {
        let a = self.value();
        if a.rank() != 1 {
            return Err(Error::ShapeMismatch {
                op: "broadcast_cols",
                left: a.shape().to_vec(),
                right: vec![0],
            });
        }
        let rows = a.len();
        let mut data = Vec::with_capacity(rows * cols);
        for &v in a.data() {
            data.extend(std::iter::repeat_n(v, cols));
        }
        let value = Tensor::matrix(rows, cols, data)?;
        self.tape.push(value, Op::BroadcastCols(self.id), "broadcast_cols")
    }

    /// Row-wise log-softmax over the trailing axis.
    pub fn log_softmax(self) -> Result<Var<'t>> {
        let a = self.value();
        let cols = a.cols();
        if cols == 0 {
            return Err(Error::invalid("log_softmax over an empty axis"));
        }
        let mut data = a.data().to_vec();
        for row in data.chunks_mut(cols) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        let value = Tensor::new(a.shape().to_vec(), data)?;
        self.tape.push(value, Op::LogSoftmax(self.id), "log_softmax")
    }

    /// Row-wise softmax over the trailing axis.
    pub fn softmax(self) -> Result<Var<'t>> {
        self.log_softmax()?.exp()
    }

    /// Flat gather: output element `k` is input element `indices[k]`.
    pub fn gather(self, indices: Rc<Vec<usize>>, shape: &[usize]) -> Result<Var<'t>> {
        let a = self.value();
        let n: usize = shape.iter().product();
        if n != indices.len() {
            return Err(Error::ShapeMismatch {
                op: "gather",
                left: shape.to_vec(),
                right: vec![indices.len()],
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= a.len()) {
            return Err(Error::invalid(format!(
                "gather index {bad} out of range for {} elements",
                a.len()
            )));
        }
        let data = indices.iter().map(|&i| a.data()[i]).collect();
        let value = Tensor::new(shape.to_vec(), data)?;
        self.tape.push(value, Op::Gather(self.id, indices), "gather")
    }

    /// Flat scatter-add into a zero tensor of `shape`.
    pub fn scatter(self, indices: Rc<Vec<usize>>, shape: &[usize]) -> Result<Var<'t>> {
        let a = self.value();
        if a.len() != indices.len() {
            return Err(Error::ShapeMismatch {
                op: "scatter",
                left: a.shape().to_vec(),
                right: vec![indices.len()],
            });
        }
        let mut out = Tensor::zeros(shape);
        {
            let data = out.data_mut();
            if let Some(&bad) = indices.iter().find(|&&i| i >= data.len()) {
                return Err(Error::invalid(format!("scatter index {bad} out of range")));
            }
            for (&i, &v) in indices.iter().zip(a.data()) {
                data[i] += v;
            }
        }
        self.tape.push(out, Op::Scatter(self.id, indices), "scatter")
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Var<'t>> {
        let value = self.value().reshape(shape)?;
        self.tape.push(value, Op::Reshape(self.id), "reshape")
    }

    fn as_matrix(self) -> Result<Var<'t>> {
        let shape = self.shape();
        if shape.len() == 2 {
            return Ok(self);
        }
        let cols = shape.last().copied().unwrap_or(1);
        let rows = shape.iter().product::<usize>() / cols.max(1);
        self.reshape(vec![rows, cols])
    }

    /// Columns `[start, start + width)` of a rank-2 node.
    pub fn slice_cols(self, start: usize, width: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        if shape.len() != 2 || start + width > shape[1] {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                left: shape,
                right: vec![start, width],
            });
        }
        self.slice_cols_of(shape[0], shape[1], start, width)
    }

    fn slice_cols_of(self, rows: usize, total: usize, start: usize, width: usize) -> Result<Var<'t>> {
        let idx: Vec<usize> = (0..rows)
            .flat_map(|r| (start..start + width).map(move |c| r * total + c))
            .collect();
        self.gather(Rc::new(idx), &[rows, width])
    }

    /// Selected columns of a rank-2 node, in the given order.
    pub fn select_cols(self, cols: &[usize]) -> Result<Var<'t>> {
        let shape = self.shape();
        if shape.len() != 2 {
            return Err(Error::ShapeMismatch {
                op: "select_cols",
                left: shape,
                right: cols.to_vec(),
            });
        }
        let (rows, total) = (shape[0], shape[1]);
        if let Some(&bad) = cols.iter().find(|&&c| c >= total) {
            return Err(Error::invalid(format!("column {bad} out of range for width {total}")));
        }
        let idx: Vec<usize> = (0..rows)
            .flat_map(|r| cols.iter().map(move |&c| r * total + c))
            .collect();
        self.gather(Rc::new(idx), &[rows, cols.len()])
    }

    /// Picks `self[i, picks[i]]` from each row, giving a `[r]` node.
    pub fn pick_per_row(self, picks: &[usize]) -> Result<Var<'t>> {
        let shape = self.shape();
        if shape.len() != 2 || shape[0] != picks.len() {
            return Err(Error::ShapeMismatch {
                op: "pick_per_row",
                left: shape,
                right: vec![picks.len()],
            });
        }
        let cols = shape[1];
        if let Some(&bad) = picks.iter().find(|&&c| c >= cols) {
            return Err(Error::invalid(format!("index {bad} out of range for width {cols}")));
        }
        let idx: Vec<usize> = picks.iter().enumerate().map(|(r, &c)| r * cols + c).collect();
        self.gather(Rc::new(idx), &[picks.len()])
    }

    /// Column-wise concatenation. Rank-1 inputs are treated as single columns.
    pub fn concat_cols(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let tape = first.tape;
        let mut ids = Vec::with_capacity(parts.len());
        let mut values = Vec::with_capacity(parts.len());
        for p in parts {
            let p = if p.shape().len() == 1 {
                let n = p.shape()[0];
                p.reshape(vec![n, 1])?
            } else {
                *p
            };
            ids.push(p.id);
            values.push(p.value());
        }
        let rows = require_rank2("concat_cols", &values[0])?.0;
        let mut total = 0;
        for v in &values {
            let (r, c) = require_rank2("concat_cols", v)?;
            if r != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    left: values[0].shape().to_vec(),
                    right: v.shape().to_vec(),
                });
            }
            total += c;
        }
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for v in &values {
                data.extend_from_slice(v.row(i));
            }
        }
        let value = Tensor::matrix(rows, total, data)?;
        tape.push(value, Op::ConcatCols(ids), "concat_cols")
    }
}
