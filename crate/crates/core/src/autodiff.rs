//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every primitive applied to its [`Var`] handles; the
//! backward pass visits the record once in reverse topological order and
//! accumulates gradients deterministically. Scalars are 1x1 matrices.
//! Elementwise binary primitives broadcast along singleton axes the way
//! numpy does, and their backward rules sum the gradient back over the
//! broadcast axes.
//!
//! One tape is single-writer; independent tapes may live on different
//! threads.

use std::cell::RefCell;
use std::rc::Rc;

use ndarray::{concatenate, s, Array2, Axis};

use crate::error::{Error, Result};

/// Sparse row-major matrix with constant coefficients, used for fixed
/// aggregation weights. Rows hold `(column, weight)` pairs sorted by column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    pub n_cols: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Dense copy, mainly for tests and small diagnostics.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows.len(), self.n_cols));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                out[[i, j]] = w;
            }
        }
        out
    }

    /// `self * x` for a dense right-hand side.
    pub fn matmul_dense(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(self.n_cols, x.nrows(), "spmm shape mismatch");
        let mut out = Array2::zeros((self.rows.len(), x.ncols()));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                let src = x.row(j);
                let mut dst = out.row_mut(i);
                dst.scaled_add(w, &src);
            }
        }
        out
    }
}

#[derive(Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    MatMul(usize, usize),
    Transpose(usize),
    Sum(usize),
    Mean(usize),
    SumAxis(usize, usize),
    ConcatCols(usize, usize),
    SliceCols(usize, usize, usize),
    GatherRows(usize, Rc<Vec<usize>>),
    SpmmConst(Rc<SparseRows>, usize),
    NormRows(usize),
    Clamp(usize, f64, f64),
    Exp(usize),
    Ln(usize),
    Sqrt(usize),
    Abs(usize),
    Tanh(usize),
    Artanh(usize),
    Sinh(usize),
    Cosh(usize),
    Acosh(usize),
    Sigmoid(usize),
    Softplus(usize),
    SoftmaxRows(usize),
    Detach,
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(..) => "neg",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SumAxis(..) => "sum_axis",
            Op::ConcatCols(..) => "concat",
            Op::SliceCols(..) => "slice_cols",
            Op::GatherRows(..) => "gather",
            Op::SpmmConst(..) => "spmm",
            Op::NormRows(..) => "norm",
            Op::Clamp(..) => "clamp",
            Op::Exp(..) => "exp",
            Op::Ln(..) => "log",
            Op::Sqrt(..) => "sqrt",
            Op::Abs(..) => "abs",
            Op::Tanh(..) => "tanh",
            Op::Artanh(..) => "artanh",
            Op::Sinh(..) => "sinh",
            Op::Cosh(..) => "cosh",
            Op::Acosh(..) => "acosh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Softplus(..) => "softplus",
            Op::SoftmaxRows(..) => "softmax",
            Op::Detach => "detach",
        }
    }
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// The computation record.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// A handle to one node of a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: RefCell::new(Vec::new()) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Array2<f64>, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var { tape: self, id: nodes.len() - 1 }
    }

    /// A trackable input node.
    pub fn leaf(&self, value: Array2<f64>) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    /// A node that is never differentiated against. Identical to a leaf;
    /// the name documents intent.
    pub fn constant(&self, value: Array2<f64>) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.constant(Array2::from_elem((1, 1), v))
    }

    /// A `1 x d` constant row.
    pub fn row(&self, v: ndarray::Array1<f64>) -> Var<'_> {
        let d = v.len();
        self.constant(v.into_shape_with_order((1, d)).expect("row reshape"))
    }

    fn value_of(&self, id: usize) -> Array2<f64> {
        self.nodes.borrow()[id].value.clone()
    }

    fn shape_of(&self, id: usize) -> (usize, usize) {
        let nodes = self.nodes.borrow();
        let d = nodes[id].value.dim();
        (d.0, d.1)
    }
}

fn bcast_dim(a: usize, b: usize) -> Option<usize> {
    if a == b {
        Some(a)
    } else if a == 1 {
        Some(b)
    } else if b == 1 {
        Some(a)
    } else {
        None
    }
}

fn bcast_shape(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    let r = bcast_dim(a.0, b.0);
    let c = bcast_dim(a.1, b.1);
    match (r, c) {
        (Some(r), Some(c)) => (r, c),
        _ => panic!("incompatible broadcast shapes {a:?} vs {b:?}"),
    }
}

fn bcast_to(a: &Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    if a.dim() == shape {
        a.clone()
    } else {
        a.broadcast(shape)
            .unwrap_or_else(|| panic!("cannot broadcast {:?} to {shape:?}", a.dim()))
            .to_owned()
    }
}

/// Sum `grad` back down to `shape` over any axes that were broadcast.
fn reduce_to(grad: Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    let mut g = grad;
    if shape.0 == 1 && g.nrows() > 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && g.ncols() > 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    assert_eq!(g.dim(), shape, "broadcast reduction mismatch");
    g
}

impl<'t> Var<'t> {
    pub fn id(self) -> usize {
        self.id
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    pub fn value(self) -> Array2<f64> {
        self.tape.value_of(self.id)
    }

    pub fn shape(self) -> (usize, usize) {
        self.tape.shape_of(self.id)
    }

    /// The single element of a 1x1 node.
    pub fn scalar_value(self) -> f64 {
        let v = self.value();
        assert_eq!(v.dim(), (1, 1), "scalar_value on non-scalar node");
        v[[0, 0]]
    }

    fn same_tape(self, other: Var<'t>) -> &'t Tape {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "vars must share one tape"
        );
        self.tape
    }

    fn binary_elementwise(
        self,
        other: Var<'t>,
        op: fn(usize, usize) -> Op,
        f: fn(f64, f64) -> f64,
    ) -> Var<'t> {
        let tape = self.same_tape(other);
        let (a, b) = (self.value(), other.value());
        let shape = bcast_shape(a.dim(), b.dim());
        let ab = bcast_to(&a, shape);
        let bb = bcast_to(&b, shape);
        let mut out = ab;
        out.zip_mut_with(&bb, |x, y| *x = f(*x, *y));
        tape.push(out, op(self.id, other.id))
    }

    fn unary(self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let out = self.value().mapv(f);
        self.tape.push(out, op)
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        let tape = self.same_tape(other);
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
        tape.push(a.dot(&b), Op::MatMul(self.id, other.id))
    }

    pub fn transpose(self) -> Var<'t> {
        let v = self.value().t().to_owned();
        self.tape.push(v, Op::Transpose(self.id))
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(self) -> Var<'t> {
        let v = self.value().sum();
        self.tape.push(Array2::from_elem((1, 1), v), Op::Sum(self.id))
    }

    /// Mean of all elements, as a scalar node.
    pub fn mean(self) -> Var<'t> {
        let a = self.value();
        let v = a.sum() / a.len() as f64;
        self.tape.push(Array2::from_elem((1, 1), v), Op::Mean(self.id))
    }

    /// Sum along one axis, keeping it as a singleton.
    pub fn sum_axis(self, axis: usize) -> Var<'t> {
        let a = self.value();
        let out = a.sum_axis(Axis(axis)).insert_axis(Axis(axis));
        self.tape.push(out, Op::SumAxis(self.id, axis))
    }

    pub fn concat_cols(self, other: Var<'t>) -> Var<'t> {
        let tape = self.same_tape(other);
        let (a, b) = (self.value(), other.value());
        assert_eq!(a.nrows(), b.nrows(), "concat row mismatch");
        let out = concatenate![Axis(1), a, b];
        tape.push(out, Op::ConcatCols(self.id, other.id))
    }

    pub fn slice_cols(self, start: usize, end: usize) -> Var<'t> {
        let a = self.value();
        assert!(start < end && end <= a.ncols(), "slice out of range");
        let out = a.slice(s![.., start..end]).to_owned();
        self.tape.push(out, Op::SliceCols(self.id, start, end))
    }

    pub fn gather_rows(self, idx: &[usize]) -> Var<'t> {
        let a = self.value();
        let mut out = Array2::zeros((idx.len(), a.ncols()));
        for (k, &i) in idx.iter().enumerate() {
            assert!(i < a.nrows(), "gather row {i} out of range");
            out.row_mut(k).assign(&a.row(i));
        }
        self.tape.push(out, Op::GatherRows(self.id, Rc::new(idx.to_vec())))
    }

    /// Multiply by a constant sparse matrix on the left: `m * self`.
    pub fn spmm(self, m: Rc<SparseRows>) -> Var<'t> {
        let out = m.matmul_dense(&self.value());
        self.tape.push(out, Op::SpmmConst(m, self.id))
    }

    /// Row-wise Euclidean norm, an `n x 1` column. Gradient is zero at
    /// zero-norm rows.
    pub fn norm_rows(self) -> Var<'t> {
        let a = self.value();
        let mut out = Array2::zeros((a.nrows(), 1));
        for (i, row) in a.rows().into_iter().enumerate() {
            out[[i, 0]] = row.dot(&row).sqrt();
        }
        self.tape.push(out, Op::NormRows(self.id))
    }

    /// Clamp into `[lo, hi]`; gradient is identity inside the range and
    /// zero outside it.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        self.unary(Op::Clamp(self.id, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn relu(self) -> Var<'t> {
        self.clamp(0.0, f64::INFINITY)
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    pub fn ln(self) -> Var<'t> {
        self.unary(Op::Ln(self.id), f64::ln)
    }

    pub fn sqrt(self) -> Var<'t> {
        self.unary(Op::Sqrt(self.id), f64::sqrt)
    }

    pub fn abs(self) -> Var<'t> {
        self.unary(Op::Abs(self.id), f64::abs)
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn artanh(self) -> Var<'t> {
        self.unary(Op::Artanh(self.id), f64::atanh)
    }

    pub fn sinh(self) -> Var<'t> {
        self.unary(Op::Sinh(self.id), f64::sinh)
    }

    pub fn cosh(self) -> Var<'t> {
        self.unary(Op::Cosh(self.id), f64::cosh)
    }

    pub fn acosh(self) -> Var<'t> {
        self.unary(Op::Acosh(self.id), f64::acosh)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })
    }

    /// `ln(1 + e^x)`, evaluated in the overflow-safe form.
    pub fn softplus(self) -> Var<'t> {
        self.unary(Op::Softplus(self.id), |x| x.max(0.0) + (-x.abs()).exp().ln_1p())
    }

    /// Row-wise softmax with max-shift stabilization.
    pub fn softmax_rows(self) -> Var<'t> {
        let a = self.value();
        let mut out = a.clone();
        for mut row in out.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|x| (x - max).exp());
            let total = row.sum();
            row.mapv_inplace(|x| x / total);
        }
        self.tape.push(out, Op::SoftmaxRows(self.id))
    }

    /// Forward identity that blocks gradient flow.
    pub fn detach(self) -> Var<'t> {
        let v = self.value();
        self.tape.push(v, Op::Detach)
    }
}

impl<'t> std::ops::Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary_elementwise(rhs, Op::Add, |a, b| a + b)
    }
}

impl<'t> std::ops::Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary_elementwise(rhs, Op::Sub, |a, b| a - b)
    }
}

impl<'t> std::ops::Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary_elementwise(rhs, Op::Mul, |a, b| a * b)
    }
}

impl<'t> std::ops::Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        self.binary_elementwise(rhs, Op::Div, |a, b| a / b)
    }
}

impl<'t> std::ops::Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(Op::Neg(self.id), |x| -x)
    }
}

impl<'t> std::ops::Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, c: f64) -> Var<'t> {
        let c = self.tape.scalar(c);
        self + c
    }
}

impl<'t> std::ops::Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, c: f64) -> Var<'t> {
        let c = self.tape.scalar(c);
        self - c
    }
}

impl<'t> std::ops::Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, c: f64) -> Var<'t> {
        let c = self.tape.scalar(c);
        self * c
    }
}

impl<'t> std::ops::Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, c: f64) -> Var<'t> {
        let c = self.tape.scalar(c);
        self / c
    }
}

fn check_nan(g: &Array2<f64>, op: &Op) -> Result<()> {
    if g.iter().any(|v| v.is_nan()) {
        return Err(Error::NanInBackward(op.name()));
    }
    Ok(())
}

/// Gradients of a scalar `loss` with respect to `params`.
///
/// Non-participating leaves get zero gradients. Every node is visited at
/// most once, in reverse topological (construction) order; accumulation
/// order is fixed, so results are deterministic for identical inputs.
pub fn gradient(loss: Var<'_>, params: &[Var<'_>]) -> Result<Vec<Array2<f64>>> {
    let tape = loss.tape;
    for p in params {
        assert!(std::ptr::eq(tape, p.tape), "params must live on the loss tape");
    }
    let nodes = tape.nodes.borrow();
    let loss_shape = nodes[loss.id].value.dim();
    if loss_shape != (1, 1) {
        return Err(Error::NonScalarLoss(loss_shape.0, loss_shape.1));
    }

    let mut grads: Vec<Option<Array2<f64>>> = vec![None; nodes.len()];
    grads[loss.id] = Some(Array2::from_elem((1, 1), 1.0));

    for id in (0..=loss.id).rev() {
        if matches!(nodes[id].op, Op::Leaf) {
            continue;
        }
        let go = match grads[id].take() {
            Some(g) => g,
            None => continue,
        };
        let node = &nodes[id];
        let mut add_grad = |target: usize, g: Array2<f64>| -> Result<()> {
            check_nan(&g, &node.op)?;
            match &mut grads[target] {
                Some(acc) => *acc += &g,
                slot @ None => *slot = Some(g),
            }
            Ok(())
        };
        match &node.op {
            Op::Leaf | Op::Detach => {}
            Op::Add(a, b) => {
                let (sa, sb) = (nodes[*a].value.dim(), nodes[*b].value.dim());
                add_grad(*a, reduce_to(go.clone(), sa))?;
                add_grad(*b, reduce_to(go, sb))?;
            }
            Op::Sub(a, b) => {
                let (sa, sb) = (nodes[*a].value.dim(), nodes[*b].value.dim());
                add_grad(*a, reduce_to(go.clone(), sa))?;
                add_grad(*b, reduce_to(-go, sb))?;
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                let shape = go.dim();
                let ga = &go * &bcast_to(vb, shape);
                let gb = &go * &bcast_to(va, shape);
                add_grad(*a, reduce_to(ga, va.dim()))?;
                add_grad(*b, reduce_to(gb, vb.dim()))?;
            }
            Op::Div(a, b) => {
                let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                let shape = go.dim();
                let vb_b = bcast_to(vb, shape);
                let ga = &go / &vb_b;
                let va_b = bcast_to(va, shape);
                let gb = -&go * &va_b / (&vb_b * &vb_b);
                add_grad(*a, reduce_to(ga, va.dim()))?;
                add_grad(*b, reduce_to(gb, vb.dim()))?;
            }
            Op::Neg(a) => add_grad(*a, -go)?,
            Op::MatMul(a, b) => {
                let (va, vb) = (&nodes[*a].value, &nodes[*b].value);
                add_grad(*a, go.dot(&vb.t()))?;
                add_grad(*b, va.t().dot(&go))?;
            }
            Op::Transpose(a) => add_grad(*a, go.t().to_owned())?,
            Op::Sum(a) => {
                let shape = nodes[*a].value.dim();
                add_grad(*a, Array2::from_elem(shape, go[[0, 0]]))?;
            }
            Op::Mean(a) => {
                let shape = nodes[*a].value.dim();
                let scale = go[[0, 0]] / (shape.0 * shape.1) as f64;
                add_grad(*a, Array2::from_elem(shape, scale))?;
            }
            Op::SumAxis(a, axis) => {
                let dims = [go.nrows(), go.ncols()];
                debug_assert_eq!(dims[*axis], 1, "sum_axis gradient shape");
                let shape = nodes[*a].value.dim();
                add_grad(*a, bcast_to(&go, shape))?;
            }
            Op::ConcatCols(a, b) => {
                let ca = nodes[*a].value.ncols();
                add_grad(*a, go.slice(s![.., ..ca]).to_owned())?;
                add_grad(*b, go.slice(s![.., ca..]).to_owned())?;
            }
            Op::SliceCols(a, start, end) => {
                let mut g = Array2::zeros(nodes[*a].value.dim());
                g.slice_mut(s![.., *start..*end]).assign(&go);
                add_grad(*a, g)?;
            }
            Op::GatherRows(a, idx) => {
                let mut g = Array2::zeros(nodes[*a].value.dim());
                for (k, &i) in idx.iter().enumerate() {
                    let mut row = g.row_mut(i);
                    row += &go.row(k);
                }
                add_grad(*a, g)?;
            }
            Op::SpmmConst(m, a) => {
                let mut g = Array2::zeros(nodes[*a].value.dim());
                for (i, row) in m.rows.iter().enumerate() {
                    for &(j, w) in row {
                        let mut dst = g.row_mut(j);
                        dst.scaled_add(w, &go.row(i));
                    }
                }
                add_grad(*a, g)?;
            }
            Op::NormRows(a) => {
                let va = &nodes[*a].value;
                let y = &node.value;
                let mut g = Array2::zeros(va.dim());
                for i in 0..va.nrows() {
                    let n = y[[i, 0]];
                    if n > 1e-15 {
                        let scale = go[[i, 0]] / n;
                        let mut row = g.row_mut(i);
                        row.assign(&va.row(i));
                        row *= scale;
                    }
                }
                add_grad(*a, g)?;
            }
            Op::Clamp(a, lo, hi) => {
                let va = &nodes[*a].value;
                let mut g = go;
                g.zip_mut_with(va, |gv, &x| {
                    if x < *lo || x > *hi {
                        *gv = 0.0;
                    }
                });
                add_grad(*a, g)?;
            }
            Op::Exp(a) => add_grad(*a, &go * &node.value)?,
            Op::Ln(a) => add_grad(*a, &go / &nodes[*a].value)?,
            Op::Sqrt(a) => {
                let g = &go / &(node.value.mapv(|y| 2.0 * y));
                add_grad(*a, g)?;
            }
            Op::Abs(a) => {
                let g = &go * &nodes[*a].value.mapv(|x| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                });
                add_grad(*a, g)?;
            }
            Op::Tanh(a) => {
                let g = &go * &node.value.mapv(|y| 1.0 - y * y);
                add_grad(*a, g)?;
            }
            Op::Artanh(a) => {
                let g = &go / &nodes[*a].value.mapv(|x| 1.0 - x * x);
                add_grad(*a, g)?;
            }
            Op::Sinh(a) => {
                let g = &go * &nodes[*a].value.mapv(f64::cosh);
                add_grad(*a, g)?;
            }
            Op::Cosh(a) => {
                let g = &go * &nodes[*a].value.mapv(f64::sinh);
                add_grad(*a, g)?;
            }
            Op::Acosh(a) => {
                let g = &go / &nodes[*a].value.mapv(|x| (x * x - 1.0).sqrt());
                add_grad(*a, g)?;
            }
            Op::Sigmoid(a) => {
                let g = &go * &node.value.mapv(|y| y * (1.0 - y));
                add_grad(*a, g)?;
            }
            Op::Softplus(a) => {
                let g = &go * &nodes[*a].value.mapv(|x| {
                    if x >= 0.0 {
                        1.0 / (1.0 + (-x).exp())
                    } else {
                        let e = x.exp();
                        e / (1.0 + e)
                    }
                });
                add_grad(*a, g)?;
            }
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let mut g = Array2::zeros(y.dim());
                for i in 0..y.nrows() {
                    let yi = y.row(i);
                    let gi = go.row(i);
                    let dot = yi.dot(&gi);
                    for j in 0..y.ncols() {
                        g[[i, j]] = yi[j] * (gi[j] - dot);
                    }
                }
                add_grad(*a, g)?;
            }
        }
    }

    Ok(params
        .iter()
        .map(|p| {
            grads[p.id]
                .clone()
                .unwrap_or_else(|| Array2::zeros(nodes[p.id].value.dim()))
        })
        .collect())
}

/// Where a trainable parameter lives, which picks its update rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSpace {
    /// Plain Euclidean coordinates (weight matrices, decoder heads).
    Euclidean,
    /// Tangent coordinates at the origin, mapped through `exp_o` at use
    /// sites; updated as plain Euclidean vectors.
    TangentAtOrigin,
    /// Poincaré-ball coordinates: updates scale the Euclidean gradient by
    /// the inverse conformal metric `(1 + kappa ||x||^2)^2 / 4` and project
    /// back into the ball.
    RiemannianPoincare,
}

/// A named trainable tensor.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Array2<f64>,
    pub space: ParamSpace,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Array2<f64>, space: ParamSpace) -> Parameter {
        Parameter { name: name.into(), value, space }
    }
}

/// One coordinate that failed a finite-difference comparison.
#[derive(Debug, Clone)]
pub struct CoordError {
    pub param: usize,
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

/// Outcome of [`grad_check`]. Failures are data, not panics.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub tol_rel: f64,
    pub failures: Vec<CoordError>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Central-finite-difference comparison of analytic gradients, coordinate
/// by coordinate.
pub fn grad_check<F>(f: F, params: &[Array2<f64>], h: f64, tol_rel: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let eval = |values: &[Array2<f64>]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.leaf(v.clone())).collect();
        let loss = f(&tape, &vars)?;
        let v = loss.value();
        if v.dim() != (1, 1) {
            return Err(Error::NonScalarLoss(v.nrows(), v.ncols()));
        }
        Ok(v[[0, 0]])
    };

    let grads = {
        let tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|v| tape.leaf(v.clone())).collect();
        let loss = f(&tape, &vars)?;
        gradient(loss, &vars)?
    };

    let mut report = GradCheckReport { max_rel_err: 0.0, checked: 0, tol_rel, failures: Vec::new() };
    let mut work: Vec<Array2<f64>> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for row in 0..p.nrows() {
            for col in 0..p.ncols() {
                work[pi][[row, col]] = p[[row, col]] + h;
                let up = eval(&work)?;
                work[pi][[row, col]] = p[[row, col]] - h;
                let down = eval(&work)?;
                work[pi][[row, col]] = p[[row, col]];
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads[pi][[row, col]];
                let err = rel_err(analytic, numeric);
                report.checked += 1;
                if err > report.max_rel_err {
                    report.max_rel_err = err;
                }
                if err > tol_rel {
                    report.failures.push(CoordError {
                        param: pi,
                        row,
                        col,
                        analytic,
                        numeric,
                        rel_err: err,
                    });
                }
            }
        }
    }
    Ok(report)
}
