//! Taped reverse-mode differentiation over small dense matrices.
//!
//! Every primitive appends a node holding its forward value. [`Tape::backward`]
//! walks the nodes in reverse and accumulates adjoints for every node that
//! transitively depends on a parameter leaf. The primitive set is exactly what
//! the networks in this crate use; it is not a general tensor library.

use super::matrix::{matmul_acc, matmul_at_acc, matmul_bt_acc, Matrix};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Exp(usize),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Abs(usize),
    Ln(usize),
    Square(usize),
    Sum(usize),
    Clamp(usize, f64, f64),
    SliceCols(usize, usize),
    Row(usize, usize),
    Reshape(usize),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::AddRow(..) => "add_row",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Exp(_) => "exp",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Relu(_) => "relu",
            Op::Abs(_) => "abs",
            Op::Ln(_) => "ln",
            Op::Square(_) => "square",
            Op::Sum(_) => "sum",
            Op::Clamp(..) => "clamp",
            Op::SliceCols(..) => "slice_cols",
            Op::Row(..) => "row",
            Op::Reshape(_) => "reshape",
        }
    }
}

struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<&'static str>,
}

/// Adjoints produced by one backward pass, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`; zeros if `v` does not
    /// influence the root.
    pub fn wrt(&self, v: Var) -> Vec<f64> {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => vec![0.0; self.lens[v.0]],
        }
    }

    pub fn take(&mut self, v: Var) -> Vec<f64> {
        self.grads[v.0].take().unwrap_or_else(|| vec![0.0; self.lens[v.0]])
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

    /// Name of the first primitive whose output was non-finite, if any.
    pub fn fault(&self) -> Option<&'static str> {
        self.fault
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.fault {
            Some(op) => Err(Error::NonFinite { op }),
            None => Ok(()),
        }
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        if self.fault.is_none() && !value.is_finite() {
            self.fault = Some(op.name());
        }
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, a: usize) -> bool {
        self.nodes[a].needs_grad
    }

    fn ng2(&self, a: usize, b: usize) -> bool {
        self.nodes[a].needs_grad || self.nodes[b].needs_grad
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Copies the value of `a` into a constant; no gradient flows back
    /// through the result.
    pub fn detach(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.clone();
        self.constant(value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::Shape(format!("matmul {m}x{k} by {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        matmul_acc(&self.nodes[a.0].value.data, &self.nodes[b.0].value.data, &mut out, m, k, n);
        let ng = self.ng2(a.0, b.0);
        Ok(self.push(Matrix { rows: m, cols: n, data: out }, Op::MatMul(a.0, b.0), ng))
    }

    fn zip_same(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!("{}: {:?} vs {:?}", op.name(), self.shape(a), self.shape(b))));
        }
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        let data = va.data.iter().zip(&vb.data).map(|(&x, &y)| f(x, y)).collect();
        let value = Matrix { rows: va.rows, cols: va.cols, data };
        let ng = self.ng2(a.0, b.0);
        Ok(self.push(value, op, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, Op::Add(a.0, b.0), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, Op::Sub(a.0, b.0), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, Op::Mul(a.0, b.0), |x, y| x * y)
    }

    /// Adds the `1×c` row `b` to every row of `a` (`r×c`).
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if self.shape(b) != (1, c) {
            return Err(Error::Shape(format!("add_row {r}x{c} with {:?}", self.shape(b))));
        }
        let bias = &self.nodes[b.0].value.data;
        let mut data = self.nodes[a.0].value.data.clone();
        for row in data.chunks_mut(c) {
            for (x, &bv) in row.iter_mut().zip(bias) {
                *x += bv;
            }
        }
        let ng = self.ng2(a.0, b.0);
        Ok(self.push(Matrix { rows: r, cols: c, data }, Op::AddRow(a.0, b.0), ng))
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let va = &self.nodes[a.0].value;
        let value = Matrix { rows: va.rows, cols: va.cols, data: va.data.iter().map(|&x| f(x)).collect() };
        let ng = self.ng(a.0);
        self.push(value, op, ng)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.map(a, Op::Scale(a.0, s), |x| x * s)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, Op::Exp(a.0), f64::exp)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, Op::Tanh(a.0), f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a.0), sigmoid)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, Op::Relu(a.0), |x| x.max(0.0))
    }

    /// Elementwise absolute value; the gradient at exactly zero is zero.
    pub fn abs(&mut self, a: Var) -> Var {
        self.map(a, Op::Abs(a.0), f64::abs)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.map(a, Op::Ln(a.0), f64::ln)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.map(a, Op::Square(a.0), |x| x * x)
    }

    /// Clamps into `[lo, hi]`; entries outside the interval get zero gradient.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.map(a, Op::Clamp(a.0, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].value.data.iter().sum();
        let ng = self.ng(a.0);
        self.push(Matrix::scalar(s), Op::Sum(a.0), ng)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(a);
        if start + len > c {
            return Err(Error::Shape(format!("slice_cols [{start}, {}) of {c} columns", start + len)));
        }
        let va = &self.nodes[a.0].value;
        let mut data = Vec::with_capacity(r * len);
        for row in 0..r {
            data.extend_from_slice(&va.data[row * c + start..row * c + start + len]);
        }
        let ng = self.ng(a.0);
        Ok(self.push(Matrix { rows: r, cols: len, data }, Op::SliceCols(a.0, start), ng))
    }

    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        let (rows, _) = self.shape(a);
        if r >= rows {
            return Err(Error::Shape(format!("row {r} of {rows}")));
        }
        let data = self.nodes[a.0].value.row(r).to_vec();
        let ng = self.ng(a.0);
        Ok(self.push(Matrix::row_vector(data), Op::Row(a.0, r), ng))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let va = &self.nodes[a.0].value;
        if va.len() != rows * cols {
            return Err(Error::Shape(format!("reshape {:?} to {rows}x{cols}", va.shape())));
        }
        let value = Matrix { rows, cols, data: va.data.clone() };
        let ng = self.ng(a.0);
        Ok(self.push(value, Op::Reshape(a.0), ng))
    }

    /// Reverse pass from `root`, seeded with ones.
    pub fn backward(&self, root: Var) -> Gradients {
        let n = root.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let lens = self.nodes.iter().map(|nd| nd.value.len()).collect();
        grads[root.0] = Some(vec![1.0; self.nodes[root.0].value.len()]);

        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads, lens }
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let out = &nodes[i].value;
        // Lazily allocated adjoint buffer of node `j`.
        macro_rules! acc {
            ($j:expr) => {{
                let j = $j;
                grads[j].get_or_insert_with(|| vec![0.0; nodes[j].value.len()])
            }};
        }
        let ew = |j: usize, grads: &mut [Option<Vec<f64>>], f: &dyn Fn(usize, f64) -> f64| {
            if nodes[j].needs_grad {
                let buf = grads[j].get_or_insert_with(|| vec![0.0; nodes[j].value.len()]);
                for (k, (b, &gk)) in buf.iter_mut().zip(g).enumerate() {
                    *b += f(k, gk);
                }
            }
        };
        match nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = nodes[a].value.shape();
                let n = nodes[b].value.cols;
                if nodes[a].needs_grad {
                    matmul_bt_acc(g, &nodes[b].value.data, acc!(a), m, k, n);
                }
                if nodes[b].needs_grad {
                    matmul_at_acc(&nodes[a].value.data, g, acc!(b), m, k, n);
                }
            }
            Op::Add(a, b) => {
                ew(a, grads, &|_, gk| gk);
                ew(b, grads, &|_, gk| gk);
            }
            Op::Sub(a, b) => {
                ew(a, grads, &|_, gk| gk);
                ew(b, grads, &|_, gk| -gk);
            }
            Op::Mul(a, b) => {
                let va = &nodes[a].value.data;
                let vb = &nodes[b].value.data;
                ew(a, grads, &|k, gk| gk * vb[k]);
                ew(b, grads, &|k, gk| gk * va[k]);
            }
            Op::AddRow(a, b) => {
                ew(a, grads, &|_, gk| gk);
                if nodes[b].needs_grad {
                    let c = out.cols;
                    let buf = acc!(b);
                    for row in g.chunks(c) {
                        for (x, &gk) in buf.iter_mut().zip(row) {
                            *x += gk;
                        }
                    }
                }
            }
            Op::Scale(a, s) => ew(a, grads, &|_, gk| gk * s),
            Op::Exp(a) => ew(a, grads, &|k, gk| gk * out.data[k]),
            Op::Tanh(a) => ew(a, grads, &|k, gk| gk * (1.0 - out.data[k] * out.data[k])),
            Op::Sigmoid(a) => ew(a, grads, &|k, gk| gk * out.data[k] * (1.0 - out.data[k])),
            Op::Relu(a) => {
                let va = &nodes[a].value.data;
                ew(a, grads, &|k, gk| if va[k] > 0.0 { gk } else { 0.0 })
            }
            Op::Abs(a) => {
                let va = &nodes[a].value.data;
                ew(a, grads, &|k, gk| {
                    let x = va[k];
                    if x > 0.0 {
                        gk
                    } else if x < 0.0 {
                        -gk
                    } else {
                        0.0
                    }
                })
            }
            Op::Ln(a) => {
                let va = &nodes[a].value.data;
                ew(a, grads, &|k, gk| gk / va[k])
            }
            Op::Square(a) => {
                let va = &nodes[a].value.data;
                ew(a, grads, &|k, gk| 2.0 * gk * va[k])
            }
            Op::Clamp(a, lo, hi) => {
                let va = &nodes[a].value.data;
                ew(a, grads, &|k, gk| if va[k] >= lo && va[k] <= hi { gk } else { 0.0 })
            }
            Op::Sum(a) => {
                if nodes[a].needs_grad {
                    let g0 = g[0];
                    for x in acc!(a).iter_mut() {
                        *x += g0;
                    }
                }
            }
            Op::SliceCols(a, start) => {
                if nodes[a].needs_grad {
                    let c = nodes[a].value.cols;
                    let len = out.cols;
                    let buf = acc!(a);
                    for (r, row) in g.chunks(len).enumerate() {
                        for (x, &gk) in buf[r * c + start..r * c + start + len].iter_mut().zip(row) {
                            *x += gk;
                        }
                    }
                }
            }
            Op::Row(a, r) => {
                if nodes[a].needs_grad {
                    let c = nodes[a].value.cols;
                    let buf = acc!(a);
                    for (x, &gk) in buf[r * c..(r + 1) * c].iter_mut().zip(g) {
                        *x += gk;
                    }
                }
            }
            Op::Reshape(a) => ew(a, grads, &|_, gk| gk),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_grad(x: f64, f: impl Fn(&mut Tape, Var) -> Var) -> (f64, f64) {
        let mut t = Tape::new();
        let v = t.param(Matrix::scalar(x));
        let out = f(&mut t, v);
        let g = t.backward(out);
        (t.scalar(out), g.wrt(v)[0])
    }

    #[test]
    fn square_value_and_grad() {
        let (v, g) = scalar_grad(3.0, |t, x| t.square(x));
        assert_eq!((v, g), (9.0, 6.0));
    }

    #[test]
    fn abs_subgradient() {
        assert_eq!(scalar_grad(-2.0, |t, x| t.abs(x)), (2.0, -1.0));
        assert_eq!(scalar_grad(0.0, |t, x| t.abs(x)), (0.0, 0.0));
    }

    #[test]
    fn reused_node_accumulates() {
        // f(x) = x * x via mul of the same var
        let (v, g) = scalar_grad(1.5, |t, x| t.mul(x, x).unwrap());
        assert_eq!(v, 2.25);
        assert_eq!(g, 3.0);
    }

    #[test]
    fn detach_blocks_gradient() {
        let (_, g) = scalar_grad(2.0, |t, x| {
            let d = t.detach(x);
            t.mul(d, d).unwrap()
        });
        assert_eq!(g, 0.0);
    }

    #[test]
    fn ln_of_zero_is_reported() {
        let mut t = Tape::new();
        let x = t.param(Matrix::scalar(0.0));
        let _ = t.ln(x);
        assert!(matches!(t.check_finite(), Err(Error::NonFinite { op: "ln" })));
    }

    #[test]
    fn shape_errors() {
        let mut t = Tape::new();
        let a = t.param(Matrix::zeros(2, 3));
        let b = t.param(Matrix::zeros(2, 3));
        assert!(t.matmul(a, b).is_err());
        assert!(t.add_row(a, b).is_err());
        assert!(t.slice_cols(a, 2, 2).is_err());
        assert!(t.row(a, 2).is_err());
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        assert_eq!(sigmoid(800.0), 1.0);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
