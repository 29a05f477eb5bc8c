//! Reverse-mode differentiation over dense 64-bit matrices.
//!
//! A [`Tape`] records every operation of a forward pass; [`Tape::backward`]
//! replays it in reverse creation order, which is a valid reverse topological
//! order because an operation can only refer to earlier nodes. Column vectors
//! are represented as `(d, 1)` matrices.

use std::cell::RefCell;

use ndarray::{s, Axis};

use super::linalg::{self, Mat};
use crate::error::Result;

// Some op fields (`Shift` amount, slice upper bounds, assembled size) are
// recorded for forward-shape bookkeeping even though backward does not read
// them.
#[allow(dead_code)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    Shift(usize, f64),
    ClampMin(usize, f64),
    MatMul(usize, usize),
    Transpose(usize),
    Tanh(usize),
    Sigmoid(usize),
    Exp(usize),
    Ln(usize),
    Sum(usize),
    ElemMax(usize, usize),
    ConcatRows(usize, usize),
    ConcatCols(Vec<usize>),
    Slice {
        src: usize,
        r0: usize,
        r1: usize,
        c0: usize,
        c1: usize,
    },
    Inverse(usize),
    LogDet {
        src: usize,
        inv: Mat,
    },
    /// Principal minor L0 of the Laplacian built from edge weights F.
    LaplacianMinor(usize),
    /// Posterior edge marginals from F and L0^{-1}.
    Marginals {
        f: usize,
        inv: usize,
    },
    LogSoftmaxCol(usize),
    /// Square matrix assembled from 1x1 scalar nodes at fixed positions.
    AssembleSquare {
        size: usize,
        entries: Vec<(usize, usize, usize)>,
    },
}

struct Node {
    value: Mat,
    op: Op,
}

/// Records a forward computation for later differentiation. One tape is owned
/// by exactly one training step.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value on a tape.
#[derive(Copy, Clone)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
}

/// Gradients of one scalar output with respect to every tape node.
pub struct Grads {
    grads: Vec<Option<Mat>>,
    shapes: Vec<(usize, usize)>,
}

impl Grads {
    /// Gradient with respect to `v`; zero if the output does not depend on it.
    pub fn wrt(&self, v: Var<'_>) -> Mat {
        match &self.grads[v.idx] {
            Some(g) => g.clone(),
            None => Mat::zeros(self.shapes[v.idx]),
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Mat, op: Op) -> Var<'_> {
        debug_assert!(
            value.iter().all(|v| v.is_finite()),
            "non-finite value entered the tape"
        );
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var {
            tape: self,
            idx: nodes.len() - 1,
        }
    }

    pub fn leaf(&self, value: Mat) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&self, v: f64) -> Var<'_> {
        self.leaf(Mat::from_elem((1, 1), v))
    }

    pub fn zeros(&self, rows: usize, cols: usize) -> Var<'_> {
        self.leaf(Mat::zeros((rows, cols)))
    }

    pub fn value(&self, v: Var<'_>) -> Mat {
        self.nodes.borrow()[v.idx].value.clone()
    }

    pub fn scalar_value(&self, v: Var<'_>) -> f64 {
        let nodes = self.nodes.borrow();
        let m = &nodes[v.idx].value;
        assert_eq!(m.len(), 1, "scalar_value on non-scalar node");
        m[[0, 0]]
    }

    pub fn concat_cols<'t>(&'t self, parts: &[Var<'t>]) -> Var<'t> {
        assert!(!parts.is_empty());
        let value = {
            let nodes = self.nodes.borrow();
            let views: Vec<_> = parts.iter().map(|p| nodes[p.idx].value.view()).collect();
            ndarray::concatenate(Axis(1), &views).expect("row counts must agree")
        };
        self.push(value, Op::ConcatCols(parts.iter().map(|p| p.idx).collect()))
    }

    /// Assembles a `size` x `size` matrix whose entry (i, j) is the scalar
    /// node given for that position; unlisted positions are structural zeros.
    pub fn assemble_square<'t>(&'t self, size: usize, entries: &[(usize, usize, Var<'t>)]) -> Var<'t> {
        let mut value = Mat::zeros((size, size));
        {
            let nodes = self.nodes.borrow();
            for &(i, j, v) in entries {
                let m = &nodes[v.idx].value;
                assert_eq!(m.len(), 1, "assemble_square entries must be scalars");
                value[[i, j]] = m[[0, 0]];
            }
        }
        self.push(
            value,
            Op::AssembleSquare {
                size,
                entries: entries.iter().map(|&(i, j, v)| (i, j, v.idx)).collect(),
            },
        )
    }

    /// Backward pass from a 1x1 output, visiting nodes in reverse creation
    /// order exactly once.
    pub fn backward(&self, output: Var<'_>) -> Grads {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[output.idx].value.len(), 1, "backward needs a scalar output");
        let mut grads: Vec<Option<Mat>> = vec![None; nodes.len()];
        grads[output.idx] = Some(Mat::from_elem((1, 1), 1.0));

        let accumulate = |grads: &mut Vec<Option<Mat>>, idx: usize, delta: Mat| match &mut grads[idx] {
            Some(g) => *g += &delta,
            slot @ None => *slot = Some(delta),
        };

        for idx in (0..nodes.len()).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            let node = &nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, -&g);
                }
                Op::Mul(a, b) => {
                    accumulate(&mut grads, *a, &g * &nodes[*b].value);
                    accumulate(&mut grads, *b, &g * &nodes[*a].value);
                }
                Op::Neg(a) => accumulate(&mut grads, *a, -&g),
                Op::Scale(a, c) => accumulate(&mut grads, *a, &g * *c),
                Op::Shift(a, _) => accumulate(&mut grads, *a, g.clone()),
                Op::ClampMin(a, c) => {
                    let mut d = g.clone();
                    for (dv, av) in d.iter_mut().zip(nodes[*a].value.iter()) {
                        if *av < *c {
                            *dv = 0.0;
                        }
                    }
                    accumulate(&mut grads, *a, d);
                }
                Op::MatMul(a, b) => {
                    accumulate(&mut grads, *a, g.dot(&nodes[*b].value.t()));
                    accumulate(&mut grads, *b, nodes[*a].value.t().dot(&g));
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.t().to_owned()),
                Op::Tanh(a) => {
                    let y = &node.value;
                    accumulate(&mut grads, *a, &g * &(1.0 - y * y));
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    accumulate(&mut grads, *a, &g * &(y * &(1.0 - y)));
                }
                Op::Exp(a) => accumulate(&mut grads, *a, &g * &node.value),
                Op::Ln(a) => accumulate(&mut grads, *a, &g / &nodes[*a].value),
                Op::Sum(a) => {
                    accumulate(&mut grads, *a, Mat::from_elem(nodes[*a].value.raw_dim(), g[[0, 0]]));
                }
                Op::ElemMax(a, b) => {
                    // ties go to the first operand (lowest time index when
                    // folding a pooling chain)
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    let mut ga = Mat::zeros(av.raw_dim());
                    let mut gb = Mat::zeros(bv.raw_dim());
                    for i in 0..av.len() {
                        let (r, c) = (i / av.ncols(), i % av.ncols());
                        if av[[r, c]] >= bv[[r, c]] {
                            ga[[r, c]] = g[[r, c]];
                        } else {
                            gb[[r, c]] = g[[r, c]];
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::ConcatRows(a, b) => {
                    let ra = nodes[*a].value.nrows();
                    accumulate(&mut grads, *a, g.slice(s![..ra, ..]).to_owned());
                    accumulate(&mut grads, *b, g.slice(s![ra.., ..]).to_owned());
                }
                Op::ConcatCols(parts) => {
                    let mut c0 = 0;
                    for p in parts {
                        let w = nodes[*p].value.ncols();
                        accumulate(&mut grads, *p, g.slice(s![.., c0..c0 + w]).to_owned());
                        c0 += w;
                    }
                }
                Op::Slice { src, r0, r1: _, c0, c1: _ } => {
                    let mut d = Mat::zeros(nodes[*src].value.raw_dim());
                    d.slice_mut(s![*r0..*r0 + g.nrows(), *c0..*c0 + g.ncols()])
                        .assign(&g);
                    accumulate(&mut grads, *src, d);
                }
                Op::Inverse(a) => {
                    // dL/dA = -A^-T G A^-T
                    let inv_t = node.value.t();
                    accumulate(&mut grads, *a, -inv_t.dot(&g).dot(&inv_t));
                }
                Op::LogDet { src, inv } => {
                    accumulate(&mut grads, *src, inv.t().to_owned() * g[[0, 0]]);
                }
                Op::LaplacianMinor(f) => {
                    // L0[j-1,j-1] collects +f_ij for every parent i != j,
                    // L0[i-1,j-1] carries -f_ij for i,j >= 1
                    let np1 = nodes[*f].value.nrows();
                    let n = np1 - 1;
                    let mut d = Mat::zeros((np1, np1));
                    for j in 1..=n {
                        d[[0, j]] = g[[j - 1, j - 1]];
                        for i in 1..=n {
                            if i != j {
                                d[[i, j]] = g[[j - 1, j - 1]] - g[[i - 1, j - 1]];
                            }
                        }
                    }
                    accumulate(&mut grads, *f, d);
                }
                Op::Marginals { f, inv } => {
                    let fv = &nodes[*f].value;
                    let invv = &nodes[*inv].value;
                    let np1 = fv.nrows();
                    let n = np1 - 1;
                    let mut df = Mat::zeros((np1, np1));
                    let mut dinv = Mat::zeros((n, n));
                    for j in 1..=n {
                        // a_0j = f_0j * inv[j-1,j-1]
                        df[[0, j]] = g[[0, j]] * invv[[j - 1, j - 1]];
                        dinv[[j - 1, j - 1]] += g[[0, j]] * fv[[0, j]];
                        for i in 1..=n {
                            if i == j {
                                continue;
                            }
                            // a_ij = f_ij * (inv[j-1,j-1] - inv[j-1,i-1])
                            df[[i, j]] = g[[i, j]] * (invv[[j - 1, j - 1]] - invv[[j - 1, i - 1]]);
                            dinv[[j - 1, j - 1]] += g[[i, j]] * fv[[i, j]];
                            dinv[[j - 1, i - 1]] -= g[[i, j]] * fv[[i, j]];
                        }
                    }
                    accumulate(&mut grads, *f, df);
                    accumulate(&mut grads, *inv, dinv);
                }
                Op::LogSoftmaxCol(a) => {
                    let y = &node.value;
                    let gsum: f64 = g.sum();
                    accumulate(&mut grads, *a, &g - &(y.mapv(f64::exp) * gsum));
                }
                Op::AssembleSquare { size: _, entries } => {
                    for (i, j, src) in entries {
                        accumulate(&mut grads, *src, Mat::from_elem((1, 1), g[[*i, *j]]));
                    }
                }
            }
        }

        let shapes = nodes.iter().map(|n| (n.value.nrows(), n.value.ncols())).collect();
        Grads { grads, shapes }
    }
}

// Method names mirror the math (add/sub/mul/neg) on purpose; Var is Copy and
// tape-bound, so the operator traits' by-value semantics fit poorly.
#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Mat {
        self.tape.value(*self)
    }

    fn unary(self, value: Mat, op: Op) -> Var<'t> {
        self.tape.push(value, op)
    }

    fn with<R>(self, f: impl FnOnce(&Mat) -> R) -> R {
        f(&self.tape.nodes.borrow()[self.idx].value)
    }

    fn with2<R>(self, other: Var<'t>, f: impl FnOnce(&Mat, &Mat) -> R) -> R {
        let nodes = self.tape.nodes.borrow();
        f(&nodes[self.idx].value, &nodes[other.idx].value)
    }

    pub fn add(self, rhs: Var<'t>) -> Var<'t> {
        let v = self.with2(rhs, |a, b| a + b);
        self.unary(v, Op::Add(self.idx, rhs.idx))
    }

    pub fn sub(self, rhs: Var<'t>) -> Var<'t> {
        let v = self.with2(rhs, |a, b| a - b);
        self.unary(v, Op::Sub(self.idx, rhs.idx))
    }

    pub fn mul(self, rhs: Var<'t>) -> Var<'t> {
        let v = self.with2(rhs, |a, b| a * b);
        self.unary(v, Op::Mul(self.idx, rhs.idx))
    }

    pub fn neg(self) -> Var<'t> {
        let v = self.with(|a| -a);
        self.unary(v, Op::Neg(self.idx))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let v = self.with(|a| a * c);
        self.unary(v, Op::Scale(self.idx, c))
    }

    pub fn shift(self, c: f64) -> Var<'t> {
        let v = self.with(|a| a + c);
        self.unary(v, Op::Shift(self.idx, c))
    }

    pub fn clamp_min(self, c: f64) -> Var<'t> {
        let v = self.with(|a| a.mapv(|x| x.max(c)));
        self.unary(v, Op::ClampMin(self.idx, c))
    }

    pub fn matmul(self, rhs: Var<'t>) -> Var<'t> {
        let v = self.with2(rhs, |a, b| a.dot(b));
        self.unary(v, Op::MatMul(self.idx, rhs.idx))
    }

    pub fn t(self) -> Var<'t> {
        let v = self.with(|a| a.t().to_owned());
        self.unary(v, Op::Transpose(self.idx))
    }

    pub fn tanh(self) -> Var<'t> {
        let v = self.with(|a| a.mapv(f64::tanh));
        self.unary(v, Op::Tanh(self.idx))
    }

    pub fn sigmoid(self) -> Var<'t> {
        let v = self.with(|a| a.mapv(sigmoid));
        self.unary(v, Op::Sigmoid(self.idx))
    }

    pub fn exp(self) -> Var<'t> {
        let v = self.with(|a| a.mapv(f64::exp));
        self.unary(v, Op::Exp(self.idx))
    }

    pub fn ln(self) -> Var<'t> {
        let v = self.with(|a| a.mapv(f64::ln));
        self.unary(v, Op::Ln(self.idx))
    }

    pub fn sum(self) -> Var<'t> {
        let v = self.with(|a| Mat::from_elem((1, 1), a.sum()));
        self.unary(v, Op::Sum(self.idx))
    }

    /// Element-wise max; ties resolved to `self`.
    pub fn emax(self, rhs: Var<'t>) -> Var<'t> {
        let v = self.with2(rhs, |a, b| {
            let mut out = a.clone();
            for (o, bv) in out.iter_mut().zip(b.iter()) {
                if *bv > *o {
                    *o = *bv;
                }
            }
            out
        });
        self.unary(v, Op::ElemMax(self.idx, rhs.idx))
    }

    pub fn concat_rows(self, below: Var<'t>) -> Var<'t> {
        let v = self.with2(below, |a, b| {
            ndarray::concatenate(Axis(0), &[a.view(), b.view()]).expect("column counts must agree")
        });
        self.unary(v, Op::ConcatRows(self.idx, below.idx))
    }

    pub fn slice(self, r0: usize, r1: usize, c0: usize, c1: usize) -> Var<'t> {
        let v = self.with(|a| a.slice(s![r0..r1, c0..c1]).to_owned());
        self.unary(v, Op::Slice { src: self.idx, r0, r1, c0, c1 })
    }

    /// Row `i` as a column vector.
    pub fn row_as_col(self, i: usize) -> Var<'t> {
        let cols = self.with(|a| a.ncols());
        self.slice(i, i + 1, 0, cols).t()
    }

    pub fn inverse(self) -> Result<Var<'t>> {
        let (inv, _, _) = self.with(linalg::invert_with_logdet)?;
        Ok(self.unary(inv, Op::Inverse(self.idx)))
    }

    /// log|det|, 1x1. The sign is discarded; callers on the Laplacian path
    /// have a positive determinant by construction.
    pub fn logdet(self) -> Result<Var<'t>> {
        let (inv, ld, _) = self.with(linalg::invert_with_logdet)?;
        Ok(self.unary(Mat::from_elem((1, 1), ld), Op::LogDet { src: self.idx, inv }))
    }

    /// Laplacian principal minor L0 of an (n+1)x(n+1) edge weight matrix:
    /// L0[j-1,j-1] = sum_i f_ij, off-diagonal L0[i-1,j-1] = -f_ij.
    pub fn laplacian_minor(self) -> Var<'t> {
        let v = self.with(|f| {
            let n = f.nrows() - 1;
            let mut l0 = Mat::zeros((n, n));
            for j in 1..=n {
                let mut diag = f[[0, j]];
                for i in 1..=n {
                    if i != j {
                        diag += f[[i, j]];
                        l0[[i - 1, j - 1]] = -f[[i, j]];
                    }
                }
                l0[[j - 1, j - 1]] = diag;
            }
            l0
        });
        self.unary(v, Op::LaplacianMinor(self.idx))
    }

    /// Edge marginals a_ij from weights F (self) and L0^{-1}.
    pub fn marginals_from_inverse(self, inv: Var<'t>) -> Var<'t> {
        let v = self.with2(inv, |f, invv| {
            let np1 = f.nrows();
            let n = np1 - 1;
            let mut a = Mat::zeros((np1, np1));
            for j in 1..=n {
                a[[0, j]] = f[[0, j]] * invv[[j - 1, j - 1]];
                for i in 1..=n {
                    if i != j {
                        a[[i, j]] = f[[i, j]] * (invv[[j - 1, j - 1]] - invv[[j - 1, i - 1]]);
                    }
                }
            }
            a
        });
        self.unary(v, Op::Marginals { f: self.idx, inv: inv.idx })
    }

    pub fn log_softmax_col(self) -> Var<'t> {
        let v = self.with(|a| {
            assert_eq!(a.ncols(), 1);
            let max = a.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            let lse = max + a.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
            a.mapv(|x| x - lse)
        });
        self.unary(v, Op::LogSoftmaxCol(self.idx))
    }
}
