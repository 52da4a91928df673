//! Reverse-mode automatic differentiation on an append-only tape.
//!
//! Every backward rule is written in terms of tape operations, so the
//! gradients returned by [`Tape::grad`] are ordinary nodes on the same tape.
//! A scalar function of those gradients can be differentiated again, which
//! is how gradient matching obtains derivatives with respect to synthetic
//! features and adjacency parameters.
//!
//! ```
//! use fedgm::autodiff::Tape;
//! use fedgm::tensor::Tensor;
//!
//! let tape = Tape::new();
//! let x = tape.leaf(Tensor::scalar(2.0));
//! let x2 = tape.mul(x, x).unwrap();
//! let x3 = tape.mul(x2, x).unwrap();
//! let dx = tape.grad(x3, &[x]).unwrap()[0]; // 3x^2
//! let ddx = tape.grad(dx, &[x]).unwrap()[0]; // 6x
//! assert_eq!(tape.value(dx).item(), 12.0);
//! assert_eq!(tape.value(ddx).item(), 12.0);
//! ```

use std::cell::RefCell;
use std::rc::Rc;
use std::sync::Arc;

use crate::error::TensorError;
use crate::sparse::CsrMatrix;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A constant sparse operand together with its transpose.
#[derive(Debug, Clone)]
pub struct SparseOperand {
    forward: Arc<CsrMatrix>,
    transposed: Arc<CsrMatrix>,
}

impl SparseOperand {
    pub fn new(m: CsrMatrix) -> Self {
        let t = m.transpose();
        Self {
            forward: Arc::new(m),
            transposed: Arc::new(t),
        }
    }

    /// For matrices known to be symmetric; skips building the transpose.
    pub fn symmetric(m: CsrMatrix) -> Self {
        let forward = Arc::new(m);
        Self {
            transposed: Arc::clone(&forward),
            forward,
        }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.forward
    }

    fn flipped(&self) -> Self {
        Self {
            forward: Arc::clone(&self.transposed),
            transposed: Arc::clone(&self.forward),
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Transpose(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Recip(Var),
    Sqrt(Var),
    SumAll(Var),
    BroadcastScalar(Var),
    SumRows(Var),
    BroadcastCols(Var),
    SumCols(Var),
    BroadcastRows(Var),
    Reshape(Var),
    GatherRows(Var, Rc<[usize]>),
    ScatterAddRows(Var, Rc<[usize]>),
    SpMM(SparseOperand, Var),
}

impl Op {
    fn inputs(&self) -> [Option<Var>; 2] {
        use Op::*;
        match self {
            Leaf => [None, None],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b) => [Some(*a), Some(*b)],
            Neg(a) | Scale(a, _) | AddScalar(a) | Transpose(a) | Relu(a) | Sigmoid(a) | Exp(a)
            | Ln(a) | Recip(a) | Sqrt(a) | SumAll(a) | BroadcastScalar(a) | SumRows(a)
            | BroadcastCols(a) | SumCols(a) | BroadcastRows(a) | Reshape(a)
            | GatherRows(a, _) | ScatterAddRows(a, _) | SpMM(_, a) => [Some(*a), None],
        }
    }
}

struct Node {
    op: Op,
    value: Rc<Tensor>,
}

/// Append-only computation graph.
///
/// A tape is confined to one thread; build one per worker.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shared handle to a node's value.
    pub fn value(&self, v: Var) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes.borrow()[v.0].value.shape()
    }

    /// Records an input. Whether a leaf is differentiated is decided by the
    /// `wrt` list passed to [`Tape::grad`].
    pub fn leaf(&self, t: Tensor) -> Var {
        self.push(Op::Leaf, Rc::new(t))
    }

    /// A new leaf holding `v`'s current value, cutting it off from its history.
    pub fn detach(&self, v: Var) -> Var {
        let value = self.value(v);
        self.push(Op::Leaf, value)
    }

    fn push(&self, op: Op, value: Rc<Tensor>) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { op, value });
        Var(nodes.len() - 1)
    }

    fn record(&self, op: Op, value: Tensor, name: &'static str) -> Result<Var, TensorError> {
        value.ensure_finite(name)?;
        Ok(self.push(op, Rc::new(value)))
    }

    fn op(&self, v: Var) -> Op {
        self.nodes.borrow()[v.0].op.clone()
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.value(a).zip_map(&self.value(b), "add", |x, y| x + y)?;
        self.record(Op::Add(a, b), out, "add")
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.value(a).zip_map(&self.value(b), "sub", |x, y| x - y)?;
        self.record(Op::Sub(a, b), out, "sub")
    }

    /// Elementwise product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.value(a).zip_map(&self.value(b), "mul", |x, y| x * y)?;
        self.record(Op::Mul(a, b), out, "mul")
    }

    pub fn neg(&self, a: Var) -> Result<Var, TensorError> {
        let out = self.value(a).map(|x| -x);
        self.record(Op::Neg(a), out, "neg")
    }

    pub fn scale(&self, a: Var, c: f64) -> Result<Var, TensorError> {
        let out = self.value(a).map(|x| c * x);
        self.record(Op::Scale(a, c), out, "scale")
    }

    pub fn add_scalar(&self, a: Var, c: f64) -> Result<Var, TensorError> {
        let out = self.value(a).map(|x| x + c);
        self.record(Op::AddScalar(a), out, "add_scalar")
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.value(a).matmul(&self.value(b))?;
        self.record(Op::MatMul(a, b), out, "matmul")
    }

    pub fn transpose(&self, a: Var) -> Result<Var, TensorError> {
        let out = self.value(a).transpose();
        self.record(Op::Transpose(a), out, "transpose")
    }

    /// `max(0, x)`; the derivative at exactly 0 is 0.
    pub fn relu(&self, a: Var) -> Result<Var, TensorError> {
        let out = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.record(Op::Relu(a), out, "relu")
    }

    pub fn sigmoid(&self, a: Var) -> Result<Var, TensorError> {
        let out = self.value(a).map(stable_sigmoid);
        self.record(Op::Sigmoid(a), out, "sigmoid")
    }

    pub fn exp(&self, a: Var) -> Result<Var, TensorError> {
        let out = self.value(a).map(f64::exp);
        self.record(Op::Exp(a), out, "exp")
    }

    pub fn ln(&self, a: Var) -> Result<Var, TensorError> {
        let out = self.value(a).map(f64::ln);
        self.record(Op::Ln(a), out, "ln")
    }

    pub fn recip(&self, a: Var) -> Result<Var, TensorError> {
        let out = self.value(a).map(|x| 1.0 / x);
        self.record(Op::Recip(a), out, "recip")
    }

    pub fn sqrt(&self, a: Var) -> Result<Var, TensorError> {
        let out = self.value(a).map(f64::sqrt);
        self.record(Op::Sqrt(a), out, "sqrt")
    }

    /// Sum of all entries, as a `1×1` tensor.
    pub fn sum_all(&self, a: Var) -> Result<Var, TensorError> {
        let out = Tensor::scalar(self.value(a).sum());
        self.record(Op::SumAll(a), out, "sum_all")
    }

    /// Repeats a `1×1` tensor to `rows×cols`.
    pub fn broadcast_scalar(&self, a: Var, rows: usize, cols: usize) -> Result<Var, TensorError> {
        let v = self.value(a);
        if v.shape() != [1, 1] {
            return Err(TensorError::NotScalar { shape: v.shape() });
        }
        let out = Tensor::full(rows, cols, v.item());
        self.record(Op::BroadcastScalar(a), out, "broadcast_scalar")
    }

    /// Sums each row: `n×m -> n×1`.
    pub fn sum_rows(&self, a: Var) -> Result<Var, TensorError> {
        let v = self.value(a);
        let sums: Vec<f64> = (0..v.rows()).map(|r| v.row(r).iter().sum()).collect();
        self.record(Op::SumRows(a), Tensor::column(&sums), "sum_rows")
    }

    /// Repeats a column vector across `cols` columns: `n×1 -> n×cols`.
    pub fn broadcast_cols(&self, a: Var, cols: usize) -> Result<Var, TensorError> {
        let v = self.value(a);
        if v.cols() != 1 {
            return Err(TensorError::Shape {
                op: "broadcast_cols",
                lhs: v.shape(),
                rhs: [v.rows(), cols],
            });
        }
        let mut out = Tensor::zeros(v.rows(), cols);
        for r in 0..v.rows() {
            out.row_mut(r).fill(v.get(r, 0));
        }
        self.record(Op::BroadcastCols(a), out, "broadcast_cols")
    }

    /// Sums each column: `n×m -> 1×m`.
    pub fn sum_cols(&self, a: Var) -> Result<Var, TensorError> {
        let v = self.value(a);
        let mut sums = vec![0.0; v.cols()];
        for r in 0..v.rows() {
            for (s, x) in sums.iter_mut().zip(v.row(r)) {
                *s += x;
            }
        }
        self.record(Op::SumCols(a), Tensor::row_vector(&sums), "sum_cols")
    }

    /// Repeats a row vector down `rows` rows: `1×m -> rows×m`.
    pub fn broadcast_rows(&self, a: Var, rows: usize) -> Result<Var, TensorError> {
        let v = self.value(a);
        if v.rows() != 1 {
            return Err(TensorError::Shape {
                op: "broadcast_rows",
                lhs: v.shape(),
                rhs: [rows, v.cols()],
            });
        }
        let mut data = Vec::with_capacity(rows * v.cols());
        for _ in 0..rows {
            data.extend_from_slice(v.data());
        }
        let out = Tensor::new(rows, v.cols(), data)?;
        self.record(Op::BroadcastRows(a), out, "broadcast_rows")
    }

    pub fn reshape(&self, a: Var, rows: usize, cols: usize) -> Result<Var, TensorError> {
        let v = self.value(a);
        let out = Tensor::new(rows, cols, v.data().to_vec()).map_err(|_| TensorError::Shape {
            op: "reshape",
            lhs: v.shape(),
            rhs: [rows, cols],
        })?;
        self.record(Op::Reshape(a), out, "reshape")
    }

    /// Row `r` of the output is row `idx[r]` of `a`.
    pub fn gather_rows(&self, a: Var, idx: &[usize]) -> Result<Var, TensorError> {
        let v = self.value(a);
        if let Some(&bad) = idx.iter().find(|&&i| i >= v.rows()) {
            return Err(TensorError::Length {
                what: "gather_rows index",
                expected: v.rows(),
                got: bad,
            });
        }
        let out = v.select_rows(idx);
        self.record(Op::GatherRows(a, idx.into()), out, "gather_rows")
    }

    /// Adds row `r` of `a` into row `idx[r]` of an `n`-row zero tensor.
    pub fn scatter_add_rows(&self, a: Var, idx: &[usize], n: usize) -> Result<Var, TensorError> {
        let v = self.value(a);
        if idx.len() != v.rows() {
            return Err(TensorError::Length {
                what: "scatter_add_rows index",
                expected: v.rows(),
                got: idx.len(),
            });
        }
        let mut out = Tensor::zeros(n, v.cols());
        for (r, &target) in idx.iter().enumerate() {
            for (o, x) in out.row_mut(target).iter_mut().zip(v.row(r)) {
                *o += x;
            }
        }
        self.record(Op::ScatterAddRows(a, idx.into()), out, "scatter_add_rows")
    }

    /// Constant sparse matrix times a differentiable dense operand.
    pub fn spmm(&self, s: &SparseOperand, b: Var) -> Result<Var, TensorError> {
        let out = s.forward.matmul(&self.value(b))?;
        self.record(Op::SpMM(s.clone(), b), out, "spmm")
    }

    /// Reverse-mode gradients of the scalar `output` with respect to `wrt`.
    ///
    /// The returned handles live on this tape and may be differentiated
    /// again. Inputs that `output` does not depend on get a zero leaf.
    pub fn grad(&self, output: Var, wrt: &[Var]) -> Result<Vec<Var>, TensorError> {
        let out_shape = self.shape(output);
        if out_shape != [1, 1] {
            return Err(TensorError::NotScalar { shape: out_shape });
        }
        let n = output.0 + 1;
        let mut depends = vec![false; n];
        for w in wrt {
            if w.0 < n {
                depends[w.0] = true;
            }
        }
        {
            let nodes = self.nodes.borrow();
            for i in 0..n {
                if depends[i] {
                    continue;
                }
                depends[i] = nodes[i]
                    .op
                    .inputs()
                    .iter()
                    .flatten()
                    .any(|inp| depends[inp.0]);
            }
        }

        let mut adjoint: Vec<Option<Var>> = vec![None; n];
        if depends[output.0] {
            adjoint[output.0] = Some(self.leaf(Tensor::scalar(1.0)));
        }
        for i in (0..n).rev() {
            if !depends[i] {
                continue;
            }
            let Some(g) = adjoint[i] else { continue };
            let op = self.op(Var(i));
            for (input, contrib) in self.backward_rule(&op, Var(i), g, &depends)? {
                adjoint[input.0] = Some(match adjoint[input.0] {
                    None => contrib,
                    Some(prev) => self.add(prev, contrib)?,
                });
            }
        }

        wrt.iter()
            .map(|w| match adjoint.get(w.0).copied().flatten() {
                Some(g) => Ok(g),
                None => {
                    let [r, c] = self.shape(*w);
                    Ok(self.leaf(Tensor::zeros(r, c)))
                }
            })
            .collect()
    }

    fn backward_rule(
        &self,
        op: &Op,
        out: Var,
        g: Var,
        depends: &[bool],
    ) -> Result<Vec<(Var, Var)>, TensorError> {
        use Op::*;
        let needs = |v: &Var| depends[v.0];
        let mut contribs = Vec::with_capacity(2);
        match op {
            Leaf => {}
            Add(a, b) => {
                if needs(a) {
                    contribs.push((*a, g));
                }
                if needs(b) {
                    contribs.push((*b, g));
                }
            }
            Sub(a, b) => {
                if needs(a) {
                    contribs.push((*a, g));
                }
                if needs(b) {
                    contribs.push((*b, self.neg(g)?));
                }
            }
            Mul(a, b) => {
                if needs(a) {
                    contribs.push((*a, self.mul(g, *b)?));
                }
                if needs(b) {
                    contribs.push((*b, self.mul(g, *a)?));
                }
            }
            Neg(a) => contribs.push((*a, self.neg(g)?)),
            Scale(a, c) => contribs.push((*a, self.scale(g, *c)?)),
            AddScalar(a) => contribs.push((*a, g)),
            MatMul(a, b) => {
                if needs(a) {
                    let bt = self.transpose(*b)?;
                    contribs.push((*a, self.matmul(g, bt)?));
                }
                if needs(b) {
                    let at = self.transpose(*a)?;
                    contribs.push((*b, self.matmul(at, g)?));
                }
            }
            Transpose(a) => contribs.push((*a, self.transpose(g)?)),
            Relu(a) => {
                let mask = self.value(*a).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                let mask = self.leaf(mask);
                contribs.push((*a, self.mul(g, mask)?));
            }
            Sigmoid(a) => {
                // s * (1 - s)
                let one_minus = self.add_scalar(self.neg(out)?, 1.0)?;
                let local = self.mul(out, one_minus)?;
                contribs.push((*a, self.mul(g, local)?));
            }
            Exp(a) => contribs.push((*a, self.mul(g, out)?)),
            Ln(a) => {
                let r = self.recip(*a)?;
                contribs.push((*a, self.mul(g, r)?));
            }
            Recip(a) => {
                let r2 = self.mul(out, out)?;
                let gr = self.mul(g, r2)?;
                contribs.push((*a, self.neg(gr)?));
            }
            Sqrt(a) => {
                let r = self.recip(out)?;
                let half = self.scale(r, 0.5)?;
                contribs.push((*a, self.mul(g, half)?));
            }
            SumAll(a) => {
                let [r, c] = self.shape(*a);
                contribs.push((*a, self.broadcast_scalar(g, r, c)?));
            }
            BroadcastScalar(a) => contribs.push((*a, self.sum_all(g)?)),
            SumRows(a) => {
                let [_, c] = self.shape(*a);
                contribs.push((*a, self.broadcast_cols(g, c)?));
            }
            BroadcastCols(a) => contribs.push((*a, self.sum_rows(g)?)),
            SumCols(a) => {
                let [r, _] = self.shape(*a);
                contribs.push((*a, self.broadcast_rows(g, r)?));
            }
            BroadcastRows(a) => contribs.push((*a, self.sum_cols(g)?)),
            Reshape(a) => {
                let [r, c] = self.shape(*a);
                contribs.push((*a, self.reshape(g, r, c)?));
            }
            GatherRows(a, idx) => {
                let [r, _] = self.shape(*a);
                contribs.push((*a, self.scatter_add_rows(g, idx, r)?));
            }
            ScatterAddRows(a, idx) => contribs.push((*a, self.gather_rows(g, idx)?)),
            SpMM(s, b) => contribs.push((*b, self.spmm(&s.flipped(), g)?)),
        }
        Ok(contribs)
    }
}

/// `1 / (1 + e^-x)` evaluated without overflow for large `|x|`.
pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean over masked rows of `-log softmax(logits)[label]`.
pub fn masked_cross_entropy(
    tape: &Tape,
    logits: Var,
    labels: &[usize],
    mask: &[bool],
) -> Result<Var, TensorError> {
    let [n, classes] = tape.shape(logits);
    if labels.len() != n {
        return Err(TensorError::Length {
            what: "labels",
            expected: n,
            got: labels.len(),
        });
    }
    if mask.len() != n {
        return Err(TensorError::Length {
            what: "mask",
            expected: n,
            got: mask.len(),
        });
    }
    let rows: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    if rows.is_empty() {
        return Err(TensorError::EmptyMask);
    }
    let mut onehot = Tensor::zeros(rows.len(), classes);
    for (r, &i) in rows.iter().enumerate() {
        let label = labels[i];
        if label >= classes {
            return Err(TensorError::LabelOutOfRange { label, classes });
        }
        onehot.set(r, label, 1.0);
    }

    let picked_logits = if rows.len() == n {
        logits
    } else {
        tape.gather_rows(logits, &rows)?
    };
    let values = tape.value(picked_logits);
    let maxes: Vec<f64> = (0..rows.len())
        .map(|r| values.row(r).iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let maxes = tape.leaf(Tensor::column(&maxes));

    let shifted = tape.sub(picked_logits, tape.broadcast_cols(maxes, classes)?)?;
    let sum_exp = tape.sum_rows(tape.exp(shifted)?)?;
    let lse = tape.add(tape.ln(sum_exp)?, maxes)?;
    let onehot = tape.leaf(onehot);
    let target = tape.sum_rows(tape.mul(picked_logits, onehot)?)?;
    let per_row = tape.sub(lse, target)?;
    let total = tape.sum_all(per_row)?;
    tape.scale(total, 1.0 / rows.len() as f64)
}

/// Compares the tape gradient of `f` at `x` with central differences.
///
/// Returns the largest per-coordinate relative error, using
/// `max(|analytic|, |numeric|, 1e-8)` as the denominator.
pub fn finite_difference_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64, TensorError>
where
    F: Fn(&Tape, Var) -> Result<Var, TensorError>,
{
    let tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let y = f(&tape, xv)?;
    let g = tape.grad(y, &[xv])?[0];
    let analytic = tape.value(g);

    let eval = |point: Tensor| -> Result<f64, TensorError> {
        let tape = Tape::new();
        let v = tape.leaf(point);
        let y = f(&tape, v)?;
        Ok(tape.value(y).item())
    };

    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * h);
        let a = analytic.data()[i];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}
