//! Two-layer GCN without biases: `logits = Â · ReLU(Â X W1) · W2`.

use rand::Rng;

use super::params::{GradientSet, ParamSet};
use crate::autodiff::{masked_cross_entropy, SparseOperand, Tape, Var};
use crate::error::TensorError;
use crate::graph::{normalized_adjacency, Graph};
use crate::tensor::Tensor;

pub const W1: &str = "gcn.w1";
pub const W2: &str = "gcn.w2";

/// Uniform Glorot bound `sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    Tensor::uniform(fan_in, fan_out, glorot_bound(fan_in, fan_out), rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub w1: Tensor,
    pub w2: Tensor,
}

impl GcnParams {
    /// A draw from the initialization distribution: Glorot-uniform weights.
    pub fn init<R: Rng + ?Sized>(features: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        Self {
            w1: glorot(features, hidden, rng),
            w2: glorot(hidden, classes, rng),
        }
    }

    pub fn zeros(features: usize, hidden: usize, classes: usize) -> Self {
        Self {
            w1: Tensor::zeros(features, hidden),
            w2: Tensor::zeros(hidden, classes),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w1.cols()
    }

    pub fn to_set(&self) -> ParamSet {
        ParamSet::from_parts(&[W1, W2], vec![self.w1.clone(), self.w2.clone()])
    }

    pub fn from_set(set: &ParamSet) -> Result<Self, TensorError> {
        let template = ParamSet::from_parts(
            &[W1, W2],
            set.tensors().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect(),
        );
        template.check_layout(set)?;
        let [w1, w2]: [Tensor; 2] = set.clone().into_tensors().try_into().expect("two tensors");
        Ok(Self { w1, w2 })
    }

    /// Leaves for both weight matrices on `tape`.
    pub fn on(&self, tape: &Tape) -> GcnVars {
        GcnVars {
            w1: tape.leaf(self.w1.clone()),
            w2: tape.leaf(self.w2.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GcnVars {
    pub w1: Var,
    pub w2: Var,
}

impl GcnVars {
    pub fn list(&self) -> [Var; 2] {
        [self.w1, self.w2]
    }
}

/// A propagation matrix as used inside one tape.
#[derive(Debug, Clone)]
pub enum Adjacency {
    Sparse(SparseOperand),
    Dense(Var),
}

impl Adjacency {
    fn apply(&self, tape: &Tape, h: Var) -> Result<Var, TensorError> {
        match self {
            Adjacency::Sparse(s) => tape.spmm(s, h),
            Adjacency::Dense(a) => tape.matmul(*a, h),
        }
    }

    fn rows(&self, tape: &Tape) -> usize {
        match self {
            Adjacency::Sparse(s) => s.matrix().rows(),
            Adjacency::Dense(a) => tape.shape(*a)[0],
        }
    }
}

/// A constant propagation matrix that can be placed on any tape.
#[derive(Debug, Clone)]
pub enum Propagation {
    Sparse(SparseOperand),
    Dense(Tensor),
}

impl Propagation {
    /// Symmetrically normalized adjacency of a real graph.
    pub fn of_graph(g: &Graph) -> Self {
        Propagation::Sparse(SparseOperand::symmetric(normalized_adjacency(g)))
    }

    pub fn on(&self, tape: &Tape) -> Adjacency {
        match self {
            Propagation::Sparse(s) => Adjacency::Sparse(s.clone()),
            Propagation::Dense(t) => Adjacency::Dense(tape.leaf(t.clone())),
        }
    }

    pub fn to_dense(&self) -> Tensor {
        match self {
            Propagation::Sparse(s) => s.matrix().to_dense(),
            Propagation::Dense(t) => t.clone(),
        }
    }
}

/// `Â · ReLU(Â X W1) · W2`.
pub fn gcn_forward(
    tape: &Tape,
    params: GcnVars,
    adj: &Adjacency,
    x: Var,
) -> Result<Var, TensorError> {
    let [n, d] = tape.shape(x);
    let [d1, h] = tape.shape(params.w1);
    if d != d1 {
        return Err(TensorError::Shape {
            op: "gcn_forward",
            lhs: [n, d],
            rhs: [d1, h],
        });
    }
    let rows = adj.rows(tape);
    if rows != n {
        return Err(TensorError::Shape {
            op: "gcn_forward adjacency",
            lhs: [rows, rows],
            rhs: [n, d],
        });
    }
    // cheaper association first; both orders compute Â X W1
    let pre = if d <= h {
        let ax = adj.apply(tape, x)?;
        tape.matmul(ax, params.w1)?
    } else {
        let xw = tape.matmul(x, params.w1)?;
        adj.apply(tape, xw)?
    };
    let hidden = tape.relu(pre)?;
    let hw = tape.matmul(hidden, params.w2)?;
    adj.apply(tape, hw)
}

/// Gradient of the masked mean cross-entropy with respect to both weight
/// matrices. The result stays on the tape, so it can be differentiated
/// again with respect to `x` or anything `adj` depends on.
pub fn param_gradient(
    tape: &Tape,
    params: GcnVars,
    adj: &Adjacency,
    x: Var,
    labels: &[usize],
    mask: &[bool],
) -> Result<[Var; 2], TensorError> {
    let logits = gcn_forward(tape, params, adj, x)?;
    let loss = masked_cross_entropy(tape, logits, labels, mask)?;
    let g = tape.grad(loss, &params.list())?;
    Ok([g[0], g[1]])
}

/// Value-only version of [`param_gradient`].
pub fn param_gradient_values(
    params: &GcnParams,
    adj: &Propagation,
    x: &Tensor,
    labels: &[usize],
    mask: &[bool],
) -> Result<GradientSet, TensorError> {
    let tape = Tape::new();
    let vars = params.on(&tape);
    let xv = tape.leaf(x.clone());
    let [g1, g2] = param_gradient(&tape, vars, &adj.on(&tape), xv, labels, mask)?;
    Ok(GradientSet::from_parts(
        &[W1, W2],
        vec![tape.value(g1).as_ref().clone(), tape.value(g2).as_ref().clone()],
    ))
}

/// Logits without recording anything the caller needs.
pub fn predict(params: &GcnParams, adj: &Propagation, x: &Tensor) -> Result<Tensor, TensorError> {
    let tape = Tape::new();
    let vars = params.on(&tape);
    let xv = tape.leaf(x.clone());
    let logits = gcn_forward(&tape, vars, &adj.on(&tape), xv)?;
    Ok(tape.value(logits).as_ref().clone())
}

/// Differentiable `D^-1/2 (A + I) D^-1/2` for a dense non-negative `A`.
pub fn normalize_dense(tape: &Tape, a: Var) -> Result<Var, TensorError> {
    let [n, m] = tape.shape(a);
    if n != m {
        return Err(TensorError::Shape {
            op: "normalize_dense",
            lhs: [n, m],
            rhs: [m, n],
        });
    }
    let eye = tape.leaf(Tensor::eye(n));
    let looped = tape.add(a, eye)?;
    let degree = tape.sum_rows(looped)?;
    let inv_sqrt = tape.recip(tape.sqrt(degree)?)?;
    let left = tape.broadcast_cols(inv_sqrt, n)?;
    let right = tape.broadcast_rows(tape.transpose(inv_sqrt)?, n)?;
    tape.mul(tape.mul(looped, left)?, right)
}

/// Value-only [`normalize_dense`].
pub fn normalize_dense_values(a: &Tensor) -> Result<Tensor, TensorError> {
    let tape = Tape::new();
    let v = tape.leaf(a.clone());
    let out = normalize_dense(&tape, v)?;
    Ok(tape.value(out).as_ref().clone())
}

/// Zeroes entries strictly below `delta`.
pub fn threshold(a: &Tensor, delta: f64) -> Tensor {
    a.map(|v| if v < delta { 0.0 } else { v })
}

/// Post-training adjacency: threshold at `delta`, then normalize.
pub fn densify_for_training(a: &Tensor, delta: f64) -> Result<Tensor, TensorError> {
    normalize_dense_values(&threshold(a, delta))
}
