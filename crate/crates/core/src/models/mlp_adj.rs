//! Symmetric pairwise MLP that produces a dense condensed adjacency.

use rand::Rng;

use super::gcn::glorot;
use super::params::ParamSet;
use crate::autodiff::{Tape, Var};
use crate::error::TensorError;
use crate::tensor::Tensor;

const NAMES: [&str; 6] = ["phi.w1", "phi.b1", "phi.w2", "phi.b2", "phi.w3", "phi.b3"];

/// Three affine layers `2d → h → h → 1` with ReLU between them.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpAdjParams {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub w3: Tensor,
    pub b3: Tensor,
}

impl MlpAdjParams {
    pub fn init<R: Rng + ?Sized>(features: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w1: glorot(2 * features, hidden, rng),
            b1: Tensor::zeros(1, hidden),
            w2: glorot(hidden, hidden, rng),
            b2: Tensor::zeros(1, hidden),
            w3: glorot(hidden, 1, rng),
            b3: Tensor::zeros(1, 1),
        }
    }

    pub fn zeros(features: usize, hidden: usize) -> Self {
        Self {
            w1: Tensor::zeros(2 * features, hidden),
            b1: Tensor::zeros(1, hidden),
            w2: Tensor::zeros(hidden, hidden),
            b2: Tensor::zeros(1, hidden),
            w3: Tensor::zeros(hidden, 1),
            b3: Tensor::zeros(1, 1),
        }
    }

    pub fn features(&self) -> usize {
        self.w1.rows() / 2
    }

    pub fn tensors(&self) -> [&Tensor; 6] {
        [&self.w1, &self.b1, &self.w2, &self.b2, &self.w3, &self.b3]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 6] {
        [
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }

    pub fn to_set(&self) -> ParamSet {
        ParamSet::from_parts(&NAMES, self.tensors().into_iter().cloned().collect())
    }

    pub fn on(&self, tape: &Tape) -> MlpAdjVars {
        let [w1, b1, w2, b2, w3, b3] = self.tensors().map(|t| tape.leaf(t.clone()));
        MlpAdjVars {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MlpAdjVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub w3: Var,
    pub b3: Var,
}

impl MlpAdjVars {
    pub fn list(&self) -> [Var; 6] {
        [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]
    }
}

fn affine(tape: &Tape, h: Var, w: Var, b: Var) -> Result<Var, TensorError> {
    let hw = tape.matmul(h, w)?;
    let rows = tape.shape(hw)[0];
    tape.add(hw, tape.broadcast_rows(b, rows)?)
}

/// `A'_ij = σ((MLP([x_i; x_j]) + MLP([x_j; x_i])) / 2)` for all pairs,
/// diagonal included.
pub fn mlp_adjacency(tape: &Tape, phi: MlpAdjVars, x: Var) -> Result<Var, TensorError> {
    let [n, d] = tape.shape(x);
    let [two_d, hidden] = tape.shape(phi.w1);
    if two_d != 2 * d {
        return Err(TensorError::Shape {
            op: "mlp_adjacency",
            lhs: [n, d],
            rhs: [two_d, hidden],
        });
    }
    // [x_i; x_j] W1 = x_i W1[..d] + x_j W1[d..]
    let top: Vec<usize> = (0..d).collect();
    let bottom: Vec<usize> = (d..2 * d).collect();
    let left = tape.matmul(x, tape.gather_rows(phi.w1, &top)?)?;
    let right = tape.matmul(x, tape.gather_rows(phi.w1, &bottom)?)?;
    let first: Vec<usize> = (0..n * n).map(|p| p / n).collect();
    let second: Vec<usize> = (0..n * n).map(|p| p % n).collect();
    let pre = tape.add(
        tape.gather_rows(left, &first)?,
        tape.gather_rows(right, &second)?,
    )?;
    let pre = tape.add(pre, tape.broadcast_rows(phi.b1, n * n)?)?;
    let h1 = tape.relu(pre)?;
    let h2 = tape.relu(affine(tape, h1, phi.w2, phi.b2)?)?;
    let out = affine(tape, h2, phi.w3, phi.b3)?;
    let o = tape.reshape(out, n, n)?;
    let sym = tape.scale(tape.add(o, tape.transpose(o)?)?, 0.5)?;
    tape.sigmoid(sym)
}

/// Value-only [`mlp_adjacency`].
pub fn mlp_adjacency_values(phi: &MlpAdjParams, x: &Tensor) -> Result<Tensor, TensorError> {
    let tape = Tape::new();
    let vars = phi.on(&tape);
    let xv = tape.leaf(x.clone());
    let a = mlp_adjacency(&tape, vars, xv)?;
    Ok(tape.value(a).as_ref().clone())
}
