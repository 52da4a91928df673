//! Distance between two gradient sets.

use serde::{Deserialize, Serialize};

use super::params::GradientSet;
use crate::autodiff::{Tape, Var};
use crate::error::TensorError;
use crate::tensor::Tensor;

/// Columns whose norm falls below this use the squared-L2 branch.
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceKind {
    /// `Σ_columns (1 − cos)`, squared L2 for near-zero columns.
    #[default]
    Cosine,
    SquaredL2,
}

impl DistanceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DistanceKind::Cosine => "cosine",
            DistanceKind::SquaredL2 => "squared-l2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cosine" => Some(DistanceKind::Cosine),
            "squared-l2" | "l2" => Some(DistanceKind::SquaredL2),
            _ => None,
        }
    }
}

fn column_norms(t: &Tensor) -> Vec<f64> {
    let mut sq = vec![0.0; t.cols()];
    for r in 0..t.rows() {
        for (s, x) in sq.iter_mut().zip(t.row(r)) {
            *s += x * x;
        }
    }
    sq.into_iter().map(f64::sqrt).collect()
}

fn pair_distance(tape: &Tape, a: Var, b: Var, kind: DistanceKind) -> Result<Var, TensorError> {
    let (va, vb) = (tape.value(a), tape.value(b));
    va.check_same_shape(&vb, "gradient_distance")?;
    let diff = tape.sub(a, b)?;
    let sq_diff = tape.sum_cols(tape.mul(diff, diff)?)?;
    if kind == DistanceKind::SquaredL2 {
        return tape.sum_all(sq_diff);
    }

    let cols = va.cols();
    let fallback: Vec<f64> = column_norms(&va)
        .into_iter()
        .zip(column_norms(&vb))
        .map(|(na, nb)| if na < NORM_FLOOR || nb < NORM_FLOOR { 1.0 } else { 0.0 })
        .collect();
    let cosine_mask: Vec<f64> = fallback.iter().map(|f| 1.0 - f).collect();
    let fallback = tape.leaf(Tensor::row_vector(&fallback));
    let cosine_mask = tape.leaf(Tensor::row_vector(&cosine_mask));

    // fallback columns get a unit offset inside the sqrt so the masked-out
    // cosine branch stays finite
    let norm = |v: Var| -> Result<Var, TensorError> {
        let sq = tape.sum_cols(tape.mul(v, v)?)?;
        tape.sqrt(tape.add(sq, fallback)?)
    };
    let dot = tape.sum_cols(tape.mul(a, b)?)?;
    let cos = tape.mul(dot, tape.recip(tape.mul(norm(a)?, norm(b)?)?)?)?;
    let one_minus = tape.add_scalar(tape.neg(cos)?, 1.0)?;
    let per_col = tape.add(
        tape.mul(one_minus, cosine_mask)?,
        tape.mul(sq_diff, fallback)?,
    )?;
    debug_assert_eq!(tape.shape(per_col), [1, cols]);
    tape.sum_all(per_col)
}

/// Sum of per-tensor distances. Each tensor's output columns are compared
/// as vectors. Differentiable with respect to both sides.
pub fn gradient_distance(
    tape: &Tape,
    ga: &[Var],
    gb: &[Var],
    kind: DistanceKind,
) -> Result<Var, TensorError> {
    if ga.len() != gb.len() || ga.is_empty() {
        return Err(TensorError::Length {
            what: "gradient set",
            expected: ga.len(),
            got: gb.len(),
        });
    }
    let mut total: Option<Var> = None;
    for (&a, &b) in ga.iter().zip(gb) {
        let d = pair_distance(tape, a, b, kind)?;
        total = Some(match total {
            None => d,
            Some(t) => tape.add(t, d)?,
        });
    }
    Ok(total.expect("non-empty"))
}

/// Value-only [`gradient_distance`] on two gradient sets.
pub fn gradient_distance_values(
    ga: &GradientSet,
    gb: &GradientSet,
    kind: DistanceKind,
) -> Result<f64, TensorError> {
    ga.check_layout(gb)?;
    let tape = Tape::new();
    let a: Vec<Var> = ga.tensors().iter().map(|t| tape.leaf(t.clone())).collect();
    let b: Vec<Var> = gb.tensors().iter().map(|t| tape.leaf(t.clone())).collect();
    let d = gradient_distance(&tape, &a, &b, kind)?;
    Ok(tape.value(d).item())
}
