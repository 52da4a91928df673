use serde::{Deserialize, Serialize};

use crate::error::TensorError;
use crate::tensor::Tensor;

/// An ordered list of named tensors: model parameters or their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

pub type ParamSet = TensorSet;
pub type GradientSet = TensorSet;

/// Names and shapes of a [`TensorSet`], in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout(pub Vec<(String, [usize; 2])>);

impl TensorSet {
    pub fn new(entries: Vec<(String, Tensor)>) -> Self {
        let (names, tensors) = entries.into_iter().unzip();
        Self { names, tensors }
    }

    pub fn from_parts(names: &[&str], tensors: Vec<Tensor>) -> Self {
        assert_eq!(names.len(), tensors.len());
        Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            tensors,
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn into_tensors(self) -> Vec<Tensor> {
        self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn layout(&self) -> Layout {
        Layout(
            self.names
                .iter()
                .cloned()
                .zip(self.tensors.iter().map(Tensor::shape))
                .collect(),
        )
    }

    /// Total number of scalar entries.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn check_layout(&self, other: &TensorSet) -> Result<(), TensorError> {
        if self.names != other.names || self.len() != other.len() {
            return Err(TensorError::Length {
                what: "tensor set layout",
                expected: self.len(),
                got: other.len(),
            });
        }
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            a.check_same_shape(b, "tensor set layout")?;
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.rows(), t.cols()))
                .collect(),
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &TensorSet) -> Result<(), TensorError> {
        self.check_layout(other)?;
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.axpy(alpha, b)?;
        }
        Ok(())
    }

    /// `Σ wᵢ · setᵢ`, accumulated in input order.
    pub fn weighted_sum(items: &[(f64, &TensorSet)]) -> Result<TensorSet, TensorError> {
        let (_, first) = items.first().ok_or(TensorError::Length {
            what: "weighted sum inputs",
            expected: 1,
            got: 0,
        })?;
        let mut out = first.zeros_like();
        for (w, set) in items {
            out.axpy(*w, set)?;
        }
        Ok(out)
    }

    pub fn norm(&self) -> f64 {
        self.tensors.iter().map(Tensor::norm_sq).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &TensorSet) -> f64 {
        self.tensors
            .iter()
            .zip(&other.tensors)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }
}
