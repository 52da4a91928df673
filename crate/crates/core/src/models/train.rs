//! Full-batch GCN training and evaluation.

use serde::{Deserialize, Serialize};

use super::gcn::{gcn_forward, predict, GcnParams, Propagation};
use crate::autodiff::{masked_cross_entropy, Tape};
use crate::error::{Error, Result, TensorError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sgd" => Some(OptimizerKind::Sgd),
            "adam" => Some(OptimizerKind::Adam),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 1e-2,
            weight_decay: 5e-4,
            optimizer: OptimizerKind::Adam,
        }
    }
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

/// Optimizer state for a fixed list of tensors. Weight decay is added to
/// the gradient before the update.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    step: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64) -> Self {
        Self {
            kind,
            lr,
            weight_decay,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    pub fn update(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) {
        assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Tensor::zeros(g.rows(), g.cols())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let (bc1, bc2) = (1.0 - BETA1.powi(self.step), 1.0 - BETA2.powi(self.step));
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let it = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((w, &gi), (mi, vi)) in it {
                let gi = gi + self.weight_decay * *w;
                match self.kind {
                    OptimizerKind::Sgd => *w -= self.lr * gi,
                    OptimizerKind::Adam => {
                        *mi = BETA1 * *mi + (1.0 - BETA1) * gi;
                        *vi = BETA2 * *vi + (1.0 - BETA2) * gi * gi;
                        *w -= self.lr * (*mi / bc1) / ((*vi / bc2).sqrt() + EPS);
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: GcnParams,
    /// Training loss before each update.
    pub losses: Vec<f64>,
}

fn diverged(epoch: usize) -> impl Fn(TensorError) -> Error {
    move |e| match e {
        TensorError::NonFinite { .. } => Error::Diverged { epoch },
        other => other.into(),
    }
}

/// Continues training `params` in place for `epochs` updates with an
/// existing optimizer state.
pub fn train_steps(
    params: &mut GcnParams,
    optimizer: &mut Optimizer,
    adj: &Propagation,
    x: &Tensor,
    labels: &[usize],
    mask: &[bool],
    epochs: usize,
) -> Result<Vec<f64>> {
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let tape = Tape::new();
        let vars = params.on(&tape);
        let xv = tape.leaf(x.clone());
        let step = || -> std::result::Result<_, TensorError> {
            let logits = gcn_forward(&tape, vars, &adj.on(&tape), xv)?;
            let loss = masked_cross_entropy(&tape, logits, labels, mask)?;
            let g = tape.grad(loss, &vars.list())?;
            Ok((tape.value(loss).item(), tape.value(g[0]), tape.value(g[1])))
        };
        let (loss, g1, g2) = step().map_err(diverged(epoch))?;
        losses.push(loss);
        optimizer.update(&mut [&mut params.w1, &mut params.w2], &[&g1, &g2]);
        if !params.w1.is_finite() || !params.w2.is_finite() {
            return Err(Error::Diverged { epoch });
        }
    }
    Ok(losses)
}

/// Trains from `init` with a fresh optimizer.
pub fn train_gcn(
    init: GcnParams,
    adj: &Propagation,
    x: &Tensor,
    labels: &[usize],
    mask: &[bool],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut params = init;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, cfg.weight_decay);
    let losses = train_steps(&mut params, &mut opt, adj, x, labels, mask, cfg.epochs)?;
    Ok(TrainOutcome { params, losses })
}

/// Fraction of masked nodes whose argmax logit equals the label; `None`
/// when the mask is empty.
pub fn evaluate_accuracy(
    params: &GcnParams,
    adj: &Propagation,
    x: &Tensor,
    labels: &[usize],
    mask: &[bool],
) -> Result<Option<f64>> {
    let total = mask.iter().filter(|&&m| m).count();
    if total == 0 {
        return Ok(None);
    }
    let pred = predict(params, adj, x)?.argmax_rows();
    let hits = (0..labels.len())
        .filter(|&i| mask[i] && pred[i] == labels[i])
        .count();
    Ok(Some(hits as f64 / total as f64))
}
