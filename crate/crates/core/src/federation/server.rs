use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::client::{client_classwise_gradients, ClientState};
use super::messages::{params_bytes, ClassGradientReport, MessageKind, MessageLog};
use crate::autodiff::{masked_cross_entropy, Tape, Var};
use crate::condense::CondensedGraph;
use crate::error::{Error, Result, TensorError};
use crate::models::{
    gcn_forward, gradient_distance, Adjacency, DistanceKind, GcnParams,
    GcnVars, GradientSet, Propagation,
};
use crate::rng;
use crate::tensor::Tensor;

/// Which per-client class counts weight the aggregated class gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightBy {
    /// Condensed nodes of the class contributed by each client.
    #[default]
    Condensed,
    /// Training nodes of the class reported by each client.
    Real,
}

impl WeightBy {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightBy::Condensed => "condensed",
            WeightBy::Real => "real",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "condensed" => Some(WeightBy::Condensed),
            "real" => Some(WeightBy::Real),
            _ => None,
        }
    }
}

/// The global condensed graph held by the server.
#[derive(Debug, Clone)]
pub struct ServerState {
    pub features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    blocks: Vec<Range<usize>>,
    block_clients: Vec<usize>,
    /// Block-diagonal thresholded adjacency.
    adjacency: Tensor,
    /// Normalized form of `adjacency` with self-loops.
    propagation: Tensor,
    /// `condensed_counts[k][c]`: class-`c` condensed nodes from block `k`.
    condensed_counts: Vec<Vec<usize>>,
    pub round: usize,
    pub theta: Option<GcnParams>,
}

impl ServerState {
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    pub fn block_clients(&self) -> &[usize] {
        &self.block_clients
    }

    pub fn adjacency(&self) -> &Tensor {
        &self.adjacency
    }

    pub fn propagation(&self) -> Propagation {
        Propagation::Dense(self.propagation.clone())
    }

    /// Condensed count of `class` contributed by `client`, 0 if absent.
    pub fn condensed_count(&self, client: usize, class: usize) -> usize {
        self.block_clients
            .iter()
            .position(|&k| k == client)
            .map_or(0, |b| self.condensed_counts[b][class])
    }

    pub fn class_count(&self, class: usize) -> usize {
        self.labels.iter().filter(|&&y| y == class).count()
    }

    /// True when every entry outside the diagonal blocks is zero.
    pub fn is_block_diagonal(&self) -> bool {
        let block_of = |i: usize| self.blocks.iter().position(|b| b.contains(&i));
        let n = self.num_nodes();
        (0..n).all(|i| {
            (0..n).all(|j| {
                block_of(i) == block_of(j)
                    || (self.adjacency.get(i, j) == 0.0 && self.propagation.get(i, j) == 0.0)
            })
        })
    }
}

/// Stacks condensed graphs in client-id order into a block-diagonal
/// global graph, thresholding each generated adjacency at `delta`.
pub fn integrate(condensed: &[CondensedGraph], delta: f64) -> Result<ServerState> {
    let first = condensed
        .first()
        .ok_or_else(|| Error::Protocol("no condensed graphs to integrate".into()))?;
    let (d, classes) = (first.features.cols(), first.num_classes);
    for c in condensed {
        if c.features.cols() != d || c.num_classes != classes {
            return Err(Error::Protocol(format!(
                "client {} has {} features and {} classes, client {} has {d} and {classes}",
                c.client,
                c.features.cols(),
                c.num_classes,
                first.client
            )));
        }
    }
    let mut order: Vec<&CondensedGraph> = condensed.iter().collect();
    order.sort_by_key(|c| c.client);

    let n: usize = order.iter().map(|c| c.num_nodes()).sum();
    let mut adjacency = Tensor::zeros(n, n);
    let mut propagation = Tensor::zeros(n, n);
    let mut blocks = Vec::new();
    let mut start = 0;
    for c in &order {
        let block = c.thresholded_adjacency(delta)?;
        let normalized = crate::models::gcn::normalize_dense_values(&block)?;
        let m = c.num_nodes();
        for i in 0..m {
            for j in 0..m {
                adjacency.set(start + i, start + j, block.get(i, j));
                propagation.set(start + i, start + j, normalized.get(i, j));
            }
        }
        blocks.push(start..start + m);
        start += m;
    }
    let parts: Vec<&Tensor> = order.iter().map(|c| &c.features).collect();
    Ok(ServerState {
        features: Tensor::vstack(&parts)?,
        labels: order.iter().flat_map(|c| c.labels.iter().copied()).collect(),
        num_classes: classes,
        blocks,
        block_clients: order.iter().map(|c| c.client).collect(),
        adjacency,
        propagation,
        condensed_counts: order.iter().map(|c| c.class_histogram()).collect(),
        round: 0,
        theta: None,
    })
}

/// Per-class convex combination of the reported class gradients.
///
/// Entry `c` is `None` when no client reported class `c`.
pub fn aggregate_class_gradients(
    reports: &[ClassGradientReport],
    server: &ServerState,
    weight_by: WeightBy,
) -> Result<Vec<Option<GradientSet>>> {
    let classes = server.num_classes();
    let mut out = Vec::with_capacity(classes);
    for c in 0..classes {
        let contributions: Vec<(usize, &GradientSet)> = reports
            .iter()
            .filter_map(|r| {
                r.get(c).map(|e| {
                    let w = match weight_by {
                        WeightBy::Condensed => server.condensed_count(r.client, c),
                        WeightBy::Real => e.count,
                    };
                    (w, &e.gradient)
                })
            })
            .collect();
        if contributions.is_empty() {
            out.push(None);
            continue;
        }
        let total: usize = contributions.iter().map(|(w, _)| w).sum();
        if total == 0 {
            return Err(Error::Protocol(format!(
                "class {c} was reported but has no condensed nodes"
            )));
        }
        let weighted: Vec<(f64, &GradientSet)> = contributions
            .iter()
            .map(|&(w, g)| (w as f64 / total as f64, g))
            .collect();
        out.push(Some(GradientSet::weighted_sum(&weighted)?));
    }
    Ok(out)
}

/// Class-restricted weight gradients of the global condensed graph, from
/// one forward pass over all of it. Entry `c` is `None` when no condensed
/// node has label `c`. Results stay differentiable with respect to `x`.
pub fn condensed_class_gradients(
    tape: &Tape,
    theta: GcnVars,
    adj: &Adjacency,
    x: Var,
    labels: &[usize],
    classes: usize,
) -> Result<Vec<Option<[Var; 2]>>, TensorError> {
    let logits = gcn_forward(tape, theta, adj, x)?;
    (0..classes)
        .map(|c| {
            let mask: Vec<bool> = labels.iter().map(|&y| y == c).collect();
            if !mask.contains(&true) {
                return Ok(None);
            }
            let loss = masked_cross_entropy(tape, logits, labels, &mask)?;
            let g = tape.grad(loss, &theta.list())?;
            Ok(Some([g[0], g[1]]))
        })
        .collect()
}

/// Value-only gradient for one class of the global condensed graph.
pub fn condensed_class_gradient(
    theta: &GcnParams,
    server: &ServerState,
    class: usize,
) -> Result<Option<GradientSet>> {
    let tape = Tape::new();
    let vars = theta.on(&tape);
    let x = tape.leaf(server.features.clone());
    let adj = server.propagation().on(&tape);
    let grads = condensed_class_gradients(&tape, vars, &adj, x, server.labels(), server.num_classes())?;
    Ok(grads[class].map(|[g1, g2]| {
        GradientSet::from_parts(
            &[crate::models::gcn::W1, crate::models::gcn::W2],
            vec![tape.value(g1).as_ref().clone(), tape.value(g2).as_ref().clone()],
        )
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Config {
    pub rounds: usize,
    pub steps_per_round: usize,
    pub lr_feat: f64,
    pub hidden: usize,
    pub distance: DistanceKind,
    pub weight_by: WeightBy,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Self {
            rounds: 100,
            steps_per_round: 10,
            lr_feat: 1e-2,
            hidden: 256,
            distance: DistanceKind::Cosine,
            weight_by: WeightBy::Condensed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    /// Matching loss before the round's first update.
    pub loss: f64,
    /// Loss before each update, then after the last one.
    pub step_losses: Vec<f64>,
    pub matched_classes: Vec<usize>,
}

fn matching_loss(
    tape: &Tape,
    theta: &GcnParams,
    adj: &Tensor,
    x: Var,
    labels: &[usize],
    targets: &[Option<GradientSet>],
    kind: DistanceKind,
) -> Result<(Var, Vec<usize>), TensorError> {
    let vars = theta.on(tape);
    let a = Adjacency::Dense(tape.leaf(adj.clone()));
    let cond = condensed_class_gradients(tape, vars, &a, x, labels, targets.len())?;
    let mut total: Option<Var> = None;
    let mut matched = Vec::new();
    for (c, (cg, target)) in cond.iter().zip(targets).enumerate() {
        let (Some(cg), Some(target)) = (cg, target) else {
            continue;
        };
        let tv: Vec<Var> = target.tensors().iter().map(|t| tape.leaf(t.clone())).collect();
        let d = gradient_distance(tape, cg, &tv, kind)?;
        total = Some(match total {
            None => d,
            Some(t) => tape.add(t, d)?,
        });
        matched.push(c);
    }
    match total {
        Some(t) => Ok((t, matched)),
        None => Err(TensorError::EmptyMask),
    }
}

/// One round of federated class-wise matching: broadcast fresh weights,
/// collect reports, then take `steps_per_round` descent steps on the
/// condensed features.
pub fn stage2_round(
    server: &mut ServerState,
    clients: &[ClientState],
    round: usize,
    cfg: &Stage2Config,
    seed: u64,
    log: &mut MessageLog,
) -> Result<RoundReport> {
    let d = server.features.cols();
    let mut theta_rng = rng::stream(seed, "stage2-theta", &[round as u64]);
    let theta = GcnParams::init(d, cfg.hidden, server.num_classes(), &mut theta_rng);
    let theta_bytes = params_bytes(theta.to_set().numel());

    use rayon::prelude::*;
    let reports = clients
        .par_iter()
        .map(|c| client_classwise_gradients(&theta, c, round))
        .collect::<Result<Vec<_>>>()?;
    for (c, r) in clients.iter().zip(&reports) {
        log.record(round, MessageKind::ThetaBroadcast, c.id, theta_bytes);
        log.record(round, MessageKind::ClassGradientReport, c.id, r.bytes());
    }
    for class in 0..server.num_classes() {
        let classes_absent = server.class_count(class) == 0
            && reports.iter().any(|r| r.get(class).is_some());
        if classes_absent {
            log::warn!("round {round}: class {class} has no condensed nodes and is skipped");
        }
    }

    let targets = aggregate_class_gradients(&reports, server, cfg.weight_by)?;
    let mut step_losses = Vec::with_capacity(cfg.steps_per_round + 1);
    let mut matched_classes = Vec::new();
    for step in 0..=cfg.steps_per_round {
        let tape = Tape::new();
        let x = tape.leaf(server.features.clone());
        let (loss, matched) = matching_loss(
            &tape,
            &theta,
            &server.propagation,
            x,
            &server.labels,
            &targets,
            cfg.distance,
        )
        .map_err(|e| match e {
            TensorError::EmptyMask => {
                Error::Protocol(format!("round {round}: no class present on both sides"))
            }
            TensorError::NonFinite { .. } => Error::Diverged { epoch: round },
            other => other.into(),
        })?;
        step_losses.push(tape.value(loss).item());
        matched_classes = matched;
        if step == cfg.steps_per_round {
            break;
        }
        let g = tape.grad(loss, &[x])?[0];
        server.features.axpy(-cfg.lr_feat, &tape.value(g))?;
        if !server.features.is_finite() {
            return Err(Error::Diverged { epoch: round });
        }
    }
    server.round = round;
    server.theta = Some(theta);
    Ok(RoundReport {
        round,
        loss: step_losses[0],
        step_losses,
        matched_classes,
    })
}

/// Matching loss as a function of the features on `tape`.
pub fn stage2_loss_on_tape(
    tape: &Tape,
    server: &ServerState,
    theta: &GcnParams,
    targets: &[Option<GradientSet>],
    x: Var,
    kind: DistanceKind,
) -> Result<Var, TensorError> {
    matching_loss(tape, theta, &server.propagation, x, &server.labels, targets, kind).map(|(v, _)| v)
}
