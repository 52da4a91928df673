//! Client-side condensation by one-step gradient matching.
//!
//! Each epoch samples fresh GCN weights, compares the weight gradient
//! produced by the real subgraph with the one produced by the condensed
//! subgraph, and takes one descent step on either the condensed features
//! (odd epochs) or the adjacency generator (even epochs).

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result, TensorError};
use crate::graph::{CondensedFile, Graph, Split};
use crate::models::{
    gradient_distance, mlp_adjacency, mlp_adjacency_values, normalize_dense, param_gradient,
    param_gradient_values, threshold, Adjacency, DistanceKind, GcnParams, GradientSet,
    MlpAdjParams, Propagation,
};
use crate::rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondenseConfig {
    pub ratio: f64,
    pub epochs: usize,
    pub lr_feat: f64,
    pub lr_phi: f64,
    pub hidden: usize,
    pub phi_hidden: usize,
    pub distance: DistanceKind,
    /// Length of the trailing window used for checkpoint selection.
    pub window: usize,
}

impl Default for CondenseConfig {
    fn default() -> Self {
        Self {
            ratio: 0.25,
            epochs: 1000,
            lr_feat: 1e-2,
            lr_phi: 1e-3,
            hidden: 256,
            phi_hidden: 128,
            distance: DistanceKind::Cosine,
            window: 10,
        }
    }
}

/// A client's synthetic subgraph: learnable features, fixed labels and an
/// adjacency generator.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedGraph {
    pub client: usize,
    pub ratio: f64,
    pub num_classes: usize,
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub phi: MlpAdjParams,
}

impl CondensedGraph {
    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.num_classes];
        for &y in &self.labels {
            h[y] += 1;
        }
        h
    }

    /// Dense generated adjacency, entries in (0, 1).
    pub fn adjacency(&self) -> Result<Tensor> {
        Ok(mlp_adjacency_values(&self.phi, &self.features)?)
    }

    /// The generated adjacency with entries below `delta` zeroed.
    pub fn thresholded_adjacency(&self, delta: f64) -> Result<Tensor> {
        Ok(threshold(&self.adjacency()?, delta))
    }

    /// Serializable form with the adjacency thresholded at `delta`.
    pub fn to_file(&self, delta: f64) -> Result<CondensedFile> {
        let a = self.thresholded_adjacency(delta)?;
        let n = self.num_nodes();
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u..n {
                let w = a.get(u, v);
                if w != 0.0 {
                    edges.push((u, v, w));
                }
            }
        }
        Ok(CondensedFile {
            client: self.client,
            ratio: self.ratio,
            num_classes: self.num_classes,
            features: self.features.clone(),
            labels: self.labels.clone(),
            edges,
        })
    }
}

/// Size of the condensed label vector per class.
///
/// `N' = max(round(r · N), present classes)`; quotas `N' · n_c / N` are
/// rounded by largest remainder (ties to the lower class id), then every
/// present class is lifted to one node by taking from the most
/// over-allocated class.
pub fn apportion(histogram: &[usize], ratio: f64) -> Vec<usize> {
    let total: usize = histogram.iter().sum();
    let present = histogram.iter().filter(|&&n| n > 0).count();
    if total == 0 {
        return vec![0; histogram.len()];
    }
    let target = ((ratio * total as f64).round() as usize).max(present);
    let quotas: Vec<f64> = histogram
        .iter()
        .map(|&n| target as f64 * n as f64 / total as f64)
        .collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..histogram.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = alloc.iter().sum();
    for &c in order.iter().take(target - assigned) {
        alloc[c] += 1;
    }
    for c in 0..histogram.len() {
        if histogram[c] > 0 && alloc[c] == 0 {
            let donor = (0..histogram.len())
                .filter(|&k| alloc[k] >= 2)
                .max_by(|&a, &b| {
                    let (sa, sb) = (alloc[a] as f64 - quotas[a], alloc[b] as f64 - quotas[b]);
                    sa.total_cmp(&sb).then(b.cmp(&a))
                })
                .expect("target covers every present class");
            alloc[donor] -= 1;
            alloc[c] = 1;
        }
    }
    alloc
}

/// Labels by apportionment, features sampled from same-class training
/// nodes, generator weights from the initialization distribution.
pub fn init_condensed(
    g: &Graph,
    client: usize,
    cfg: &CondenseConfig,
    seed: u64,
) -> Result<CondensedGraph> {
    if !(cfg.ratio > 0.0 && cfg.ratio <= 1.0) {
        return Err(Error::Config(format!("ratio {} outside (0, 1]", cfg.ratio)));
    }
    let train: Vec<usize> = (0..g.num_nodes())
        .filter(|&i| g.splits()[i] == Split::Train)
        .collect();
    if train.is_empty() {
        return Err(Error::Invalid(format!("client {client} has no training nodes")));
    }
    let alloc = apportion(&g.class_histogram(Split::Train), cfg.ratio);
    let mut r = rng::stream(seed, "condense-init", &[client as u64]);
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (c, &count) in alloc.iter().enumerate() {
        let pool: Vec<usize> = train.iter().copied().filter(|&i| g.labels()[i] == c).collect();
        for _ in 0..count {
            labels.push(c);
            rows.push(pool[rand::Rng::random_range(&mut r, 0..pool.len())]);
        }
    }
    let phi = MlpAdjParams::init(g.num_features(), cfg.phi_hidden, &mut r);
    Ok(CondensedGraph {
        client,
        ratio: cfg.ratio,
        num_classes: g.num_classes(),
        features: g.features().select_rows(&rows),
        labels,
        phi,
    })
}

/// Gradient of the training loss on the real subgraph under `theta`.
pub fn real_gradient(theta: &GcnParams, adj: &Propagation, g: &Graph) -> Result<GradientSet> {
    Ok(param_gradient_values(
        theta,
        adj,
        g.features(),
        g.labels(),
        &g.train_mask(),
    )?)
}

/// `D(∇θ L(condensed), target)` with the condensed side computed through
/// `adj`, which may depend on `x`. `target` is a constant.
pub fn match_loss_with_adjacency(
    tape: &Tape,
    theta: &GcnParams,
    target: &GradientSet,
    adj: &Adjacency,
    x: Var,
    labels: &[usize],
    mask: &[bool],
    kind: DistanceKind,
) -> Result<Var, TensorError> {
    let vars = theta.on(tape);
    let cond = param_gradient(tape, vars, adj, x, labels, mask)?;
    let target: Vec<Var> = target.tensors().iter().map(|t| tape.leaf(t.clone())).collect();
    gradient_distance(tape, &cond, &target, kind)
}

/// Match loss with the adjacency generated from `x` by `phi`; every
/// condensed node is in the loss mask.
pub fn one_step_match_loss(
    tape: &Tape,
    theta: &GcnParams,
    target: &GradientSet,
    x: Var,
    phi: crate::models::MlpAdjVars,
    labels: &[usize],
    kind: DistanceKind,
) -> Result<Var, TensorError> {
    let a = mlp_adjacency(tape, phi, x)?;
    let adj = Adjacency::Dense(normalize_dense(tape, a)?);
    let mask = vec![true; labels.len()];
    match_loss_with_adjacency(tape, theta, target, &adj, x, labels, &mask, kind)
}

#[derive(Debug, Clone)]
pub struct CondenseOutcome {
    pub condensed: CondensedGraph,
    /// Match loss at every epoch, measured before that epoch's update.
    pub losses: Vec<f64>,
    /// Epoch whose pre-update state was returned (0 when `epochs == 0`).
    pub selected_epoch: usize,
}

fn step(t: &mut Tensor, g: &Tensor, lr: f64) {
    for (w, d) in t.data_mut().iter_mut().zip(g.data()) {
        *w -= lr * d;
    }
}

/// Runs `cfg.epochs` alternating epochs and returns the state with the
/// lowest trailing-average loss among the final tenth of the epochs.
pub fn condense_local(
    g: &Graph,
    client: usize,
    cfg: &CondenseConfig,
    seed: u64,
) -> Result<CondenseOutcome> {
    let mut current = init_condensed(g, client, cfg, seed)?;
    let adj = Propagation::of_graph(g);
    let (d, classes) = (g.num_features(), g.num_classes());
    let candidates_from = cfg.epochs - (cfg.epochs / 10).max(1).min(cfg.epochs) + 1;
    let window = cfg.window.max(1);

    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, CondensedGraph)> = None;
    for epoch in 1..=cfg.epochs {
        let mut theta_rng = rng::stream(seed, "condense-theta", &[client as u64, epoch as u64]);
        let theta = GcnParams::init(d, cfg.hidden, classes, &mut theta_rng);
        let target = real_gradient(&theta, &adj, g).map_err(|e| on_epoch(e, epoch))?;

        let tape = Tape::new();
        let x = tape.leaf(current.features.clone());
        let phi = current.phi.on(&tape);
        let computed = one_step_match_loss(
            &tape,
            &theta,
            &target,
            x,
            phi,
            &current.labels,
            cfg.distance,
        )
        .and_then(|loss| {
            let wrt: Vec<Var> = if epoch % 2 == 1 {
                vec![x]
            } else {
                phi.list().to_vec()
            };
            let grads = tape.grad(loss, &wrt)?;
            Ok((tape.value(loss).item(), grads))
        });
        let (loss, grads) = computed.map_err(|e| on_epoch(e.into(), epoch))?;
        losses.push(loss);

        if epoch >= candidates_from {
            let start = losses.len().saturating_sub(window);
            let avg = losses[start..].iter().sum::<f64>() / (losses.len() - start) as f64;
            if best.as_ref().is_none_or(|(b, _, _)| avg < *b) {
                best = Some((avg, epoch, current.clone()));
            }
        }

        if epoch % 2 == 1 {
            step(&mut current.features, &tape.value(grads[0]), cfg.lr_feat);
        } else {
            for (p, gv) in current.phi.tensors_mut().into_iter().zip(&grads) {
                step(p, &tape.value(*gv), cfg.lr_phi);
            }
        }
        if !current.features.is_finite() || current.phi.tensors().iter().any(|t| !t.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
    }
    let (condensed, selected_epoch) = match best {
        Some((_, e, c)) => (c, e),
        None => (current, 0),
    };
    Ok(CondenseOutcome {
        condensed,
        losses,
        selected_epoch,
    })
}

fn on_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Tensor(TensorError::NonFinite { .. }) => Error::Diverged { epoch },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::finite_difference_check;
    use crate::graph::{induce_subgraph, sbm_generate, SbmSpec};
    use crate::models::{densify_for_training, evaluate_accuracy, train_gcn, TrainConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn labelled(labels: &[usize], classes: usize) -> Graph {
        let n = labels.len();
        let features = Tensor::new(n, 2, (0..2 * n).map(|i| i as f64).collect()).unwrap();
        Graph::new(classes, features, labels.to_vec(), [], vec![Split::Train; n]).unwrap()
    }

    fn cfg(ratio: f64) -> CondenseConfig {
        CondenseConfig {
            ratio,
            hidden: 8,
            phi_hidden: 8,
            ..CondenseConfig::default()
        }
    }

    #[test]
    fn apportionment_examples() {
        assert_eq!(apportion(&[3, 1], 0.5), vec![1, 1]);
        assert_eq!(apportion(&[5, 1, 1, 1], 1.0), vec![5, 1, 1, 1]);
        assert_eq!(apportion(&[0, 30], 0.1), vec![0, 3]);
        assert_eq!(apportion(&[100, 1, 1], 0.01), vec![1, 1, 1]);
        assert_eq!(apportion(&[0, 0], 0.5), vec![0, 0]);
    }

    #[test]
    fn init_follows_training_histogram() {
        let g = labelled(&[0, 0, 0, 1], 2);
        let c = init_condensed(&g, 0, &cfg(0.5), 1).unwrap();
        assert_eq!(c.labels, vec![0, 1]);
        let c = init_condensed(&g, 0, &cfg(1.0), 1).unwrap();
        assert_eq!(c.class_histogram(), vec![3, 1]);
        let single = labelled(&[1; 30], 2);
        let c = init_condensed(&single, 0, &cfg(0.1), 1).unwrap();
        assert_eq!(c.labels, vec![1, 1, 1]);
    }

    #[test]
    fn init_samples_same_class_features() {
        let g = labelled(&[0, 1, 0, 1, 1], 2);
        let c = init_condensed(&g, 0, &cfg(1.0), 3).unwrap();
        for (r, &y) in c.labels.iter().enumerate() {
            let found = (0..5).any(|i| g.labels()[i] == y && g.features().row(i) == c.features.row(r));
            assert!(found);
        }
    }

    #[test]
    fn init_rejects_missing_training_nodes() {
        let g = labelled(&[0, 1], 2).with_splits(vec![Split::Test; 2]).unwrap();
        assert!(init_condensed(&g, 0, &cfg(0.5), 0).is_err());
        assert!(init_condensed(&labelled(&[0], 1), 0, &cfg(0.0), 0).is_err());
    }

    #[test]
    fn condensing_onto_itself_gives_zero_loss() {
        let g = sbm_generate(&SbmSpec::tiny_fixture(), 1).unwrap();
        let theta = GcnParams::init(8, 6, 3, &mut ChaCha8Rng::seed_from_u64(2));
        let adj = Propagation::of_graph(&g);
        let target = real_gradient(&theta, &adj, &g).unwrap();
        for c in [1.0, 3.5] {
            let scaled = g.features().map(|v| v * c);
            let target = if c == 1.0 {
                target.clone()
            } else {
                param_gradient_values(&theta, &adj, &scaled, g.labels(), &g.train_mask()).unwrap()
            };
            let tape = Tape::new();
            let x = tape.leaf(scaled);
            let loss = match_loss_with_adjacency(
                &tape,
                &theta,
                &target,
                &adj.on(&tape),
                x,
                g.labels(),
                &g.train_mask(),
                DistanceKind::Cosine,
            )
            .unwrap();
            assert!(tape.value(loss).item().abs() < 1e-12);
        }
    }

    fn tiny_instance() -> (Graph, CondensedGraph, GcnParams) {
        let spec = SbmSpec {
            block_sizes: vec![4, 4],
            intra_p: 0.8,
            inter_p: 0.1,
            num_classes: 2,
            classes_per_block: 2,
            feature_dim: 5,
            ..SbmSpec::tiny_fixture()
        };
        let g = sbm_generate(&spec, 4).unwrap();
        let g = g.with_splits(vec![Split::Train; 8]).unwrap();
        let cfg = CondenseConfig {
            ratio: 3.0 / 8.0,
            hidden: 4,
            phi_hidden: 6,
            ..CondenseConfig::default()
        };
        let c = init_condensed(&g, 0, &cfg, 5).unwrap();
        let theta = GcnParams::init(5, 4, 2, &mut ChaCha8Rng::seed_from_u64(6));
        (g, c, theta)
    }

    #[test]
    fn second_order_gradient_matches_finite_differences() {
        let (g, c, theta) = tiny_instance();
        assert_eq!(c.num_nodes(), 3);
        let target = real_gradient(&theta, &Propagation::of_graph(&g), &g).unwrap();
        let err = finite_difference_check(
            |t, x| one_step_match_loss(t, &theta, &target, x, c.phi.on(t), &c.labels, DistanceKind::Cosine),
            &c.features,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn generator_gradient_matches_finite_differences() {
        let (g, mut c, theta) = tiny_instance();
        let mut r = ChaCha8Rng::seed_from_u64(7);
        for b in [&mut c.phi.b1, &mut c.phi.b2, &mut c.phi.b3] {
            *b = Tensor::uniform(b.rows(), b.cols(), 0.1, &mut r);
        }
        let target = real_gradient(&theta, &Propagation::of_graph(&g), &g).unwrap();
        for (i, tensor) in c.phi.tensors().into_iter().enumerate() {
            let err = finite_difference_check(
                |t, v| {
                    let mut phi = c.phi.on(t);
                    *[&mut phi.w1, &mut phi.b1, &mut phi.w2, &mut phi.b2, &mut phi.w3, &mut phi.b3][i] = v;
                    let x = t.leaf(c.features.clone());
                    one_step_match_loss(t, &theta, &target, x, phi, &c.labels, DistanceKind::Cosine)
                },
                tensor,
                1e-6,
            )
            .unwrap();
            assert!(err < 1e-4, "tensor {i}: {err}");
        }
    }

    #[test]
    fn loss_is_nonnegative() {
        let (g, c, _) = tiny_instance();
        for s in 0..5 {
            let theta = GcnParams::init(5, 4, 2, &mut ChaCha8Rng::seed_from_u64(s));
            let target = real_gradient(&theta, &Propagation::of_graph(&g), &g).unwrap();
            let tape = Tape::new();
            let x = tape.leaf(c.features.clone());
            let l = one_step_match_loss(&tape, &theta, &target, x, c.phi.on(&tape), &c.labels, DistanceKind::Cosine)
                .unwrap();
            assert!(tape.value(l).item() >= 0.0);
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let g = sbm_generate(&SbmSpec::tiny_fixture(), 2).unwrap();
        let cfg = CondenseConfig {
            epochs: 0,
            ..cfg(0.25)
        };
        let out = condense_local(&g, 3, &cfg, 9).unwrap();
        assert_eq!(out.condensed, init_condensed(&g, 3, &cfg, 9).unwrap());
        assert!(out.losses.is_empty());
    }

    #[test]
    fn condensation_is_deterministic_and_keeps_labels() {
        let g = sbm_generate(&SbmSpec::tiny_fixture(), 2).unwrap();
        let cfg = CondenseConfig {
            epochs: 20,
            ..cfg(0.25)
        };
        let a = condense_local(&g, 1, &cfg, 4).unwrap();
        let b = condense_local(&g, 1, &cfg, 4).unwrap();
        assert_eq!(a.condensed, b.condensed);
        assert_eq!(a.losses, b.losses);
        let init = init_condensed(&g, 1, &cfg, 4).unwrap();
        assert_eq!(a.condensed.labels, init.labels);
        assert!(a.selected_epoch >= 19);
    }

    #[test]
    fn file_export_thresholds_upper_triangle() {
        let (_, c, _) = tiny_instance();
        let a = c.adjacency().unwrap();
        let file = c.to_file(0.5).unwrap();
        for &(u, v, w) in &file.edges {
            assert!(u <= v && w >= 0.5 && w == a.get(u, v));
        }
        let kept = (0..3).flat_map(|u| (u..3).map(move |v| (u, v))).filter(|&(u, v)| a.get(u, v) >= 0.5).count();
        assert_eq!(kept, file.edges.len());
    }

    #[test]
    fn condensation_reduces_loss_and_keeps_accuracy() {
        let g = sbm_generate(&SbmSpec::default_fixture(), 0).unwrap();
        let nodes: Vec<usize> = (0..120).collect();
        let sub = induce_subgraph(&g, &nodes).unwrap();
        let cfg = CondenseConfig {
            epochs: 200,
            hidden: 64,
            ..CondenseConfig::default()
        };
        let out = condense_local(&sub, 0, &cfg, 1).unwrap();
        let head: f64 = out.losses[..20].iter().sum::<f64>() / 20.0;
        let tail: f64 = out.losses[180..].iter().sum::<f64>() / 20.0;
        assert!(tail < head, "{head} -> {tail}");

        let c = &out.condensed;
        let prop = Propagation::Dense(densify_for_training(&c.adjacency().unwrap(), 0.5).unwrap());
        let init = GcnParams::init(32, 64, 5, &mut ChaCha8Rng::seed_from_u64(3));
        let trained = train_gcn(init, &prop, &c.features, &c.labels, &vec![true; c.num_nodes()], &TrainConfig::default())
            .unwrap();
        let acc = evaluate_accuracy(&trained.params, &Propagation::of_graph(&sub), sub.features(), sub.labels(), &sub.test_mask())
            .unwrap()
            .unwrap();
        assert!(acc > 0.3, "{acc}");
    }
}
