//! Undirected node-classification graphs and the operations the simulator
//! needs on them: normalization, partitioning, induced subgraphs and
//! synthetic generation.

mod io;
mod louvain;
mod sbm;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use io::{
    load_graph, load_graph_with_report, parse_graph, read_condensed, write_condensed,
    write_graph, CondensedFile, LoadReport,
};
pub use louvain::{louvain_communities, louvain_partition, modularity, PartitionAssignment};
pub use sbm::{sbm_generate, SbmSpec};

use crate::error::GraphError;
use crate::rng::Rng;
use crate::sparse::CsrMatrix;
use crate::tensor::Tensor;

/// Which evaluation split a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    None,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            "none" => Some(Split::None),
            _ => None,
        }
    }
}

/// Train/validation/test proportions used for stratified splits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
        }
    }
}

/// A node-classification graph.
///
/// Edges are stored once per undirected pair as `(u, v)` with `u < v`,
/// sorted and free of duplicates and self-loops. Each node carries exactly
/// one [`Split`], which makes the masks disjoint by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_classes: usize,
    edges: Vec<(usize, usize)>,
    features: Tensor,
    labels: Vec<usize>,
    splits: Vec<Split>,
}

/// Counts of edges discarded while canonicalizing an edge list.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EdgeCleanup {
    pub self_loops: usize,
    pub duplicates: usize,
}

impl Graph {
    /// Builds a graph, canonicalizing the edge list. Returns the graph and
    /// the number of self-loops and duplicate edges that were dropped.
    pub fn with_cleanup(
        num_classes: usize,
        features: Tensor,
        labels: Vec<usize>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        splits: Vec<Split>,
    ) -> Result<(Self, EdgeCleanup), GraphError> {
        let n = features.rows();
        if labels.len() != n || splits.len() != n {
            return Err(GraphError::Invalid(format!(
                "{} feature rows, {} labels, {} mask entries",
                n,
                labels.len(),
                splits.len()
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(GraphError::Invalid(format!(
                "node {i} has label {y} but only {num_classes} classes"
            )));
        }
        let mut cleanup = EdgeCleanup::default();
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(GraphError::Invalid(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u == v {
                cleanup.self_loops += 1;
                continue;
            }
            if !set.insert((u.min(v), u.max(v))) {
                cleanup.duplicates += 1;
            }
        }
        let graph = Self {
            num_classes,
            edges: set.into_iter().collect(),
            features,
            labels,
            splits,
        };
        Ok((graph, cleanup))
    }

    pub fn new(
        num_classes: usize,
        features: Tensor,
        labels: Vec<usize>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        splits: Vec<Split>,
    ) -> Result<Self, GraphError> {
        Self::with_cleanup(num_classes, features, labels, edges, splits).map(|(g, _)| g)
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    pub fn mask(&self, which: Split) -> Vec<bool> {
        self.splits.iter().map(|&s| s == which).collect()
    }

    pub fn train_mask(&self) -> Vec<bool> {
        self.mask(Split::Train)
    }

    pub fn test_mask(&self) -> Vec<bool> {
        self.mask(Split::Test)
    }

    pub fn count(&self, which: Split) -> usize {
        self.splits.iter().filter(|&&s| s == which).count()
    }

    /// Per-class counts over nodes in `which`.
    pub fn class_histogram(&self, which: Split) -> Vec<usize> {
        let mut hist = vec![0; self.num_classes];
        for (y, s) in self.labels.iter().zip(&self.splits) {
            if *s == which {
                hist[*y] += 1;
            }
        }
        hist
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes()];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    pub fn with_splits(&self, splits: Vec<Split>) -> Result<Self, GraphError> {
        if splits.len() != self.num_nodes() {
            return Err(GraphError::Invalid(format!(
                "{} mask entries for {} nodes",
                splits.len(),
                self.num_nodes()
            )));
        }
        Ok(Self {
            splits,
            ..self.clone()
        })
    }

    /// Redraws the masks with a per-class stratified split.
    pub fn resplit(&self, fractions: SplitFractions, rng: &mut Rng) -> Self {
        let splits = stratified_split(&self.labels, self.num_classes, fractions, rng);
        Self {
            splits,
            ..self.clone()
        }
    }
}

/// Stratified per-class split. Each class is shuffled and cut at
/// `round(train·n)` and `round((train+val)·n)`.
pub fn stratified_split(
    labels: &[usize],
    num_classes: usize,
    fractions: SplitFractions,
    rng: &mut Rng,
) -> Vec<Split> {
    let mut splits = vec![Split::None; labels.len()];
    for c in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(rng);
        let n = members.len() as f64;
        let n_train = (fractions.train * n).round() as usize;
        let n_val_end = (((fractions.train + fractions.val) * n).round() as usize).max(n_train);
        for (rank, &i) in members.iter().enumerate() {
            splits[i] = if rank < n_train {
                Split::Train
            } else if rank < n_val_end {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    splits
}

/// `D^-1/2 (A + I) D^-1/2` as a sparse matrix.
pub fn normalized_adjacency(g: &Graph) -> CsrMatrix {
    let n = g.num_nodes();
    let mut degree = vec![1.0f64; n];
    for &(u, v) in g.edges() {
        degree[u] += 1.0;
        degree[v] += 1.0;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut triplets = Vec::with_capacity(n + 2 * g.num_edges());
    for i in 0..n {
        triplets.push((i, i, inv_sqrt[i] * inv_sqrt[i]));
    }
    for &(u, v) in g.edges() {
        let w = inv_sqrt[u] * inv_sqrt[v];
        triplets.push((u, v, w));
        triplets.push((v, u, w));
    }
    CsrMatrix::from_triplets(n, n, &triplets)
}

/// Induced subgraph on `nodes`, relabelled to `0..len` in ascending order of
/// original id. Edges leaving the set are dropped.
pub fn induce_subgraph(g: &Graph, nodes: &[usize]) -> Result<Graph, GraphError> {
    let keep: BTreeSet<usize> = nodes.iter().copied().collect();
    if keep.is_empty() {
        return Err(GraphError::Invalid("induced subgraph on an empty node set".into()));
    }
    if let Some(&bad) = keep.iter().find(|&&i| i >= g.num_nodes()) {
        return Err(GraphError::Invalid(format!(
            "node {bad} out of range for {} nodes",
            g.num_nodes()
        )));
    }
    let order: Vec<usize> = keep.into_iter().collect();
    let mut new_id = vec![usize::MAX; g.num_nodes()];
    for (k, &i) in order.iter().enumerate() {
        new_id[i] = k;
    }
    let edges: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .filter(|&&(u, v)| new_id[u] != usize::MAX && new_id[v] != usize::MAX)
        .map(|&(u, v)| (new_id[u], new_id[v]))
        .collect();
    Graph::new(
        g.num_classes(),
        g.features().select_rows(&order),
        order.iter().map(|&i| g.labels()[i]).collect(),
        edges,
        order.iter().map(|&i| g.splits()[i]).collect(),
    )
}

/// Subgraph on the training nodes of class `c` and their one-hop
/// neighbours. Only the class-`c` training nodes keep the `Train` split.
pub fn class_neighborhood_subgraph(g: &Graph, c: usize) -> Result<Graph, GraphError> {
    let seeds: Vec<usize> = (0..g.num_nodes())
        .filter(|&i| g.splits()[i] == Split::Train && g.labels()[i] == c)
        .collect();
    if seeds.is_empty() {
        return Err(GraphError::Invalid(format!(
            "class {c} has no training nodes"
        )));
    }
    let mut is_seed = vec![false; g.num_nodes()];
    let mut keep: BTreeSet<usize> = BTreeSet::new();
    for &s in &seeds {
        is_seed[s] = true;
        keep.insert(s);
    }
    for &(u, v) in g.edges() {
        if is_seed[u] {
            keep.insert(v);
        }
        if is_seed[v] {
            keep.insert(u);
        }
    }
    let nodes: Vec<usize> = keep.into_iter().collect();
    let sub = induce_subgraph(g, &nodes)?;
    let splits = nodes
        .iter()
        .map(|&i| if is_seed[i] { Split::Train } else { Split::None })
        .collect();
    sub.with_splits(splits)
}
