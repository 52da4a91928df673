//! Louvain modularity optimization with an exact-K post-processing step.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::Graph;
use crate::error::GraphError;
use crate::rng::{self, Rng};

/// Node-to-client assignment with exactly `num_clients` non-empty clients.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionAssignment {
    pub client_of: Vec<usize>,
    pub num_clients: usize,
}

impl PartitionAssignment {
    /// Node ids of each client, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clients];
        for (node, &c) in self.client_of.iter().enumerate() {
            out[c].push(node);
        }
        out
    }
}

/// Weighted undirected graph; a self-loop `(i, i, w)` is stored once.
struct WeightedGraph {
    adj: Vec<Vec<(usize, f64)>>,
    degree: Vec<f64>,
    total: f64,
}

impl WeightedGraph {
    fn from_graph(g: &Graph) -> Self {
        let mut adj = vec![Vec::new(); g.num_nodes()];
        for &(u, v) in g.edges() {
            adj[u].push((v, 1.0));
            adj[v].push((u, 1.0));
        }
        Self::from_adj(adj)
    }

    fn from_adj(adj: Vec<Vec<(usize, f64)>>) -> Self {
        let degree: Vec<f64> = adj.iter().map(|row| row.iter().map(|e| e.1).sum()).collect();
        let total = degree.iter().sum();
        Self { adj, degree, total }
    }

    fn len(&self) -> usize {
        self.adj.len()
    }

    fn modularity(&self, community: &[usize]) -> f64 {
        if self.total == 0.0 {
            return 0.0;
        }
        let k = community.iter().max().map_or(0, |m| m + 1);
        let mut inside = vec![0.0; k];
        let mut tot = vec![0.0; k];
        for i in 0..self.len() {
            tot[community[i]] += self.degree[i];
            for &(j, w) in &self.adj[i] {
                if community[i] == community[j] {
                    inside[community[i]] += w;
                }
            }
        }
        inside
            .iter()
            .zip(&tot)
            .map(|(a, t)| a / self.total - (t / self.total).powi(2))
            .sum()
    }

    /// One round of local moving. Returns the community of each node and
    /// whether anything moved.
    fn local_moving(&self, rng: &mut Rng, trace: &mut Vec<f64>) -> (Vec<usize>, bool) {
        let n = self.len();
        let mut community: Vec<usize> = (0..n).collect();
        let mut tot: Vec<f64> = self.degree.clone();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut moved_any = false;
        let mut weight_to: Vec<f64> = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut q = self.modularity(&community);
        trace.push(q);
        loop {
            let mut moved = false;
            for &i in &order {
                let ki = self.degree[i];
                let current = community[i];
                for &(j, w) in &self.adj[i] {
                    if j == i {
                        continue;
                    }
                    let c = community[j];
                    if weight_to[c] == 0.0 {
                        touched.push(c);
                    }
                    weight_to[c] += w;
                }
                tot[current] -= ki;
                let score = |c: usize, w: f64| w - tot[c] * ki / self.total;
                let mut best = current;
                let mut best_score = score(current, weight_to[current]);
                for &c in &touched {
                    let s = score(c, weight_to[c]);
                    if s > best_score + 1e-12
                        || ((s - best_score).abs() <= 1e-12 && best != current && c < best)
                    {
                        best = c;
                        best_score = s;
                    }
                }
                tot[best] += ki;
                if best != current {
                    community[i] = best;
                    moved = true;
                    moved_any = true;
                }
                for &c in &touched {
                    weight_to[c] = 0.0;
                }
                weight_to[current] = 0.0;
                touched.clear();
            }
            let next_q = self.modularity(&community);
            assert!(
                next_q >= q - 1e-10,
                "modularity decreased during local moving: {q} -> {next_q}"
            );
            trace.push(next_q);
            q = next_q;
            if !moved {
                break;
            }
        }
        (relabel(&community), moved_any)
    }

    fn aggregate(&self, community: &[usize]) -> Self {
        let k = community.iter().max().map_or(0, |m| m + 1);
        let mut rows: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); k];
        for i in 0..self.len() {
            for &(j, w) in &self.adj[i] {
                *rows[community[i]].entry(community[j]).or_insert(0.0) += w;
            }
        }
        Self::from_adj(rows.into_iter().map(|r| r.into_iter().collect()).collect())
    }
}

/// Renumbers communities to `0..k` in order of first appearance.
fn relabel(community: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    let mut out = Vec::with_capacity(community.len());
    for &c in community {
        let next = map.len();
        out.push(*map.entry(c).or_insert(next));
    }
    out
}

/// Modularity (resolution 1) of a node partition of `g`.
pub fn modularity(g: &Graph, community: &[usize]) -> f64 {
    WeightedGraph::from_graph(g).modularity(community)
}

/// Runs Louvain to convergence. Returns node communities (relabelled to
/// `0..k` by first appearance) and the modularity after every local-moving
/// pass.
pub fn louvain_communities(g: &Graph, seed: u64) -> (Vec<usize>, Vec<f64>) {
    let mut rng = rng::stream(seed, "louvain", &[]);
    let mut level = WeightedGraph::from_graph(g);
    let mut node_comm: Vec<usize> = (0..g.num_nodes()).collect();
    let mut trace = Vec::new();
    loop {
        let (comm, moved) = level.local_moving(&mut rng, &mut trace);
        if !moved {
            break;
        }
        for c in node_comm.iter_mut() {
            *c = comm[*c];
        }
        level = level.aggregate(&comm);
    }
    (relabel(&node_comm), trace)
}

/// Louvain partitioning coerced to exactly `k` clients.
///
/// While there are too many communities, the smallest one (lowest id on
/// ties) is merged into the neighbour it shares the most edges with (ties:
/// smaller combined size, then lower id). While there are too few, the
/// largest community is split in two by a seeded random balanced bisection.
pub fn louvain_partition(g: &Graph, k: usize, seed: u64) -> Result<PartitionAssignment, GraphError> {
    if k == 0 {
        return Err(GraphError::Invalid("client count must be at least 1".into()));
    }
    if k > g.num_nodes() {
        return Err(GraphError::Invalid(format!(
            "cannot partition {} nodes into {k} clients",
            g.num_nodes()
        )));
    }
    let (communities, _) = louvain_communities(g, seed);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (node, &c) in communities.iter().enumerate() {
        if c >= groups.len() {
            groups.resize(c + 1, Vec::new());
        }
        groups[c].push(node);
    }

    while groups.len() > k {
        let mut owner = vec![0usize; g.num_nodes()];
        for (gi, members) in groups.iter().enumerate() {
            for &v in members {
                owner[v] = gi;
            }
        }
        let smallest = (0..groups.len())
            .min_by_key(|&i| (groups[i].len(), i))
            .unwrap();
        let mut links = vec![0usize; groups.len()];
        for &(u, v) in g.edges() {
            let (a, b) = (owner[u], owner[v]);
            if a == smallest && b != smallest {
                links[b] += 1;
            } else if b == smallest && a != smallest {
                links[a] += 1;
            }
        }
        let partner = (0..groups.len())
            .filter(|&i| i != smallest)
            .min_by(|&a, &b| {
                links[b]
                    .cmp(&links[a])
                    .then(groups[a].len().cmp(&groups[b].len()))
                    .then(a.cmp(&b))
            })
            .unwrap();
        let moved = std::mem::take(&mut groups[smallest]);
        groups[partner].extend(moved);
        groups[partner].sort_unstable();
        groups.remove(smallest);
    }

    let mut split_rng = rng::stream(seed, "louvain-split", &[]);
    while groups.len() < k {
        let largest = (0..groups.len())
            .max_by(|&a, &b| groups[a].len().cmp(&groups[b].len()).then(b.cmp(&a)))
            .unwrap();
        let mut members = std::mem::take(&mut groups[largest]);
        members.shuffle(&mut split_rng);
        let half = members.len() / 2;
        let mut second = members.split_off(half);
        members.sort_unstable();
        second.sort_unstable();
        groups[largest] = members;
        groups.push(second);
    }

    // client ids ordered by each client's lowest node id
    groups.sort_by_key(|m| m[0]);
    let mut client_of = vec![0; g.num_nodes()];
    for (c, members) in groups.iter().enumerate() {
        for &v in members {
            client_of[v] = c;
        }
    }
    Ok(PartitionAssignment {
        client_of,
        num_clients: k,
    })
}
