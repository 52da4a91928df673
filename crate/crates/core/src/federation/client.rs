use serde::Serialize;

use super::messages::{ClassGradient, ClassGradientReport};
use crate::error::Result;
use crate::graph::{class_neighborhood_subgraph, induce_subgraph, Graph, PartitionAssignment, Split};
use crate::models::{evaluate_accuracy, param_gradient_values, GcnParams, Propagation};

/// A client's private subgraph and its normalized adjacency.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    graph: Graph,
    adj: Propagation,
}

impl ClientState {
    pub fn new(id: usize, graph: Graph) -> Self {
        let adj = Propagation::of_graph(&graph);
        Self { id, graph, adj }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn propagation(&self) -> &Propagation {
        &self.adj
    }

    pub fn train_count(&self) -> usize {
        self.graph.count(Split::Train)
    }

    pub fn test_count(&self) -> usize {
        self.graph.count(Split::Test)
    }

    pub fn test_accuracy(&self, params: &GcnParams) -> Result<Option<f64>> {
        evaluate_accuracy(
            params,
            &self.adj,
            self.graph.features(),
            self.graph.labels(),
            &self.graph.test_mask(),
        )
    }
}

/// One client per part, holding the induced subgraph.
pub fn build_clients(g: &Graph, partition: &PartitionAssignment) -> Result<Vec<ClientState>> {
    partition
        .members()
        .iter()
        .enumerate()
        .map(|(k, nodes)| Ok(ClientState::new(k, induce_subgraph(g, nodes)?)))
        .collect()
}

/// Per-class gradients under `theta`, each computed on the class's
/// one-hop neighbourhood subgraph with the loss on that class's training
/// nodes. Classes without training nodes are omitted.
pub fn client_classwise_gradients(
    theta: &GcnParams,
    client: &ClientState,
    round: usize,
) -> Result<ClassGradientReport> {
    let g = client.graph();
    let hist = g.class_histogram(Split::Train);
    let mut entries = Vec::new();
    for (class, &count) in hist.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let sub = class_neighborhood_subgraph(g, class)?;
        let gradient = param_gradient_values(
            theta,
            &Propagation::of_graph(&sub),
            sub.features(),
            sub.labels(),
            &sub.train_mask(),
        )?;
        entries.push(ClassGradient {
            class,
            count,
            gradient,
        });
    }
    Ok(ClassGradientReport {
        client: client.id,
        round,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientAccuracy {
    pub client: usize,
    pub test_nodes: usize,
    /// `None` when the client has no test nodes.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub clients: Vec<ClientAccuracy>,
    /// Test-node weighted mean over clients with test nodes.
    pub overall: Option<f64>,
}

impl Evaluation {
    pub fn from_clients(clients: Vec<ClientAccuracy>) -> Self {
        let (hits, total) = clients
            .iter()
            .filter_map(|c| c.accuracy.map(|a| (a * c.test_nodes as f64, c.test_nodes)))
            .fold((0.0, 0), |(h, t), (a, n)| (h + a, t + n));
        let overall = (total > 0).then(|| hits / total as f64);
        Self { clients, overall }
    }

    /// Clients excluded from the overall mean.
    pub fn flagged(&self) -> Vec<usize> {
        self.clients
            .iter()
            .filter(|c| c.accuracy.is_none())
            .map(|c| c.client)
            .collect()
    }
}

/// Test accuracy of one global model on every client.
pub fn evaluate_federation(params: &GcnParams, clients: &[ClientState]) -> Result<Evaluation> {
    let per_client = clients
        .iter()
        .map(|c| {
            Ok(ClientAccuracy {
                client: c.id,
                test_nodes: c.test_count(),
                accuracy: c.test_accuracy(params)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if per_client.iter().any(|c| c.accuracy.is_none()) {
        log::warn!("clients without test nodes excluded from the overall accuracy");
    }
    Ok(Evaluation::from_clients(per_client))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{sbm_generate, SbmSpec};
    use crate::models::GradientSet;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn theta(d: usize, c: usize, seed: u64) -> GcnParams {
        GcnParams::init(d, 6, c, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn single_class_client_reports_one_entry() {
        let g = Graph::new(
            3,
            Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]),
            vec![2, 2],
            [(0, 1)],
            vec![Split::Train, Split::Test],
        )
        .unwrap();
        let r = client_classwise_gradients(&theta(2, 3, 1), &ClientState::new(4, g), 7).unwrap();
        assert_eq!(r.entries.len(), 1);
        assert_eq!((r.client, r.round, r.entries[0].class, r.entries[0].count), (4, 7, 2, 1));
    }

    #[test]
    fn isolated_node_reduces_to_single_sample() {
        let x = Tensor::from_rows(&[[0.3, -1.0]]);
        let g = Graph::new(2, x.clone(), vec![1], [], vec![Split::Train]).unwrap();
        let th = theta(2, 2, 2);
        let r = client_classwise_gradients(&th, &ClientState::new(0, g), 0).unwrap();
        let direct =
            param_gradient_values(&th, &Propagation::Dense(Tensor::eye(1)), &x, &[1], &[true]).unwrap();
        assert!(r.entries[0].gradient.max_abs_diff(&direct) < 1e-15);
    }

    #[test]
    fn class_gradients_decompose_full_gradient_without_inter_class_edges() {
        // three cliques of training nodes, one class each
        let sizes = [(0, 3), (1, 4), (0, 2)];
        let mut labels = Vec::new();
        let mut edges = Vec::new();
        let mut start = 0;
        for &(class, size) in &sizes {
            for i in 0..size {
                labels.push(class);
                for j in i + 1..size {
                    edges.push((start + i, start + j));
                }
            }
            start += size;
        }
        let n = labels.len();
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let g = Graph::new(2, Tensor::uniform(n, 3, 1.0, &mut r), labels, edges, vec![Split::Train; n])
            .unwrap();
        let th = theta(3, 2, 4);
        let client = ClientState::new(0, g.clone());
        let report = client_classwise_gradients(&th, &client, 0).unwrap();
        let weighted: Vec<(f64, &GradientSet)> = report
            .entries
            .iter()
            .map(|e| (e.count as f64 / n as f64, &e.gradient))
            .collect();
        let combined = GradientSet::weighted_sum(&weighted).unwrap();
        let full = param_gradient_values(&th, client.propagation(), g.features(), g.labels(), &g.train_mask())
            .unwrap();
        assert!(combined.max_abs_diff(&full) < 1e-12);
    }

    #[test]
    fn evaluation_weights_by_test_nodes() {
        let acc = |client, test_nodes, accuracy| ClientAccuracy {
            client,
            test_nodes,
            accuracy,
        };
        let e = Evaluation::from_clients(vec![
            acc(0, 10, Some(0.5)),
            acc(1, 30, Some(1.0)),
            acc(2, 20, Some(0.25)),
            acc(3, 0, None),
        ]);
        let manual = (5.0 + 30.0 + 5.0) / 60.0;
        assert!((e.overall.unwrap() - manual).abs() < 1e-15);
        assert_eq!(e.flagged(), vec![3]);
    }

    #[test]
    fn perfect_classifier_scores_one_everywhere() {
        let spec = SbmSpec::tiny_fixture();
        let g = sbm_generate(&spec, 0).unwrap();
        // features replaced by one-hot labels, identity-like weights
        let mut x = Tensor::zeros(g.num_nodes(), 3);
        for (i, &y) in g.labels().iter().enumerate() {
            x.set(i, y, 1.0);
        }
        let g = Graph::new(3, x, g.labels().to_vec(), [], g.splits().to_vec()).unwrap();
        let clients = vec![
            ClientState::new(0, induce_subgraph(&g, &(0..30).collect::<Vec<_>>()).unwrap()),
            ClientState::new(1, induce_subgraph(&g, &(30..60).collect::<Vec<_>>()).unwrap()),
        ];
        let p = GcnParams {
            w1: Tensor::eye(3),
            w2: Tensor::eye(3),
        };
        let e = evaluate_federation(&p, &clients).unwrap();
        assert!(e.clients.iter().all(|c| c.accuracy == Some(1.0)));
        assert_eq!(e.overall, Some(1.0));
    }
}
