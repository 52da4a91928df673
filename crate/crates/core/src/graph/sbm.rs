//! Planted-partition graphs with community label skew.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{stratified_split, Graph, SplitFractions};
use crate::error::GraphError;
use crate::rng;
use crate::tensor::Tensor;

/// Parameters of a stochastic block model with class-skewed blocks.
///
/// Block `b` has dominant class `b mod num_classes`. A node takes the
/// dominant class with probability `dominant_fraction`; otherwise it draws
/// uniformly from the next `classes_per_block - 1` classes (cyclically).
/// Features are `mean(class) + N(0, I)` where class means have norm
/// `feature_shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub block_sizes: Vec<usize>,
    pub intra_p: f64,
    pub inter_p: f64,
    pub num_classes: usize,
    pub classes_per_block: usize,
    pub dominant_fraction: f64,
    pub feature_dim: usize,
    pub feature_shift: f64,
    pub split: SplitFractions,
}

impl SbmSpec {
    /// The built-in heterogeneity fixture behind `sbm:default`.
    pub fn default_fixture() -> Self {
        Self {
            block_sizes: vec![60; 10],
            intra_p: 0.15,
            inter_p: 0.004,
            num_classes: 5,
            classes_per_block: 3,
            dominant_fraction: 0.7,
            feature_dim: 32,
            feature_shift: 1.0,
            split: SplitFractions::default(),
        }
    }

    /// A 60-node variant for quick runs and determinism checks.
    pub fn tiny_fixture() -> Self {
        Self {
            block_sizes: vec![20; 3],
            intra_p: 0.3,
            inter_p: 0.02,
            num_classes: 3,
            classes_per_block: 2,
            feature_dim: 8,
            ..Self::default_fixture()
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    fn validate(&self) -> Result<(), GraphError> {
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !prob_ok(self.intra_p) || !prob_ok(self.inter_p) || !prob_ok(self.dominant_fraction) {
            return Err(GraphError::Invalid(format!(
                "probabilities must lie in [0, 1]: intra {}, inter {}, dominant {}",
                self.intra_p, self.inter_p, self.dominant_fraction
            )));
        }
        if self.block_sizes.is_empty() || self.block_sizes.contains(&0) {
            return Err(GraphError::Invalid("block sizes must be >= 1".into()));
        }
        if self.num_classes == 0
            || self.classes_per_block == 0
            || self.classes_per_block > self.num_classes
        {
            return Err(GraphError::Invalid(format!(
                "need 1 <= classes_per_block ({}) <= num_classes ({})",
                self.classes_per_block, self.num_classes
            )));
        }
        if self.feature_dim == 0 {
            return Err(GraphError::Invalid("feature dimension must be >= 1".into()));
        }
        Ok(())
    }
}

fn class_means(spec: &SbmSpec, seed: u64) -> Tensor {
    let (c, d) = (spec.num_classes, spec.feature_dim);
    let mut means = Tensor::zeros(c, d);
    if d >= c {
        for k in 0..c {
            means.set(k, k, spec.feature_shift);
        }
    } else {
        let mut rng = rng::stream(seed, "sbm-means", &[]);
        for k in 0..c {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            for (j, x) in v.iter().enumerate() {
                means.set(k, j, spec.feature_shift * x / norm);
            }
        }
    }
    means
}

pub fn sbm_generate(spec: &SbmSpec, seed: u64) -> Result<Graph, GraphError> {
    spec.validate()?;
    let n = spec.num_nodes();
    let block_of: Vec<usize> = spec
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();

    let mut label_rng = rng::stream(seed, "sbm-labels", &[]);
    let labels: Vec<usize> = block_of
        .iter()
        .map(|&b| {
            let dominant = b % spec.num_classes;
            if spec.classes_per_block == 1 || label_rng.random::<f64>() < spec.dominant_fraction {
                dominant
            } else {
                let offset = 1 + label_rng.random_range(0..spec.classes_per_block - 1);
                (dominant + offset) % spec.num_classes
            }
        })
        .collect();

    let means = class_means(spec, seed);
    let mut feat_rng = rng::stream(seed, "sbm-features", &[]);
    let mut features = Tensor::zeros(n, spec.feature_dim);
    for (i, &y) in labels.iter().enumerate() {
        for j in 0..spec.feature_dim {
            let noise: f64 = StandardNormal.sample(&mut feat_rng);
            features.set(i, j, means.get(y, j) + noise);
        }
    }

    let mut edge_rng = rng::stream(seed, "sbm-edges", &[]);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if block_of[i] == block_of[j] {
                spec.intra_p
            } else {
                spec.inter_p
            };
            if p > 0.0 && edge_rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }

    let mut split_rng = rng::stream(seed, "sbm-split", &[]);
    let splits = stratified_split(&labels, spec.num_classes, spec.split, &mut split_rng);
    Graph::new(spec.num_classes, features, labels, edges, splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::louvain::modularity;

    fn components(g: &Graph) -> usize {
        let adj = g.neighbors();
        let mut seen = vec![false; g.num_nodes()];
        let mut count = 0;
        for s in 0..g.num_nodes() {
            if seen[s] {
                continue;
            }
            count += 1;
            let mut stack = vec![s];
            seen[s] = true;
            while let Some(v) = stack.pop() {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        stack.push(w);
                    }
                }
            }
        }
        count
    }

    #[test]
    fn degenerate_probabilities_give_cliques() {
        let spec = SbmSpec {
            block_sizes: vec![4, 5],
            intra_p: 1.0,
            inter_p: 0.0,
            ..SbmSpec::tiny_fixture()
        };
        let g = sbm_generate(&spec, 1).unwrap();
        assert_eq!(g.num_edges(), 6 + 10);
        assert_eq!(components(&g), 2);
        let comm: Vec<usize> = (0..9).map(|i| usize::from(i >= 4)).collect();
        assert!(modularity(&g, &comm) > 0.4);
    }

    #[test]
    fn no_inter_edges_means_at_least_one_component_per_block() {
        let spec = SbmSpec {
            inter_p: 0.0,
            ..SbmSpec::tiny_fixture()
        };
        for seed in 0..3 {
            let g = sbm_generate(&spec, seed).unwrap();
            assert!(components(&g) >= spec.block_sizes.len());
        }
    }

    #[test]
    fn edge_count_within_three_sigma_of_binomial_mean() {
        let spec = SbmSpec::default_fixture();
        let n = spec.num_nodes() as f64;
        let intra_pairs: f64 = spec
            .block_sizes
            .iter()
            .map(|&s| (s * (s - 1) / 2) as f64)
            .sum();
        let inter_pairs = n * (n - 1.0) / 2.0 - intra_pairs;
        let mean = intra_pairs * spec.intra_p + inter_pairs * spec.inter_p;
        let var = intra_pairs * spec.intra_p * (1.0 - spec.intra_p)
            + inter_pairs * spec.inter_p * (1.0 - spec.inter_p);
        for seed in 0..10 {
            let g = sbm_generate(&spec, seed).unwrap();
            let z = (g.num_edges() as f64 - mean) / var.sqrt();
            assert!(z.abs() < 3.0, "seed {seed}: z = {z}");
        }
    }

    #[test]
    fn label_skew_follows_blocks() {
        let spec = SbmSpec::default_fixture();
        let g = sbm_generate(&spec, 2).unwrap();
        let dominant = (0..60).filter(|&i| g.labels()[i] == 0).count();
        assert!(dominant > 30, "{dominant}");
        let allowed = [0, 1, 2];
        assert!((0..60).all(|i| allowed.contains(&g.labels()[i])));
    }

    #[test]
    fn invalid_probabilities_rejected() {
        let spec = SbmSpec {
            intra_p: 1.5,
            ..SbmSpec::tiny_fixture()
        };
        assert!(sbm_generate(&spec, 0).is_err());
        let spec = SbmSpec {
            inter_p: -0.1,
            ..SbmSpec::tiny_fixture()
        };
        assert!(sbm_generate(&spec, 0).is_err());
    }
}
