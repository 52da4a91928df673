//! GCN classifier, pairwise MLP adjacency generator, gradient distance and
//! training loops.

pub mod distance;
pub mod gcn;
pub mod mlp_adj;
pub mod params;
pub mod train;

pub use distance::{gradient_distance, gradient_distance_values, DistanceKind};
pub use gcn::{
    densify_for_training, gcn_forward, normalize_dense, param_gradient, param_gradient_values,
    predict, threshold, Adjacency, GcnParams, GcnVars, Propagation,
};
pub use mlp_adj::{mlp_adjacency, mlp_adjacency_values, MlpAdjParams, MlpAdjVars};
pub use params::{GradientSet, Layout, ParamSet, TensorSet};
pub use train::{evaluate_accuracy, train_gcn, train_steps, Optimizer, OptimizerKind, TrainConfig, TrainOutcome};
