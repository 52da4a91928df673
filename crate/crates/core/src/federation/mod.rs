//! In-process simulation of the federated protocols.
//!
//! Clients and server exchange explicit message objects that are counted
//! and sized in a [`MessageLog`]. Within a round, client work runs on the
//! rayon pool; results are collected in client order so runs are
//! reproducible regardless of the number of workers.

pub mod client;
pub mod messages;
pub mod metrics;
pub mod runs;
pub mod server;

use serde::{Deserialize, Serialize};

use crate::condense::CondenseConfig;
use crate::models::{DistanceKind, OptimizerKind, TrainConfig};

pub use client::{
    build_clients, client_classwise_gradients, evaluate_federation, ClientAccuracy, ClientState,
    Evaluation,
};
pub use messages::{
    ClassGradient, ClassGradientReport, MessageKind, MessageLog, MessageRecord,
};
pub use metrics::{CsvSink, MetricsRow, MetricsSink, NullSink};
pub use runs::{
    fedavg_aggregate, run_fedavg, run_fedgm, run_fedgm_from_stage1, run_local, run_stage1,
    FedAvgOutcome, FedGmOutcome, LocalOutcome,
};
pub use server::{
    aggregate_class_gradients, condensed_class_gradient, integrate, stage2_round, RoundReport,
    ServerState, Stage2Config, WeightBy,
};

/// Every knob of the simulated protocols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedConfig {
    pub ratio: f64,
    pub stage1_epochs: usize,
    pub rounds: usize,
    pub steps_per_round: usize,
    pub lr_gnn: f64,
    pub lr_feat: f64,
    pub lr_phi: f64,
    pub weight_decay: f64,
    pub optimizer: OptimizerKind,
    pub hidden: usize,
    pub phi_hidden: usize,
    pub distance: DistanceKind,
    pub weight_by: WeightBy,
    pub checkpoint_window: usize,
    /// Entries of the generated adjacency below this are dropped before
    /// training on the condensed graph.
    pub delta: f64,
    pub final_epochs: usize,
    /// Rounds between accuracy probes during the second stage; 0 disables.
    pub probe_every: usize,
    pub probe_epochs: usize,
    pub local_epochs: usize,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            ratio: 0.25,
            stage1_epochs: 1000,
            rounds: 100,
            steps_per_round: 10,
            lr_gnn: 1e-2,
            lr_feat: 1e-2,
            lr_phi: 1e-3,
            weight_decay: 5e-4,
            optimizer: OptimizerKind::Adam,
            hidden: 256,
            phi_hidden: 128,
            distance: DistanceKind::Cosine,
            weight_by: WeightBy::Condensed,
            checkpoint_window: 10,
            delta: 0.5,
            final_epochs: 300,
            probe_every: 10,
            probe_epochs: 100,
            local_epochs: 3,
        }
    }
}

impl FedConfig {
    pub fn condense(&self) -> CondenseConfig {
        CondenseConfig {
            ratio: self.ratio,
            epochs: self.stage1_epochs,
            lr_feat: self.lr_feat,
            lr_phi: self.lr_phi,
            hidden: self.hidden,
            phi_hidden: self.phi_hidden,
            distance: self.distance,
            window: self.checkpoint_window,
        }
    }

    pub fn stage2(&self) -> Stage2Config {
        Stage2Config {
            rounds: self.rounds,
            steps_per_round: self.steps_per_round,
            lr_feat: self.lr_feat,
            hidden: self.hidden,
            distance: self.distance,
            weight_by: self.weight_by,
        }
    }

    pub fn train(&self, epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            lr: self.lr_gnn,
            weight_decay: self.weight_decay,
            optimizer: self.optimizer,
        }
    }
}
