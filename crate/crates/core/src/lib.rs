//! Federated graph learning simulator.
//!
//! Clients hold node-disjoint subgraphs of an implicit global graph. Two
//! ways of collaborating are implemented side by side:
//!
//! * **FedGM**: every client condenses its subgraph into a handful of
//!   synthetic nodes by one-step gradient matching and uploads it once; the
//!   server stacks the condensed subgraphs block-diagonally, refines the
//!   condensed features over several rounds of class-wise gradient matching
//!   against gradients reported by the clients, and finally trains a GCN on
//!   the condensed graph.
//! * **FedAvg**: the usual broadcast / local training / weighted averaging
//!   loop over GCN parameters.
//!
//! The building blocks are usable on their own: a second-order
//! reverse-mode [`autodiff`] tape, [`graph`] utilities (text format,
//! normalization, Louvain partitioning, stochastic block models), the
//! [`models`], [`condense`] and [`federation`] layers, and the experiment
//! [`harness`] behind the `fedgm` binary.

pub mod autodiff;
pub mod condense;
pub mod error;
pub mod federation;
pub mod graph;
pub mod harness;
pub mod models;
pub mod rng;
pub mod sparse;
pub mod tensor;

pub use error::{Error, Result};
