//! Experiment orchestration behind the `fedgm` binary: configuration,
//! multi-seed runs with per-seed metrics, comparison tables and dataset
//! conversion.

pub mod compare;
pub mod config;
pub mod convert;
pub mod run;

pub use compare::{compare, read_summary, Comparison, ComparisonRow};
pub use config::{DatasetSource, ExperimentConfig, Method, KEYS};
pub use convert::{convert_planetoid, parse_citation_dataset, ConvertReport};
pub use run::{
    check_accounting, load_dataset, mean_std, prepare_clients, run, run_seed, PhaseError,
    RunReport, SeedResult, Summary,
};
