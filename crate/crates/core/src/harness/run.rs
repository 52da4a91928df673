use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{DatasetSource, ExperimentConfig, Method};
use crate::error::{Error, Result};
use crate::federation::{
    build_clients, run_fedavg, run_fedgm_from_stage1, run_local, run_stage1, ClientState,
    CsvSink, MessageKind, MessageLog, MetricsSink,
};
use crate::graph::{load_graph, louvain_partition, sbm_generate, Graph, SbmSpec};

/// A failure tagged with the phase it happened in.
#[derive(Debug, thiserror::Error)]
#[error("[{phase}] {source}")]
pub struct PhaseError {
    pub phase: &'static str,
    #[source]
    pub source: Error,
}

impl PhaseError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self.source {
            Error::Config(_) => 2,
            _ if self.phase == "config" => 2,
            _ => 1,
        }
    }
}

trait Phase<T> {
    fn phase(self, phase: &'static str) -> std::result::Result<T, PhaseError>;
}

impl<T, E: Into<Error>> Phase<T> for std::result::Result<T, E> {
    fn phase(self, phase: &'static str) -> std::result::Result<T, PhaseError> {
        self.map_err(|e| PhaseError {
            phase,
            source: e.into(),
        })
    }
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Graph> {
    match &cfg.dataset {
        DatasetSource::Sbm(name) => {
            let spec = match name.as_str() {
                "tiny" => SbmSpec::tiny_fixture(),
                _ => SbmSpec::default_fixture(),
            };
            Ok(sbm_generate(&spec, cfg.data_seed)?)
        }
        DatasetSource::File(path) => Ok(load_graph(path)?),
    }
}

pub fn prepare_clients(cfg: &ExperimentConfig, g: &Graph) -> Result<Vec<ClientState>> {
    let partition = louvain_partition(g, cfg.clients, cfg.partition_seed)?;
    build_clients(g, &partition)
}

/// Outcome of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub final_accuracy: f64,
    pub csv: PathBuf,
    pub message_counts: Vec<(MessageKind, usize)>,
    pub bytes_up: u64,
    pub bytes_down: u64,
    /// Wall-clock seconds per phase.
    pub timings: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: Method,
    pub dataset: String,
    pub seeds: Vec<u64>,
    pub finals: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std: f64,
}

impl Summary {
    pub fn new(method: Method, dataset: String, seeds: Vec<u64>, finals: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&finals);
        Self {
            method,
            dataset,
            seeds,
            finals,
            mean,
            std,
        }
    }
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub const SUMMARY_FILE: &str = "summary.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.txt";

/// Checks the message log against the counts the protocol prescribes.
pub fn check_accounting(method: Method, log: &MessageLog, clients: usize, rounds: usize) -> Result<()> {
    let expect = |kind: MessageKind, n: usize| -> Result<()> {
        let got = log.count(kind);
        if got == n {
            Ok(())
        } else {
            Err(Error::Protocol(format!(
                "expected {n} {kind:?} messages, logged {got}"
            )))
        }
    };
    match method {
        Method::Fedgm | Method::FedgmStage1 => {
            let rounds = if method == Method::FedgmStage1 { 0 } else { rounds };
            expect(MessageKind::CondensedUpload, clients)?;
            expect(MessageKind::ThetaBroadcast, rounds * clients)?;
            expect(MessageKind::ClassGradientReport, rounds * clients)?;
            expect(MessageKind::ModelDownload, clients)
        }
        Method::Fedavg => {
            expect(MessageKind::ParamBroadcast, rounds * clients)?;
            expect(MessageKind::ParamUpload, rounds * clients)
        }
        Method::LocalOnly => Ok(()),
    }
}

fn csv_sink(path: &Path) -> Result<CsvSink<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(CsvSink::new(BufWriter::new(file)))
}

/// Runs one seed of `cfg.method`, writing its metrics to `csv_path`.
pub fn run_seed(
    cfg: &ExperimentConfig,
    clients: &[ClientState],
    seed: u64,
    csv_path: &Path,
) -> std::result::Result<SeedResult, PhaseError> {
    let mut sink = csv_sink(csv_path).phase("io")?;
    let mut timings = Vec::new();
    let mut fed = cfg.fed.clone();
    let (accuracy, log) = match cfg.method {
        Method::Fedgm | Method::FedgmStage1 => {
            if cfg.method == Method::FedgmStage1 {
                fed.rounds = 0;
            }
            let t = Instant::now();
            let stage1 = run_stage1(clients, &fed, seed).phase("stage1")?;
            timings.push(("stage1".to_string(), t.elapsed().as_secs_f64()));
            let t = Instant::now();
            let out = run_fedgm_from_stage1(clients, &stage1, &fed, seed, &mut sink)
                .phase("stage2")?;
            timings.push(("stage2+final".to_string(), t.elapsed().as_secs_f64()));
            (out.evaluation.overall, out.log)
        }
        Method::Fedavg => {
            let t = Instant::now();
            let out = run_fedavg(clients, &fed, seed, &mut sink).phase("fedavg")?;
            timings.push(("fedavg".to_string(), t.elapsed().as_secs_f64()));
            (out.evaluation.overall, out.log)
        }
        Method::LocalOnly => {
            let t = Instant::now();
            let out = run_local(clients, &fed, seed, &mut sink).phase("local")?;
            timings.push(("local".to_string(), t.elapsed().as_secs_f64()));
            (out.evaluation.overall, MessageLog::new())
        }
    };
    sink.end_round().phase("io")?;
    drop(sink);
    check_accounting(cfg.method, &log, clients.len(), fed.rounds).phase("accounting")?;
    let final_accuracy = accuracy
        .ok_or_else(|| Error::Invalid("no client has test nodes".into()))
        .phase("evaluate")?;
    let kinds = [
        MessageKind::CondensedUpload,
        MessageKind::ThetaBroadcast,
        MessageKind::ClassGradientReport,
        MessageKind::ParamBroadcast,
        MessageKind::ParamUpload,
        MessageKind::ModelDownload,
    ];
    let (bytes_up, bytes_down) = log.total_bytes();
    Ok(SeedResult {
        seed,
        final_accuracy,
        csv: csv_path.to_path_buf(),
        message_counts: kinds.iter().map(|&k| (k, log.count(k))).collect(),
        bytes_up,
        bytes_down,
        timings,
    })
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    crate_version: &'static str,
    config: &'a ExperimentConfig,
    config_text: String,
    seeds: &'a [u64],
    constants: Constants,
    dataset: DatasetStats,
    results: &'a [SeedResult],
}

#[derive(Debug, Serialize)]
struct Constants {
    gcn_biases: bool,
    gcn_output_activation: &'static str,
    dropout: f64,
    init: &'static str,
    stage1_schedule: &'static str,
    stage1_checkpoint: &'static str,
    condensed_self_loops: bool,
    stage2_theta: &'static str,
    bytes_per_scalar: u64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            gcn_biases: false,
            gcn_output_activation: "none",
            dropout: 0.0,
            init: "glorot-uniform weights, zero biases",
            stage1_schedule: "odd epochs update features, even epochs update the adjacency generator",
            stage1_checkpoint: "lowest trailing-average loss among the final tenth of epochs",
            condensed_self_loops: true,
            stage2_theta: "one draw per round",
            bytes_per_scalar: crate::federation::messages::WORD,
        }
    }
}

#[derive(Debug, Serialize)]
struct DatasetStats {
    label: String,
    nodes: usize,
    features: usize,
    classes: usize,
    edges: usize,
    client_sizes: Vec<usize>,
}

/// Result of a whole `run` invocation.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub summary: Summary,
    pub seeds: Vec<SeedResult>,
    pub output: PathBuf,
}

fn prepare_output(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .next()
            .is_some();
        if occupied && !force {
            return Err(Error::Config(format!(
                "output directory {} exists; pass --force to overwrite",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Executes every seed of `cfg` and writes `seed-<s>.csv`, the summary,
/// the manifest and the resolved config into `cfg.output`.
pub fn run(cfg: &ExperimentConfig, force: bool) -> std::result::Result<RunReport, PhaseError> {
    cfg.validate().phase("config")?;
    prepare_output(&cfg.output, force).phase("config")?;
    let g = load_dataset(cfg).phase("load")?;
    let clients = prepare_clients(cfg, &g).phase("partition")?;
    log::info!(
        "{}: {} nodes, {} clients, method {}",
        cfg.dataset.label(),
        g.num_nodes(),
        clients.len(),
        cfg.method
    );

    let mut results = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let csv = cfg.output.join(format!("seed-{seed}.csv"));
        let r = run_seed(cfg, &clients, seed, &csv)?;
        log::info!("seed {seed}: final accuracy {:.4}", r.final_accuracy);
        results.push(r);
    }

    let summary = Summary::new(
        cfg.method,
        cfg.dataset.label(),
        cfg.seeds.clone(),
        results.iter().map(|r| r.final_accuracy).collect(),
    );
    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        config_text: cfg.to_text(),
        seeds: &cfg.seeds,
        constants: Constants::default(),
        dataset: DatasetStats {
            label: cfg.dataset.label(),
            nodes: g.num_nodes(),
            features: g.num_features(),
            classes: g.num_classes(),
            edges: g.num_edges(),
            client_sizes: clients.iter().map(|c| c.graph().num_nodes()).collect(),
        },
        results: &results,
    };
    write_json(&cfg.output.join(SUMMARY_FILE), &summary).phase("io")?;
    write_json(&cfg.output.join(MANIFEST_FILE), &manifest).phase("io")?;
    let config_path = cfg.output.join(CONFIG_FILE);
    fs::write(&config_path, cfg.to_text())
        .map_err(|e| Error::io(&config_path, e))
        .phase("io")?;
    Ok(RunReport {
        summary,
        seeds: results,
        output: cfg.output.clone(),
    })
}
