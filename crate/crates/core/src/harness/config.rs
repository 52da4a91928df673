//! Flat `key = value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::{FedConfig, WeightBy};
use crate::models::{DistanceKind, OptimizerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Fedgm,
    /// FedGM with the second stage skipped.
    FedgmStage1,
    Fedavg,
    LocalOnly,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Fedgm => "fedgm",
            Method::FedgmStage1 => "fedgm-stage1",
            Method::Fedavg => "fedavg",
            Method::LocalOnly => "local-only",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fedgm" => Some(Method::Fedgm),
            "fedgm-stage1" => Some(Method::FedgmStage1),
            "fedavg" => Some(Method::Fedavg),
            "local-only" | "local" => Some(Method::LocalOnly),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where the global graph comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSource {
    /// A built-in block model fixture: `sbm:default` or `sbm:tiny`.
    Sbm(String),
    File(PathBuf),
}

impl DatasetSource {
    pub fn parse(s: &str) -> Result<Self> {
        match s.strip_prefix("sbm:") {
            Some(name @ ("default" | "tiny")) => Ok(DatasetSource::Sbm(name.to_string())),
            Some(other) => Err(Error::Config(format!(
                "unknown fixture sbm:{other} (expected sbm:default or sbm:tiny)"
            ))),
            None if s.is_empty() => Err(Error::Config("empty dataset".into())),
            None => Ok(DatasetSource::File(PathBuf::from(s))),
        }
    }

    pub fn label(&self) -> String {
        match self {
            DatasetSource::Sbm(name) => format!("sbm:{name}"),
            DatasetSource::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub clients: usize,
    /// Seed of the block model generator (ignored for files).
    pub data_seed: u64,
    pub partition_seed: u64,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub fed: FedConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Sbm("default".into()),
            clients: 10,
            data_seed: 0,
            partition_seed: 0,
            method: Method::Fedgm,
            seeds: vec![0, 1, 2],
            output: PathBuf::from("runs/latest"),
            fed: FedConfig::default(),
        }
    }
}

/// Every accepted key, in the order the manifest lists them.
pub const KEYS: &[&str] = &[
    "dataset",
    "clients",
    "data-seed",
    "partition-seed",
    "method",
    "seeds",
    "output",
    "ratio",
    "stage1-epochs",
    "rounds",
    "steps-per-round",
    "lr-gnn",
    "lr-feat",
    "lr-phi",
    "weight-decay",
    "optimizer",
    "hidden",
    "phi-hidden",
    "distance",
    "weight-by",
    "checkpoint-window",
    "delta",
    "final-epochs",
    "probe-every",
    "probe-epochs",
    "local-epochs",
];

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

fn positive(key: &str, value: &str) -> Result<f64> {
    let v: f64 = num(key, value)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Config(format!("{key} must be > 0, got {value}")))
    }
}

fn choice<T>(key: &str, value: &str, parsed: Option<T>, allowed: &str) -> Result<T> {
    parsed.ok_or_else(|| Error::Config(format!("{key}: '{value}' is not one of {allowed}")))
}

impl ExperimentConfig {
    /// Sets one key. Keys are the kebab-case field names; underscores are
    /// accepted in place of dashes.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        let f = &mut self.fed;
        match key.as_str() {
            "dataset" => self.dataset = DatasetSource::parse(value)?,
            "clients" => self.clients = num(&key, value)?,
            "data-seed" => self.data_seed = num(&key, value)?,
            "partition-seed" => self.partition_seed = num(&key, value)?,
            "method" => {
                self.method = choice(
                    &key,
                    value,
                    Method::parse(value),
                    "fedgm, fedgm-stage1, fedavg, local-only",
                )?
            }
            "seeds" => {
                self.seeds = value
                    .split(',')
                    .map(|s| num(&key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "output" => self.output = PathBuf::from(value),
            "ratio" => f.ratio = num(&key, value)?,
            "stage1-epochs" => f.stage1_epochs = num(&key, value)?,
            "rounds" => f.rounds = num(&key, value)?,
            "steps-per-round" => f.steps_per_round = num(&key, value)?,
            "lr-gnn" => f.lr_gnn = positive(&key, value)?,
            "lr-feat" => f.lr_feat = positive(&key, value)?,
            "lr-phi" => f.lr_phi = positive(&key, value)?,
            "weight-decay" => f.weight_decay = num(&key, value)?,
            "optimizer" => {
                f.optimizer = choice(&key, value, OptimizerKind::parse(value), "adam, sgd")?
            }
            "hidden" => f.hidden = num(&key, value)?,
            "phi-hidden" => f.phi_hidden = num(&key, value)?,
            "distance" => {
                f.distance = choice(&key, value, DistanceKind::parse(value), "cosine, squared-l2")?
            }
            "weight-by" => {
                f.weight_by = choice(&key, value, WeightBy::parse(value), "condensed, real")?
            }
            "checkpoint-window" => f.checkpoint_window = num(&key, value)?,
            "delta" => f.delta = num(&key, value)?,
            "final-epochs" => f.final_epochs = num(&key, value)?,
            "probe-every" => f.probe_every = num(&key, value)?,
            "probe-epochs" => f.probe_epochs = num(&key, value)?,
            "local-epochs" => f.local_epochs = num(&key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value'", i + 1))
            })?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", i + 1, strip(e))))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.fed;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.clients == 0 {
            return bad("clients must be >= 1".into());
        }
        if !(f.ratio > 0.0 && f.ratio <= 1.0) {
            return bad(format!("ratio must lie in (0, 1], got {}", f.ratio));
        }
        if self.seeds.is_empty() {
            return bad("seeds must list at least one seed".into());
        }
        for (name, v) in [("lr-gnn", f.lr_gnn), ("lr-feat", f.lr_feat), ("lr-phi", f.lr_phi)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be > 0"));
            }
        }
        if f.weight_decay < 0.0 {
            return bad("weight-decay must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&f.delta) {
            return bad(format!("delta must lie in [0, 1], got {}", f.delta));
        }
        if f.hidden == 0 || f.phi_hidden == 0 {
            return bad("hidden sizes must be >= 1".into());
        }
        Ok(())
    }

    /// Flat `key = value` rendering that [`apply_text`](Self::apply_text)
    /// reads back into an equal config.
    pub fn to_text(&self) -> String {
        let f = &self.fed;
        let dataset = match &self.dataset {
            DatasetSource::Sbm(name) => format!("sbm:{name}"),
            DatasetSource::File(p) => p.display().to_string(),
        };
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let values: Vec<String> = vec![
            dataset,
            self.clients.to_string(),
            self.data_seed.to_string(),
            self.partition_seed.to_string(),
            self.method.to_string(),
            seeds.join(","),
            self.output.display().to_string(),
            format!("{:?}", f.ratio),
            f.stage1_epochs.to_string(),
            f.rounds.to_string(),
            f.steps_per_round.to_string(),
            format!("{:?}", f.lr_gnn),
            format!("{:?}", f.lr_feat),
            format!("{:?}", f.lr_phi),
            format!("{:?}", f.weight_decay),
            f.optimizer.as_str().to_string(),
            f.hidden.to_string(),
            f.phi_hidden.to_string(),
            f.distance.as_str().to_string(),
            f.weight_by.as_str().to_string(),
            f.checkpoint_window.to_string(),
            format!("{:?}", f.delta),
            f.final_epochs.to_string(),
            f.probe_every.to_string(),
            f.probe_epochs.to_string(),
            f.local_epochs.to_string(),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}
