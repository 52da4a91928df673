use rayon::prelude::*;

use super::client::{evaluate_federation, ClientState, Evaluation};
use super::messages::{condensed_upload_bytes, params_bytes, MessageKind, MessageLog};
use super::metrics::{MetricsRow, MetricsSink};
use super::server::{integrate, stage2_round, ServerState};
use super::FedConfig;
use crate::condense::{condense_local, CondenseOutcome};
use crate::error::{Error, Result};
use crate::models::{train_gcn, train_steps, GcnParams, Optimizer, ParamSet};
use crate::rng;

fn fresh_model(cfg: &FedConfig, d: usize, c: usize, seed: u64, tag: &str, parts: &[u64]) -> GcnParams {
    GcnParams::init(d, cfg.hidden, c, &mut rng::stream(seed, tag, parts))
}

fn dims(clients: &[ClientState]) -> Result<(usize, usize)> {
    let first = clients
        .first()
        .ok_or_else(|| Error::Invalid("no clients".into()))?;
    Ok((first.graph().num_features(), first.graph().num_classes()))
}

fn emit_final(
    sink: &mut dyn MetricsSink,
    round: usize,
    eval: &Evaluation,
    bytes: (u64, u64),
) -> Result<()> {
    for c in &eval.clients {
        sink.emit(MetricsRow::new(round, "final").client(c.client, c.accuracy))?;
    }
    sink.emit(MetricsRow::new(round, "final").overall(eval.overall).bytes(bytes))?;
    sink.end_round()
}

/// Condenses every client independently.
pub fn run_stage1(
    clients: &[ClientState],
    cfg: &FedConfig,
    seed: u64,
) -> Result<Vec<CondenseOutcome>> {
    let ccfg = cfg.condense();
    clients
        .par_iter()
        .map(|c| condense_local(c.graph(), c.id, &ccfg, seed))
        .collect()
}

#[derive(Debug, Clone)]
pub struct FedGmOutcome {
    pub params: GcnParams,
    pub evaluation: Evaluation,
    pub server: ServerState,
    pub log: MessageLog,
    /// Matching loss of each second-stage round.
    pub round_losses: Vec<f64>,
    /// `(round, overall accuracy)` of each probe.
    pub probes: Vec<(usize, Option<f64>)>,
}

/// Trains a GCN on the server's condensed graph.
pub fn train_on_condensed(
    server: &ServerState,
    cfg: &FedConfig,
    epochs: usize,
    seed: u64,
    tag: &str,
    round: usize,
) -> Result<GcnParams> {
    let init = fresh_model(
        cfg,
        server.features.cols(),
        server.num_classes(),
        seed,
        tag,
        &[round as u64],
    );
    let mask = vec![true; server.num_nodes()];
    let out = train_gcn(
        init,
        &server.propagation(),
        &server.features,
        server.labels(),
        &mask,
        &cfg.train(epochs),
    )?;
    Ok(out.params)
}

/// Everything after local condensation: upload, integration,
/// `cfg.rounds` rounds of class-wise matching and final training.
pub fn run_fedgm_from_stage1(
    clients: &[ClientState],
    stage1: &[CondenseOutcome],
    cfg: &FedConfig,
    seed: u64,
    sink: &mut dyn MetricsSink,
) -> Result<FedGmOutcome> {
    let mut log = MessageLog::new();
    let mut condensed = Vec::with_capacity(stage1.len());
    for out in stage1 {
        let c = &out.condensed;
        let bytes = condensed_upload_bytes(c.num_nodes(), c.features.cols());
        log.record(0, MessageKind::CondensedUpload, c.client, bytes);
        let tail = out.losses.len().saturating_sub(cfg.checkpoint_window.max(1));
        let trailing = &out.losses[tail..];
        let mut row = MetricsRow::new(0, "stage1")
            .client(c.client, None)
            .bytes((bytes, 0));
        if !trailing.is_empty() {
            row = row.loss(trailing.iter().sum::<f64>() / trailing.len() as f64);
        }
        sink.emit(row)?;
        condensed.push(c.clone());
    }
    sink.end_round()?;

    let mut server = integrate(&condensed, cfg.delta)?;
    let s2 = cfg.stage2();
    let mut round_losses = Vec::with_capacity(cfg.rounds);
    let mut probes = Vec::new();
    for t in 1..=cfg.rounds {
        let report = stage2_round(&mut server, clients, t, &s2, seed, &mut log)?;
        round_losses.push(report.loss);
        let bytes = log.bytes_where(|r| r.round == t);
        sink.emit(MetricsRow::new(t, "stage2").loss(report.loss).bytes(bytes))?;
        if cfg.probe_every > 0 && t % cfg.probe_every == 0 {
            let probe = train_on_condensed(&server, cfg, cfg.probe_epochs, seed, "probe", t)?;
            let eval = evaluate_federation(&probe, clients)?;
            sink.emit(MetricsRow::new(t, "probe").overall(eval.overall))?;
            probes.push((t, eval.overall));
        }
        sink.end_round()?;
    }

    let params = train_on_condensed(&server, cfg, cfg.final_epochs, seed, "final-model", 0)?;
    let model_bytes = params_bytes(params.to_set().numel());
    for c in clients {
        log.record(cfg.rounds, MessageKind::ModelDownload, c.id, model_bytes);
    }
    let evaluation = evaluate_federation(&params, clients)?;
    emit_final(
        sink,
        cfg.rounds,
        &evaluation,
        log.bytes_where(|r| r.kind == MessageKind::ModelDownload),
    )?;
    Ok(FedGmOutcome {
        params,
        evaluation,
        server,
        log,
        round_losses,
        probes,
    })
}

pub fn run_fedgm(
    clients: &[ClientState],
    cfg: &FedConfig,
    seed: u64,
    sink: &mut dyn MetricsSink,
) -> Result<FedGmOutcome> {
    let stage1 = run_stage1(clients, cfg, seed)?;
    run_fedgm_from_stage1(clients, &stage1, cfg, seed, sink)
}

/// `Σ_k (n_k / Σ n) θ_k`.
pub fn fedavg_aggregate(items: &[(usize, &ParamSet)]) -> Result<ParamSet> {
    let total: usize = items.iter().map(|(n, _)| n).sum();
    if total == 0 {
        return Err(Error::Protocol("no training nodes on any client".into()));
    }
    let weighted: Vec<(f64, &ParamSet)> = items
        .iter()
        .map(|&(n, p)| (n as f64 / total as f64, p))
        .collect();
    Ok(ParamSet::weighted_sum(&weighted)?)
}

#[derive(Debug, Clone)]
pub struct FedAvgOutcome {
    pub params: GcnParams,
    pub evaluation: Evaluation,
    pub log: MessageLog,
    /// Overall accuracy of the global model after each round.
    pub round_accuracy: Vec<Option<f64>>,
}

/// Broadcast, `cfg.local_epochs` of local training, weighted averaging;
/// repeated for `cfg.rounds` rounds. Each client keeps its optimizer state
/// between rounds.
pub fn run_fedavg(
    clients: &[ClientState],
    cfg: &FedConfig,
    seed: u64,
    sink: &mut dyn MetricsSink,
) -> Result<FedAvgOutcome> {
    let (d, c) = dims(clients)?;
    let mut global = fresh_model(cfg, d, c, seed, "fedavg-init", &[]);
    let bytes = params_bytes(global.to_set().numel());
    let mut optimizers: Vec<Optimizer> = clients
        .iter()
        .map(|_| Optimizer::new(cfg.optimizer, cfg.lr_gnn, cfg.weight_decay))
        .collect();
    let mut log = MessageLog::new();
    let mut round_accuracy = Vec::with_capacity(cfg.rounds);
    for t in 1..=cfg.rounds {
        let updates = clients
            .par_iter()
            .zip(optimizers.par_iter_mut())
            .map(|(client, opt)| -> Result<Option<ParamSet>> {
                if client.train_count() == 0 {
                    return Ok(None);
                }
                let g = client.graph();
                let mut local = global.clone();
                train_steps(
                    &mut local,
                    opt,
                    client.propagation(),
                    g.features(),
                    g.labels(),
                    &g.train_mask(),
                    cfg.local_epochs,
                )?;
                Ok(Some(local.to_set()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut items = Vec::new();
        for (client, update) in clients.iter().zip(&updates) {
            log.record(t, MessageKind::ParamBroadcast, client.id, bytes);
            if let Some(p) = update {
                log.record(t, MessageKind::ParamUpload, client.id, bytes);
                items.push((client.train_count(), p));
            }
        }
        global = GcnParams::from_set(&fedavg_aggregate(&items)?)?;
        let eval = evaluate_federation(&global, clients)?;
        round_accuracy.push(eval.overall);
        sink.emit(
            MetricsRow::new(t, "fedavg")
                .overall(eval.overall)
                .bytes(log.bytes_where(|r| r.round == t)),
        )?;
        sink.end_round()?;
    }
    let evaluation = evaluate_federation(&global, clients)?;
    emit_final(sink, cfg.rounds, &evaluation, (0, 0))?;
    Ok(FedAvgOutcome {
        params: global,
        evaluation,
        log,
        round_accuracy,
    })
}

#[derive(Debug, Clone)]
pub struct LocalOutcome {
    pub params: Vec<Option<GcnParams>>,
    pub evaluation: Evaluation,
}

/// Each client trains its own model for `cfg.final_epochs` and is scored
/// on its own test nodes. Nothing is exchanged.
pub fn run_local(
    clients: &[ClientState],
    cfg: &FedConfig,
    seed: u64,
    sink: &mut dyn MetricsSink,
) -> Result<LocalOutcome> {
    let (d, c) = dims(clients)?;
    let results = clients
        .par_iter()
        .map(|client| -> Result<(Option<GcnParams>, super::ClientAccuracy)> {
            let g = client.graph();
            let params = if client.train_count() == 0 {
                None
            } else {
                let init = fresh_model(cfg, d, c, seed, "local-init", &[client.id as u64]);
                let out = train_gcn(
                    init,
                    client.propagation(),
                    g.features(),
                    g.labels(),
                    &g.train_mask(),
                    &cfg.train(cfg.final_epochs),
                )?;
                Some(out.params)
            };
            let accuracy = match &params {
                Some(p) => client.test_accuracy(p)?,
                None => None,
            };
            Ok((
                params,
                super::ClientAccuracy {
                    client: client.id,
                    test_nodes: client.test_count(),
                    accuracy,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (params, accs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let evaluation = Evaluation::from_clients(accs);
    emit_final(sink, 0, &evaluation, (0, 0))?;
    Ok(LocalOutcome { params, evaluation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::federation::{build_clients, NullSink};
    use crate::graph::{louvain_partition, sbm_generate, SbmSpec};
    use crate::tensor::Tensor;

    fn tiny_clients(k: usize) -> Vec<ClientState> {
        let g = sbm_generate(&SbmSpec::tiny_fixture(), 0).unwrap();
        build_clients(&g, &louvain_partition(&g, k, 0).unwrap()).unwrap()
    }

    fn tiny_cfg() -> FedConfig {
        FedConfig {
            stage1_epochs: 20,
            rounds: 3,
            steps_per_round: 2,
            hidden: 8,
            phi_hidden: 8,
            final_epochs: 20,
            probe_every: 2,
            probe_epochs: 5,
            local_epochs: 2,
            ..FedConfig::default()
        }
    }

    fn set(values: &[f64]) -> ParamSet {
        ParamSet::from_parts(&["w"], vec![Tensor::row_vector(values)])
    }

    #[test]
    fn fedavg_aggregate_is_count_weighted_mean() {
        let (a, b) = (set(&[1.0, 2.0]), set(&[5.0, 6.0]));
        let avg = fedavg_aggregate(&[(1, &a), (3, &b)]).unwrap();
        assert!(avg.max_abs_diff(&set(&[4.0, 5.0])) < 1e-12);
        assert!(fedavg_aggregate(&[(0, &a)]).is_err());
    }

    #[test]
    fn single_client_fedavg_is_centralized_training() {
        let clients = tiny_clients(1);
        let cfg = tiny_cfg();
        let out = run_fedavg(&clients, &cfg, 4, &mut NullSink).unwrap();
        let g = clients[0].graph();
        let mut params = fresh_model(&cfg, g.num_features(), g.num_classes(), 4, "fedavg-init", &[]);
        let mut opt = Optimizer::new(cfg.optimizer, cfg.lr_gnn, cfg.weight_decay);
        train_steps(
            &mut params,
            &mut opt,
            clients[0].propagation(),
            g.features(),
            g.labels(),
            &g.train_mask(),
            cfg.rounds * cfg.local_epochs,
        )
        .unwrap();
        assert!(out.params.to_set().max_abs_diff(&params.to_set()) < 1e-12);
    }

    #[test]
    fn identical_clients_average_to_one_client() {
        let one = tiny_clients(1);
        let twins = vec![
            ClientState::new(0, one[0].graph().clone()),
            ClientState::new(1, one[0].graph().clone()),
        ];
        let cfg = tiny_cfg();
        let a = run_fedavg(&one, &cfg, 1, &mut NullSink).unwrap();
        let b = run_fedavg(&twins, &cfg, 1, &mut NullSink).unwrap();
        assert!(a.params.to_set().max_abs_diff(&b.params.to_set()) < 1e-12);
    }

    #[test]
    fn zero_local_epochs_keep_the_initial_model() {
        let clients = tiny_clients(3);
        let cfg = FedConfig {
            local_epochs: 0,
            ..tiny_cfg()
        };
        let out = run_fedavg(&clients, &cfg, 2, &mut NullSink).unwrap();
        let (d, c) = dims(&clients).unwrap();
        let init = fresh_model(&cfg, d, c, 2, "fedavg-init", &[]);
        assert!(out.params.to_set().max_abs_diff(&init.to_set()) < 1e-12);
        assert_eq!(out.log.count(MessageKind::ParamUpload), 9);
        assert_eq!(out.log.count(MessageKind::ParamBroadcast), 9);
    }

    #[test]
    fn fedgm_logs_one_upload_and_one_report_per_round() {
        let clients = tiny_clients(3);
        let cfg = tiny_cfg();
        let mut rows = Vec::new();
        let out = run_fedgm(&clients, &cfg, 0, &mut rows).unwrap();
        assert_eq!(out.log.count(MessageKind::CondensedUpload), 3);
        assert_eq!(out.log.count(MessageKind::ClassGradientReport), 9);
        assert_eq!(out.log.count(MessageKind::ModelDownload), 3);
        assert_eq!(out.round_losses.len(), 3);
        assert_eq!(out.probes.iter().map(|p| p.0).collect::<Vec<_>>(), [2]);
        assert!(out.evaluation.overall.is_some());
        let phases: Vec<&str> = rows.iter().map(|r| r.phase.as_str()).collect();
        assert_eq!(phases.iter().filter(|&&p| p == "stage1").count(), 3);
        assert_eq!(phases.iter().filter(|&&p| p == "stage2").count(), 3);
        assert_eq!(phases.last(), Some(&"final"));
    }

    #[test]
    fn zero_rounds_train_on_the_stage1_graph() {
        let clients = tiny_clients(3);
        let cfg = FedConfig {
            rounds: 0,
            ..tiny_cfg()
        };
        let stage1 = run_stage1(&clients, &cfg, 0).unwrap();
        let out = run_fedgm_from_stage1(&clients, &stage1, &cfg, 0, &mut NullSink).unwrap();
        let initial: Vec<_> = stage1.iter().map(|s| s.condensed.clone()).collect();
        assert_eq!(out.server.features, integrate(&initial, cfg.delta).unwrap().features);
        assert_eq!(out.log.count(MessageKind::ClassGradientReport), 0);
    }

    #[test]
    fn runs_are_deterministic() {
        let clients = tiny_clients(3);
        let cfg = tiny_cfg();
        let a = run_fedgm(&clients, &cfg, 5, &mut NullSink).unwrap();
        let b = run_fedgm(&clients, &cfg, 5, &mut NullSink).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.round_losses, b.round_losses);
        let c = run_fedgm(&clients, &cfg, 6, &mut NullSink).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn local_training_scores_each_client_on_its_own_test_nodes() {
        let clients = tiny_clients(3);
        let out = run_local(&clients, &tiny_cfg(), 0, &mut NullSink).unwrap();
        assert_eq!(out.params.len(), 3);
        assert_eq!(out.evaluation.clients.len(), 3);
        for (c, acc) in clients.iter().zip(&out.evaluation.clients) {
            assert_eq!(acc.test_nodes, c.test_count());
        }
    }
}
