// Condensation-based federation against parameter averaging and
// isolated training, on the small benchmark graph.

use fedgm::federation::{build_clients, run_fedavg, run_fedgm, run_local, FedConfig, MessageKind, NullSink};
use fedgm::graph::{louvain_partition, sbm_generate, SbmSpec};

pub fn run_example() -> fedgm::Result<()> {
    let g = sbm_generate(&SbmSpec::tiny_fixture(), 0)?;
    let clients = build_clients(&g, &louvain_partition(&g, 3, 0)?)?;
    let cfg = FedConfig {
        stage1_epochs: 200,
        rounds: 10,
        hidden: 64,
        probe_every: 5,
        ..FedConfig::default()
    };

    let fedgm = run_fedgm(&clients, &cfg, 0, &mut NullSink)?;
    let fedavg = run_fedavg(&clients, &cfg, 0, &mut NullSink)?;
    let local = run_local(&clients, &cfg, 0, &mut NullSink)?;
    for (name, acc) in [
        ("fedgm", fedgm.evaluation.overall),
        ("fedavg", fedavg.evaluation.overall),
        ("local-only", local.evaluation.overall),
    ] {
        println!("{name:>10}: overall test accuracy {:.3}", acc.unwrap_or(0.0));
    }
    println!("fedgm probes {:?}", fedgm.probes);
    println!(
        "fedgm traffic up/down {:?} bytes in {} messages",
        fedgm.log.total_bytes(),
        fedgm.log.records().len()
    );
    println!(
        "fedavg traffic up/down {:?} bytes in {} messages",
        fedavg.log.total_bytes(),
        fedavg.log.records().len()
    );
    assert_eq!(fedgm.log.count(MessageKind::CondensedUpload), clients.len());
    assert_eq!(fedavg.log.count(MessageKind::ParamUpload), cfg.rounds * clients.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> fedgm::Result<()> {
    run_example()
}
