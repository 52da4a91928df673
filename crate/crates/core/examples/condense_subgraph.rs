// Condense one client's subgraph by one-step gradient matching, then
// compare a GCN trained on the condensed graph with one trained on the
// real subgraph.

use fedgm::condense::{condense_local, CondenseConfig};
use fedgm::federation::build_clients;
use fedgm::graph::{louvain_partition, sbm_generate, SbmSpec};
use fedgm::models::{densify_for_training, evaluate_accuracy, train_gcn, GcnParams, Propagation, TrainConfig};
use fedgm::rng;

pub fn run_example() -> fedgm::Result<()> {
    let g = sbm_generate(&SbmSpec::default_fixture(), 0)?;
    let clients = build_clients(&g, &louvain_partition(&g, 10, 0)?)?;
    let client = &clients[0];
    let local = client.graph();
    let cfg = CondenseConfig {
        epochs: 300,
        hidden: 64,
        ..CondenseConfig::default()
    };
    let out = condense_local(local, client.id, &cfg, 0)?;
    let c = &out.condensed;
    let first: f64 = out.losses[..20].iter().sum::<f64>() / 20.0;
    let last: f64 = out.losses[out.losses.len() - 20..].iter().sum::<f64>() / 20.0;
    println!(
        "client {}: {} real nodes -> {} condensed, labels {:?}",
        client.id,
        local.num_nodes(),
        c.num_nodes(),
        c.class_histogram()
    );
    println!("match loss {first:.3} -> {last:.3}, kept epoch {}", out.selected_epoch);

    let train = TrainConfig::default();
    let init = || GcnParams::init(local.num_features(), 64, local.num_classes(), &mut rng::stream(0, "example", &[]));
    let cond_adj = Propagation::Dense(densify_for_training(&c.adjacency()?, 0.5)?);
    let on_condensed = train_gcn(init(), &cond_adj, &c.features, &c.labels, &vec![true; c.num_nodes()], &train)?;
    let on_real = train_gcn(init(), client.propagation(), local.features(), local.labels(), &local.train_mask(), &train)?;
    for (name, p) in [("condensed", &on_condensed.params), ("real", &on_real.params)] {
        let acc = evaluate_accuracy(p, client.propagation(), local.features(), local.labels(), &local.test_mask())?;
        println!("trained on {name}: local test accuracy {:.3}", acc.unwrap_or(0.0));
    }
    assert!(last < first);
    Ok(())
}

#[allow(dead_code)]
fn main() -> fedgm::Result<()> {
    run_example()
}
