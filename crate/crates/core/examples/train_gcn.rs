// Train a two-layer GCN on a whole graph and report test accuracy.

use fedgm::graph::{sbm_generate, SbmSpec};
use fedgm::models::{evaluate_accuracy, train_gcn, GcnParams, OptimizerKind, Propagation, TrainConfig};
use fedgm::rng;

pub fn run_example() -> fedgm::Result<()> {
    let g = sbm_generate(&SbmSpec::default_fixture(), 0)?;
    let adj = Propagation::of_graph(&g);
    for optimizer in [OptimizerKind::Adam, OptimizerKind::Sgd] {
        let cfg = TrainConfig {
            epochs: 200,
            optimizer,
            lr: if optimizer == OptimizerKind::Sgd { 0.5 } else { 1e-2 },
            ..TrainConfig::default()
        };
        let init = GcnParams::init(g.num_features(), 64, g.num_classes(), &mut rng::stream(0, "example", &[]));
        let out = train_gcn(init, &adj, g.features(), g.labels(), &g.train_mask(), &cfg)?;
        let acc = evaluate_accuracy(&out.params, &adj, g.features(), g.labels(), &g.test_mask())?
            .unwrap_or(0.0);
        println!(
            "{optimizer:?}: loss {:.3} -> {:.3}, test accuracy {:.3}",
            out.losses[0],
            out.losses[out.losses.len() - 1],
            acc
        );
        assert!(out.losses[out.losses.len() - 1] < out.losses[0]);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> fedgm::Result<()> {
    run_example()
}
