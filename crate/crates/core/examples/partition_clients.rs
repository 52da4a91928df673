// Generate the planted-partition benchmark graph and split it into
// clients with Louvain.

use fedgm::graph::{louvain_communities, louvain_partition, modularity, sbm_generate, SbmSpec, Split};

pub fn run_example() -> fedgm::Result<()> {
    let g = sbm_generate(&SbmSpec::default_fixture(), 0)?;
    println!(
        "graph: {} nodes, {} edges, {} features, {} classes",
        g.num_nodes(),
        g.num_edges(),
        g.num_features(),
        g.num_classes()
    );
    let (communities, trace) = louvain_communities(&g, 0);
    println!("louvain modularity per pass: {trace:.3?}");

    let parts = louvain_partition(&g, 10, 0)?;
    println!("10-client partition modularity {:.3}", modularity(&g, &parts.client_of));
    let members = parts.members();
    for (k, nodes) in members.iter().enumerate() {
        let mut hist = vec![0; g.num_classes()];
        for &v in nodes {
            if g.splits()[v] == Split::Train {
                hist[g.labels()[v]] += 1;
            }
        }
        println!("client {k}: {} nodes, train labels {hist:?}", nodes.len());
    }
    assert_eq!(members.len(), 10);
    assert!(communities.len() == g.num_nodes());
    Ok(())
}

#[allow(dead_code)]
fn main() -> fedgm::Result<()> {
    run_example()
}
