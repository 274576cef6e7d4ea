//! Regenerates the bundled demo graph under `data/demo/`.
//! Run manually after changing the generator:
//! `cargo test -p octa-forge --test gen_demo_data -- --ignored`

mod common;

use octa_forge::graph::{parse_graph, write_graph};

#[test]
#[ignore = "writes into the repository; run on demand"]
fn regenerate_demo_graph() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/demo");
    std::fs::create_dir_all(&dir).unwrap();
    let nodes = dir.join("nodes.csv");
    let edges = dir.join("edges.csv");
    let graph = common::build_demo_graph();
    write_graph(&graph, &nodes, &edges).unwrap();
    let back = parse_graph(&nodes, &edges).unwrap();
    assert_eq!(graph, back);
    println!(
        "wrote {} nodes / {} edges to {}",
        graph.nodes().len(),
        graph.edges().len(),
        dir.display()
    );
}

/// The committed files must stay in sync with the generator.
#[test]
fn bundled_demo_graph_matches_generator() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/demo");
    let bundled = parse_graph(&dir.join("nodes.csv"), &dir.join("edges.csv")).unwrap();
    assert_eq!(bundled, common::build_demo_graph());
}
