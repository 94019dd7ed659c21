//! Aligns the explanations of several BA-Shapes nodes of one class and
//! prints the median prototype adjacency.
//!
//!     cargo run --release --example class_prototype -- [class]

use gnnx::diff::derived;
use gnnx::explain::ExplainerConfig;
use gnnx::gnn::{train_node_classifier, GnnConfig, GnnModel, TrainOptions};
use gnnx::graph::is_isomorphic_small;
use gnnx::prototype::{build_class_prototype, PrototypeConfig};
use gnnx::synth::generate_ba_shapes;

fn main() -> gnnx::Result<()> {
    let class = std::env::args().nth(1).map_or(2, |s| s.parse().expect("class must be an integer"));
    let data = generate_ba_shapes(0)?;
    let mut model = GnnModel::new(GnnConfig::new(data.graph.feature_dim(), data.num_classes), &mut derived(0, "model"))?;
    train_node_classifier(&mut model, &data.graph, &data.split, &TrainOptions::default())?;
    let config = PrototypeConfig {
        explainer: ExplainerConfig {
            max_edges: data.motif_size,
            ..ExplainerConfig::default()
        },
        ..PrototypeConfig::default()
    };
    let proto = build_class_prototype(&model, &data.graph, class, &config)?;
    println!("class {class}: reference node {}, members {:?}", proto.reference, proto.members);
    println!("alignment losses {:.3?}", proto.alignment_losses);
    for i in 0..proto.adjacency.rows() {
        println!("  {:>4}  {:.2?}", proto.nodes[i], proto.adjacency.row(i));
    }
    let (n, edges) = proto.thresholded_graph(0.5);
    let house = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (1, 4)];
    println!("above 0.5: {edges:?}; house-shaped: {}", is_isomorphic_small(n, &edges, 5, &house));
    Ok(())
}
