//! Graph classification on cycliq: train, then explain graphs that contain
//! a cycle and check how much of it the largest explained component covers.
//!
//!     cargo run --release --example explain_graph

use gnnx::diff::{derived, seeded};
use gnnx::explain::{explain_graph, ExplainerConfig};
use gnnx::gnn::{train_graph_classifier, GnnConfig, GnnModel, Readout, TrainOptions};
use gnnx::synth::{generate_cycliq, CYCLIQ_GRAPHS, CYCLIQ_SIZES};

fn main() -> gnnx::Result<()> {
    let data = generate_cycliq(0, CYCLIQ_GRAPHS, CYCLIQ_SIZES)?;
    let cfg = GnnConfig::new(data.graphs[0].feature_dim(), data.num_classes).with_readout(Readout::Graph);
    let mut model = GnnModel::new(cfg, &mut derived(0, "model"))?;
    let r = train_graph_classifier(&mut model, &data.graphs, &data.labels, &data.split, &TrainOptions::default())?;
    println!("test accuracy {:.3}", r.test_accuracy);

    let config = ExplainerConfig {
        max_edges: data.motif_size,
        ..ExplainerConfig::default()
    };
    for &g in data.split.test.iter().filter(|&&g| data.labels[g] == 1).take(5) {
        let graph = &data.graphs[g];
        let e = explain_graph(&model, graph, &config, &mut seeded(g as u64))?;
        let covered = e.selected_edges.iter().filter(|x| graph.gt_motif_edges().contains(x)).count();
        println!(
            "graph {g:>3}: {} nodes, cycle edges covered {covered}/{}, selected {:?}",
            graph.n(),
            graph.gt_motif_edges().len(),
            e.selected_edges
        );
    }
    Ok(())
}
