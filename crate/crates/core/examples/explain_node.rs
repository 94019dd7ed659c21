//! Explains one motif node on BA-Community: edge mask, feature mask, AUC
//! against the planted house and the edges a threshold keeps.
//!
//!     cargo run --release --example explain_node -- [node]

use gnnx::baselines::ImportanceScores;
use gnnx::diff::{derived, seeded};
use gnnx::eval::explanation_auc;
use gnnx::explain::{explain_node, ExplainerConfig};
use gnnx::gnn::{forward_graph, train_node_classifier, GnnConfig, GnnModel, TrainOptions};
use gnnx::synth::generate_ba_community;

fn main() -> gnnx::Result<()> {
    let data = generate_ba_community(0)?;
    let mut model = GnnModel::new(GnnConfig::new(data.graph.feature_dim(), data.num_classes), &mut derived(0, "model"))?;
    let r = train_node_classifier(&mut model, &data.graph, &data.split, &TrainOptions::default())?;
    println!("GCN test accuracy {:.3}", r.test_accuracy);

    let roles = data.graph.node_roles().expect("roles are planted");
    let labels = data.graph.labels().expect("labels are planted");
    let probs = forward_graph(&model, &data.graph)?.probabilities;
    // Default: the first motif node the model classifies correctly.
    let v = match std::env::args().nth(1) {
        Some(s) => s.parse().expect("node must be an integer"),
        None => (0..data.graph.n())
            .find(|&v| roles[v] > 0 && probs.argmax_row(v) == labels[v])
            .expect("some motif node is classified correctly"),
    };
    let config = ExplainerConfig {
        max_edges: data.motif_size,
        ..ExplainerConfig::default()
    };
    let e = explain_node(&model, &data.graph, v, &config, &mut seeded(0))?;
    let gt = data.graph.motif_edges_of(v);
    println!(
        "node {v} (label {}): class {} kept after masking: {}",
        labels[v],
        e.target,
        e.predicted_after == e.target
    );
    println!("computation graph {} nodes, {} edges", e.nodes.len(), e.edges.len());
    println!("edge AUC against the motif {:.3}", explanation_auc(&ImportanceScores::from(&e), &gt).unwrap_or(f64::NAN));
    for edge in &e.selected_edges {
        let mark = if gt.contains(edge) { "motif" } else { "" };
        println!("  {edge:?} {mark}");
    }
    let top = e.selected_features.first().copied();
    println!(
        "top feature {top:?} (informative dimension {:?}); scores {:.2?}",
        data.informative_feature, e.feature_scores
    );
    println!("objective {:.4} after {} steps", e.objective.total, e.losses.len());
    Ok(())
}
