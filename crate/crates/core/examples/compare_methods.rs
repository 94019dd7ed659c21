//! AUC of the explainer against Grad, Att and random scores on one node
//! benchmark. Att needs its own attention model. The explainer runs with
//! and without the Laplacian term.
//!
//!     cargo run --release --example compare_methods -- [dataset] [max nodes]

use gnnx::baselines::Method;
use gnnx::diff::derived;
use gnnx::eval::{run_benchmark, BenchmarkConfig, NodeSet};
use gnnx::explain::ExplainerConfig;
use gnnx::gnn::{train_node_classifier, Arch, GnnConfig, GnnModel, TrainOptions};
use gnnx::synth::generate_named;

fn main() -> gnnx::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "tree-cycles".into());
    let max_nodes = args.next().map(|s| s.parse().expect("max nodes must be an integer"));
    let data = generate_named(&name, 0)?;
    let train = |arch| -> gnnx::Result<GnnModel> {
        let cfg = GnnConfig::new(data.graph.feature_dim(), data.num_classes).with_arch(arch);
        let mut m = GnnModel::new(cfg, &mut derived(0, "model"))?;
        train_node_classifier(&mut m, &data.graph, &data.split, &TrainOptions::default())?;
        Ok(m)
    };
    let gcn = train(Arch::Gcn)?;
    let att = train(Arch::Attention)?;
    let config = BenchmarkConfig {
        methods: Method::ALL.to_vec(),
        explainer: ExplainerConfig {
            max_edges: data.motif_size,
            ..ExplainerConfig::default()
        },
        nodes: NodeSet::All,
        max_nodes,
        seed: 0,
    };
    let report = run_benchmark(&data, &gcn, Some(&att), &config)?;
    println!("{name}: {} motif nodes", report.summary[0].evaluated + report.summary[0].skipped);
    for s in &report.summary {
        println!("  {:<6} AUC {:.3}  acc@k {:.3}", s.method.name(), s.mean_auc, s.mean_accuracy_at_k);
    }
    let no_laplacian = BenchmarkConfig {
        methods: vec![Method::Explainer],
        explainer: ExplainerConfig {
            laplacian_coef: 0.0,
            ..config.explainer.clone()
        },
        ..config
    };
    let s = &run_benchmark(&data, &gcn, None, &no_laplacian)?.summary[0];
    println!("  gnnx without Laplacian: AUC {:.3}  acc@k {:.3}", s.mean_auc, s.mean_accuracy_at_k);
    Ok(())
}
