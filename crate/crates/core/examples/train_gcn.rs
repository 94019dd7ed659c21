//! Trains a GCN and an attention model on one node benchmark, then writes
//! the GCN checkpoint.
//!
//!     cargo run --release --example train_gcn -- [dataset] [out.json]

use gnnx::diff::derived;
use gnnx::gnn::{train_node_classifier, Arch, GnnConfig, GnnModel, TrainOptions};
use gnnx::io::Checkpoint;
use gnnx::synth::generate_named;
use serde_json::json;

fn main() -> gnnx::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "ba-shapes".into());
    let out = args.next().unwrap_or_else(|| "gcn.json".into());
    let data = generate_named(&name, 0)?;
    let options = TrainOptions::default();
    let mut gcn = None;
    for arch in [Arch::Gcn, Arch::Attention] {
        let cfg = GnnConfig::new(data.graph.feature_dim(), data.num_classes).with_arch(arch);
        let mut model = GnnModel::new(cfg, &mut derived(0, "model"))?;
        let t = std::time::Instant::now();
        let r = train_node_classifier(&mut model, &data.graph, &data.split, &options)?;
        println!(
            "{arch:?}: train {:.3} val {:.3} test {:.3}, final loss {:.4} ({:.1?})",
            r.train_accuracy,
            r.val_accuracy,
            r.test_accuracy,
            r.losses.last().copied().unwrap_or(f64::NAN),
            t.elapsed()
        );
        if arch == Arch::Gcn {
            gcn = Some(model);
        }
    }
    let ck = Checkpoint::from_model(&gcn.expect("trained above"), json!({ "dataset": name, "training": options }));
    ck.save(out.as_ref())?;
    println!("wrote {out}");
    Ok(())
}
