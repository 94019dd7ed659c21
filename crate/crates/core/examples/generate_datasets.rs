//! Generates every benchmark and prints its size and class balance.
//!
//!     cargo run --release --example generate_datasets -- [seed]

use gnnx::synth::{generate_cycliq, generate_named, CYCLIQ_GRAPHS, CYCLIQ_SIZES};

fn main() -> gnnx::Result<()> {
    let seed = std::env::args().nth(1).map_or(Ok(0), |s| s.parse()).expect("seed must be an integer");
    for name in ["ba-shapes", "ba-community", "tree-cycles", "tree-grid"] {
        let d = generate_named(name, seed)?;
        let labels = d.graph.labels().expect("node benchmarks are labelled");
        let mut counts = vec![0; d.num_classes];
        for &l in labels {
            counts[l] += 1;
        }
        println!(
            "{name:<13} nodes {:>5}  edges {:>5}  features {:>2}  motif edges {:>4}  classes {counts:?}",
            d.graph.n(),
            d.graph.num_edges(),
            d.graph.feature_dim(),
            d.graph.gt_motif_edges().len(),
        );
    }
    let c = generate_cycliq(seed, CYCLIQ_GRAPHS, CYCLIQ_SIZES)?;
    let positive = c.labels.iter().filter(|&&l| l == 1).count();
    let sizes = c.graphs.iter().map(|g| g.n());
    println!(
        "cycliq        graphs {}  with cycle {positive}  nodes {}..={}  split {}/{}/{}",
        c.graphs.len(),
        sizes.clone().min().unwrap_or(0),
        sizes.max().unwrap_or(0),
        c.split.train.len(),
        c.split.val.len(),
        c.split.test.len(),
    );
    Ok(())
}
