//! Seeded benchmark generators with planted motifs.
//!
//! Node-classification sets attach small motifs (houses, hexagons, 3x3
//! grids) to a base graph; a node's label is its role in the motif, so the
//! correct explanation of a motif node is its motif. `cycliq` is a
//! graph-classification set of random trees, half of which carry a planted
//! 6-cycle.

use std::collections::BTreeSet;
use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::diff::{derived, Matrix, SeededRng};
use crate::error::{Error, Result};
use crate::gnn::Split;
use crate::graph::{canonical, Edge, Graph};

pub const BA_ATTACHMENT: usize = 5;
pub const BA_BASE_NODES: usize = 300;
pub const TREE_DEPTH: u32 = 8;
pub const NUM_MOTIFS: usize = 80;
pub const PERTURBATION_FRACTION: f64 = 0.1;
pub const COMMUNITY_FEATURE_DIM: usize = 10;
pub const COMMUNITY_BRIDGE_EVERY: usize = 40;

/// House role ids; base nodes have role 0.
pub const ROLE_TOP: usize = 1;
pub const ROLE_MIDDLE: usize = 2;
pub const ROLE_BOTTOM: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MotifKind {
    House,
    Cycle6,
    Grid3x3,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MotifSpec {
    pub kind: MotifKind,
    pub edges: Vec<Edge>,
    pub role_of_node: Vec<usize>,
}

impl MotifSpec {
    pub fn new(kind: MotifKind) -> Self {
        match kind {
            // 0 top, 1-2 middle, 3-4 bottom
            MotifKind::House => Self {
                kind,
                edges: vec![(0, 1), (0, 2), (1, 2), (1, 3), (2, 4), (3, 4)],
                role_of_node: vec![ROLE_TOP, ROLE_MIDDLE, ROLE_MIDDLE, ROLE_BOTTOM, ROLE_BOTTOM],
            },
            MotifKind::Cycle6 => Self {
                kind,
                edges: (0..6).map(|i| canonical(i, (i + 1) % 6)).collect(),
                role_of_node: vec![1; 6],
            },
            MotifKind::Grid3x3 => {
                let mut edges = Vec::new();
                for r in 0..3 {
                    for c in 0..3 {
                        let v = r * 3 + c;
                        if c < 2 {
                            edges.push((v, v + 1));
                        }
                        if r < 2 {
                            edges.push((v, v + 3));
                        }
                    }
                }
                edges.sort_unstable();
                Self {
                    kind,
                    edges,
                    role_of_node: vec![1; 9],
                }
            }
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.role_of_node.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }
}

/// A generated node-classification benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub seed: u64,
    pub graph: Graph,
    pub split: Split,
    pub num_classes: usize,
    /// Ground-truth explanation size used when extracting subgraphs.
    pub motif_size: usize,
    /// Feature dimension that carries the label signal, if any.
    pub informative_feature: Option<usize>,
    pub meta: Value,
}

/// A generated graph-classification benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphDataset {
    pub name: String,
    pub seed: u64,
    pub graphs: Vec<Graph>,
    pub labels: Vec<usize>,
    pub split: Split,
    pub num_classes: usize,
    pub motif_size: usize,
    pub meta: Value,
}

/// Random 80/10/10 split of `0..n`.
pub fn random_split(n: usize, rng: &mut SeededRng) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    let mut train = idx[..n_train].to_vec();
    let mut val = idx[n_train..n_train + n_val].to_vec();
    let mut test = idx[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Split { train, val, test }
}

/// Preferential-attachment graph. Starts from a star on `m + 1` nodes; each
/// later node links to `m` distinct existing nodes drawn proportionally to
/// degree.
pub fn barabasi_albert(n: usize, m: usize, rng: &mut SeededRng) -> Result<Vec<Edge>> {
    if m == 0 || n <= m {
        return Err(Error::Config(format!("need 0 < m < n, got m={m}, n={n}")));
    }
    let mut edges: Vec<Edge> = (1..=m).map(|v| (0, v)).collect();
    // every node appears once per incident edge
    let mut ends: Vec<usize> = edges.iter().flat_map(|&(u, v)| [u, v]).collect();
    for v in m + 1..n {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            targets.insert(ends[rng.gen_range(0..ends.len())]);
        }
        for t in targets {
            edges.push((t, v));
            ends.push(t);
            ends.push(v);
        }
    }
    Ok(edges)
}

/// Complete binary tree with `depth + 1` levels in heap order.
pub fn balanced_binary_tree(depth: u32) -> (usize, Vec<Edge>) {
    let n = (1usize << (depth + 1)) - 1;
    let edges = (1..n).map(|v| ((v - 1) / 2, v)).collect();
    (n, edges)
}

/// Uniform random recursive tree: node `v` links to a uniform earlier node.
pub fn random_tree(n: usize, rng: &mut SeededRng) -> Vec<Edge> {
    (1..n).map(|v| (rng.gen_range(0..v), v)).collect()
}

struct Planted {
    n: usize,
    edges: Vec<Edge>,
    gt: Vec<Edge>,
    roles: Vec<usize>,
}

/// Appends `count` copies of `motif`, each joined to a random base node by
/// one edge from a random motif node. Attachment edges are not ground truth.
fn attach_motifs(base_n: usize, base_edges: Vec<Edge>, motif: &MotifSpec, count: usize, rng: &mut SeededRng) -> Planted {
    let mut edges = base_edges;
    let mut gt = Vec::with_capacity(count * motif.num_edges());
    let mut roles = vec![0; base_n];
    let mut n = base_n;
    for _ in 0..count {
        for &(a, b) in &motif.edges {
            edges.push((n + a, n + b));
            gt.push((n + a, n + b));
        }
        roles.extend(&motif.role_of_node);
        let inside = n + rng.gen_range(0..motif.num_nodes());
        let base = rng.gen_range(0..base_n);
        edges.push(canonical(base, inside));
        n += motif.num_nodes();
    }
    Planted { n, edges, gt, roles }
}

/// Adds `count` edges drawn uniformly among absent node pairs.
pub fn perturb(n: usize, edges: &mut Vec<Edge>, count: usize, rng: &mut SeededRng) -> Result<()> {
    let mut present: BTreeSet<Edge> = edges.iter().map(|&(u, v)| canonical(u, v)).collect();
    let capacity = n * n.saturating_sub(1) / 2;
    if present.len() + count > capacity {
        return Err(Error::Config(format!("cannot add {count} edges to a graph with {n} nodes")));
    }
    let mut added = 0;
    while added < count {
        let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if u == v {
            continue;
        }
        if present.insert(canonical(u, v)) {
            edges.push(canonical(u, v));
            added += 1;
        }
    }
    Ok(())
}

fn perturbation_count(n: usize) -> usize {
    (PERTURBATION_FRACTION * n as f64).floor() as usize
}

fn motif_dataset(
    base_n: usize,
    base_edges: Vec<Edge>,
    kind: MotifKind,
    rng: &mut SeededRng,
) -> Result<(Planted, usize)> {
    let motif = MotifSpec::new(kind);
    let mut planted = attach_motifs(base_n, base_edges, &motif, NUM_MOTIFS, rng);
    let k = perturbation_count(planted.n);
    perturb(planted.n, &mut planted.edges, k, rng)?;
    Ok((planted, k))
}

fn shapes_graph(rng: &mut SeededRng) -> Result<(Planted, usize)> {
    let base = barabasi_albert(BA_BASE_NODES, BA_ATTACHMENT, rng)?;
    motif_dataset(BA_BASE_NODES, base, MotifKind::House, rng)
}

/// 300-node BA base with 80 houses; labels are house roles.
pub fn generate_ba_shapes(seed: u64) -> Result<DatasetBundle> {
    let mut rng = derived(seed, "ba-shapes");
    let (p, perturbed) = shapes_graph(&mut rng)?;
    let labels = p.roles.clone();
    let graph = Graph::new(p.n, p.edges, Matrix::filled(p.n, 1, 1.0), Some(labels))?
        .with_roles(p.roles)?
        .with_ground_truth(p.gt)?;
    let split = random_split(graph.n(), &mut rng);
    Ok(DatasetBundle {
        name: "ba-shapes".into(),
        seed,
        split,
        num_classes: 4,
        motif_size: 6,
        informative_feature: None,
        meta: json!({
            "generator": "ba-shapes",
            "seed": seed,
            "base_nodes": BA_BASE_NODES,
            "attachment": BA_ATTACHMENT,
            "motifs": NUM_MOTIFS,
            "perturbation_edges": perturbed,
        }),
        graph,
    })
}

/// Two BA-Shapes graphs joined by one random base-to-base edge per 40
/// nodes. Labels are `role + 4 * community`; feature 0 has mean 0 in the
/// first community and 1 in the second, all others are standard normal.
pub fn generate_ba_community(seed: u64) -> Result<DatasetBundle> {
    let mut rng = derived(seed, "ba-community");
    let (a, pa) = shapes_graph(&mut rng)?;
    let (b, pb) = shapes_graph(&mut rng)?;
    let offset = a.n;
    let n = a.n + b.n;
    let mut edges = a.edges;
    edges.extend(b.edges.iter().map(|&(u, v)| (u + offset, v + offset)));
    let mut gt = a.gt;
    gt.extend(b.gt.iter().map(|&(u, v)| (u + offset, v + offset)));
    let bridges = n / COMMUNITY_BRIDGE_EVERY;
    let mut present: BTreeSet<Edge> = edges.iter().copied().collect();
    let mut added = 0;
    while added < bridges {
        let u = rng.gen_range(0..BA_BASE_NODES);
        let v = offset + rng.gen_range(0..BA_BASE_NODES);
        if present.insert((u, v)) {
            edges.push((u, v));
            added += 1;
        }
    }
    let mut roles = a.roles;
    roles.extend(&b.roles);
    let labels: Vec<usize> = roles
        .iter()
        .enumerate()
        .map(|(i, &r)| r + if i >= offset { 4 } else { 0 })
        .collect();
    let features = Matrix::from_fn(n, COMMUNITY_FEATURE_DIM, |i, k| {
        let z: f64 = rng.sample(StandardNormal);
        if k == 0 && i >= offset {
            z + 1.0
        } else {
            z
        }
    });
    let graph = Graph::new(n, edges, features, Some(labels))?
        .with_roles(roles)?
        .with_ground_truth(gt)?;
    let split = random_split(n, &mut rng);
    Ok(DatasetBundle {
        name: "ba-community".into(),
        seed,
        split,
        num_classes: 8,
        motif_size: 6,
        informative_feature: Some(0),
        meta: json!({
            "generator": "ba-community",
            "seed": seed,
            "base_nodes": BA_BASE_NODES,
            "attachment": BA_ATTACHMENT,
            "motifs_per_community": NUM_MOTIFS,
            "perturbation_edges": [pa, pb],
            "bridge_edges": bridges,
            "feature_dim": COMMUNITY_FEATURE_DIM,
            "informative_feature": 0,
            "mean_shift": 1.0,
        }),
        graph,
    })
}

fn tree_dataset(name: &str, seed: u64, kind: MotifKind) -> Result<DatasetBundle> {
    let mut rng = derived(seed, name);
    let (base_n, base) = balanced_binary_tree(TREE_DEPTH);
    let (p, perturbed) = motif_dataset(base_n, base, kind, &mut rng)?;
    let labels: Vec<usize> = p.roles.iter().map(|&r| usize::from(r > 0)).collect();
    let graph = Graph::new(p.n, p.edges, Matrix::filled(p.n, 1, 1.0), Some(labels))?
        .with_roles(p.roles)?
        .with_ground_truth(p.gt)?;
    let split = random_split(graph.n(), &mut rng);
    Ok(DatasetBundle {
        name: name.into(),
        seed,
        split,
        num_classes: 2,
        motif_size: MotifSpec::new(kind).num_edges(),
        informative_feature: None,
        meta: json!({
            "generator": name,
            "seed": seed,
            "tree_depth": TREE_DEPTH,
            "base_nodes": base_n,
            "motif": kind,
            "motifs": NUM_MOTIFS,
            "perturbation_edges": perturbed,
        }),
        graph,
    })
}

/// 511-node balanced binary tree with 80 hexagons; label 1 marks cycle nodes.
pub fn generate_tree_cycles(seed: u64) -> Result<DatasetBundle> {
    tree_dataset("tree-cycles", seed, MotifKind::Cycle6)
}

/// 511-node balanced binary tree with 80 3x3 grids; label 1 marks grid nodes.
pub fn generate_tree_grid(seed: u64) -> Result<DatasetBundle> {
    tree_dataset("tree-grid", seed, MotifKind::Grid3x3)
}

/// Node-classification benchmark by name.
pub fn generate_named(name: &str, seed: u64) -> Result<DatasetBundle> {
    match name {
        "ba-shapes" => generate_ba_shapes(seed),
        "ba-community" => generate_ba_community(seed),
        "tree-cycles" => generate_tree_cycles(seed),
        "tree-grid" => generate_tree_grid(seed),
        other => Err(Error::Config(format!("unknown node-classification dataset {other:?}"))),
    }
}

pub const CYCLIQ_GRAPHS: usize = 200;
pub const CYCLIQ_SIZES: RangeInclusive<usize> = 20..=30;

/// `n_graphs` random trees with sizes drawn from `size_range`. Odd-indexed
/// graphs (label 1) replace six of their nodes by a hexagon hung from the
/// tree by one edge; the hexagon edges are the ground truth.
pub fn generate_cycliq(seed: u64, n_graphs: usize, size_range: RangeInclusive<usize>) -> Result<GraphDataset> {
    if *size_range.start() < 7 || size_range.is_empty() {
        return Err(Error::Config("cycliq graphs need at least 7 nodes".into()));
    }
    if !n_graphs.is_multiple_of(2) {
        return Err(Error::Config("cycliq needs an even number of graphs".into()));
    }
    let mut rng = derived(seed, "cycliq");
    let cycle = MotifSpec::new(MotifKind::Cycle6);
    let mut graphs = Vec::with_capacity(n_graphs);
    let mut labels = Vec::with_capacity(n_graphs);
    for i in 0..n_graphs {
        let n = rng.gen_range(size_range.clone());
        let label = i % 2;
        let (edges, gt, roles) = if label == 0 {
            (random_tree(n, &mut rng), Vec::new(), vec![0; n])
        } else {
            let tree_n = n - cycle.num_nodes();
            let p = attach_motifs(tree_n, random_tree(tree_n, &mut rng), &cycle, 1, &mut rng);
            (p.edges, p.gt, p.roles)
        };
        let graph = Graph::new(n, edges, Matrix::filled(n, 1, 1.0), None)?
            .with_roles(roles)?
            .with_ground_truth(gt)?;
        graphs.push(graph);
        labels.push(label);
    }
    let split = random_split(n_graphs, &mut rng);
    Ok(GraphDataset {
        name: "cycliq".into(),
        seed,
        graphs,
        labels,
        split,
        num_classes: 2,
        motif_size: cycle.num_edges(),
        meta: json!({
            "generator": "cycliq",
            "seed": seed,
            "graphs": n_graphs,
            "min_size": size_range.start(),
            "max_size": size_range.end(),
        }),
    })
}
