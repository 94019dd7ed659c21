use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ComputationGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMode {
    /// Keep the component that contains the explained node.
    NodeCentered,
    /// Keep the largest component (most nodes, then the smallest node id).
    LargestComponent,
}

/// Edges kept by thresholding, as indices into the computation graph's edge list.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub edges: Vec<usize>,
    pub threshold: f64,
    /// Even the lowest threshold kept fewer than the requested edges.
    pub undersized: bool,
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Edges of the chosen component among the edges scoring at least `t`.
fn component_edges(cg: &ComputationGraph, scores: &[f64], t: f64, mode: ExtractionMode) -> Vec<usize> {
    let m = cg.num_nodes();
    let active: Vec<usize> = (0..scores.len()).filter(|&e| scores[e] >= t).collect();
    let mut parent: Vec<usize> = (0..m).collect();
    let mut touched = BTreeSet::new();
    for &e in &active {
        let (u, v) = cg.edges()[e];
        touched.insert(u);
        touched.insert(v);
        let (a, b) = (find(&mut parent, u), find(&mut parent, v));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let root = match mode {
        ExtractionMode::NodeCentered => match cg.center() {
            Some(c) => find(&mut parent, c),
            None => return Vec::new(),
        },
        ExtractionMode::LargestComponent => {
            let mut size = vec![0usize; m];
            for &u in &touched {
                size[find(&mut parent, u)] += 1;
            }
            // Roots are the smallest id of their component, so the first
            // maximum is the tie-break winner.
            match (0..m).max_by(|&a, &b| size[a].cmp(&size[b]).then(b.cmp(&a))) {
                Some(r) if size[r] > 0 => r,
                _ => return Vec::new(),
            }
        }
    };
    active
        .into_iter()
        .filter(|&e| find(&mut parent, cg.edges()[e].0) == root)
        .collect()
}

/// Lowers the threshold through the distinct scores until the kept
/// component has at least `k` edges. Edges tied at the threshold are all kept.
pub fn extract_explanation_subgraph(
    cg: &ComputationGraph,
    scores: &[f64],
    k: usize,
    mode: ExtractionMode,
) -> Result<Selection> {
    if scores.len() != cg.edges().len() {
        return Err(Error::Shape(format!(
            "{} scores for {} edges",
            scores.len(),
            cg.edges().len()
        )));
    }
    if k == 0 {
        return Err(Error::Config("explanation size must be at least 1".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Config("edge scores contain NaN".into()));
    }
    if mode == ExtractionMode::NodeCentered && cg.center().is_none() {
        return Err(Error::Config("node-centered extraction needs a center".into()));
    }
    let mut levels = scores.to_vec();
    levels.sort_by(|a, b| b.total_cmp(a));
    levels.dedup();
    let mut last = Selection {
        edges: Vec::new(),
        threshold: f64::INFINITY,
        undersized: true,
    };
    for t in levels {
        let edges = component_edges(cg, scores, t, mode);
        if edges.len() >= k {
            return Ok(Selection {
                edges,
                threshold: t,
                undersized: false,
            });
        }
        last = Selection {
            edges,
            threshold: t,
            undersized: true,
        };
    }
    Ok(last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Matrix;
    use crate::graph::Graph;

    fn path(n: usize) -> Graph {
        Graph::new(n, (0..n - 1).map(|i| (i, i + 1)), Matrix::zeros(n, 1), None).unwrap()
    }

    #[test]
    fn two_best_edges_on_a_path() {
        let cg = path(4).computation_graph(1, 3).unwrap();
        let sel = extract_explanation_subgraph(&cg, &[0.9, 0.8, 0.1], 2, ExtractionMode::NodeCentered).unwrap();
        assert_eq!(sel.edges, vec![0, 1]);
        assert_eq!(sel.threshold, 0.8);
        assert!(!sel.undersized);
    }

    #[test]
    fn ties_are_all_kept() {
        let cg = path(5).computation_graph(2, 3).unwrap();
        let sel = extract_explanation_subgraph(&cg, &[0.5; 4], 1, ExtractionMode::NodeCentered).unwrap();
        assert_eq!(sel.edges.len(), 4);
    }

    #[test]
    fn too_few_edges_are_flagged() {
        let cg = path(3).computation_graph(0, 3).unwrap();
        let sel = extract_explanation_subgraph(&cg, &[0.3, 0.7], 5, ExtractionMode::NodeCentered).unwrap();
        assert_eq!(sel.edges, vec![0, 1]);
        assert!(sel.undersized);
    }

    #[test]
    fn detached_high_scores_are_skipped_for_nodes() {
        // 0-1-2-3-4 with the center at 0: the strong edge (3, 4) only joins
        // once the path reaches it.
        let cg = path(5).computation_graph(0, 4).unwrap();
        let sel = extract_explanation_subgraph(&cg, &[0.5, 0.2, 0.1, 0.9], 2, ExtractionMode::NodeCentered).unwrap();
        assert_eq!(sel.edges, vec![0, 1]);
        let sel = extract_explanation_subgraph(&cg, &[0.5, 0.2, 0.1, 0.9], 2, ExtractionMode::LargestComponent).unwrap();
        assert_eq!(sel.edges, vec![0, 1]);
        let sel = extract_explanation_subgraph(&cg, &[0.5, 0.2, 0.1, 0.9], 1, ExtractionMode::LargestComponent).unwrap();
        assert_eq!(sel.edges, vec![3]);
    }

    #[test]
    fn single_edge_graph() {
        let g = path(2);
        let cg = g.whole_computation_graph();
        let sel = extract_explanation_subgraph(&cg, &[0.01], 1, ExtractionMode::LargestComponent).unwrap();
        assert_eq!(sel.edges, vec![0]);
    }
}
