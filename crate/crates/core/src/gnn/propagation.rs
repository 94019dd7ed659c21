use std::ops::Range;
use std::sync::Arc;

use crate::diff::{Matrix, SparsePattern};
use crate::error::{Error, Result};
use crate::graph::{ComputationGraph, Edge, Graph};

/// Attention needs the self-loop entries inside the pattern.
#[derive(Clone, Debug)]
pub(crate) struct LoopedPattern {
    pub pattern: Arc<SparsePattern>,
    /// For each entry, the off-diagonal entry whose weight it carries, or
    /// `nnz` (a constant 1) for a self-loop.
    pub weight_source: Arc<Vec<usize>>,
    pub receivers: Arc<Vec<usize>>,
    pub senders: Arc<Vec<usize>>,
}

impl LoopedPattern {
    fn build(base: &SparsePattern, self_loops: bool) -> Result<Self> {
        let n = base.n();
        let mut entries: Vec<(usize, usize)> = base.entries().collect();
        if self_loops {
            entries.extend((0..n).map(|i| (i, i)));
        }
        let pattern = SparsePattern::from_entries(n, entries)?;
        let weight_source = pattern
            .entries()
            .map(|(r, c)| if r == c { base.nnz() } else { base.find(r, c).expect("entry exists") })
            .collect();
        Ok(Self {
            receivers: Arc::new(pattern.entry_rows().to_vec()),
            senders: Arc::new(pattern.entry_cols().to_vec()),
            pattern: Arc::new(pattern),
            weight_source: Arc::new(weight_source),
        })
    }
}

/// Message-passing structure of a graph: the off-diagonal sparsity pattern,
/// the undirected edge behind each entry and the degree contributed by
/// edges outside the structure.
#[derive(Clone, Debug)]
pub struct Propagation {
    edges: Vec<Edge>,
    pattern: Arc<SparsePattern>,
    entry_edge: Arc<Vec<usize>>,
    extra_degree: Vec<f64>,
    looped: LoopedPattern,
    unlooped: LoopedPattern,
}

impl Propagation {
    /// `edges` are undirected `(u, v)` pairs with `u < v`, without duplicates.
    pub fn new(n: usize, edges: &[Edge], extra_degree: Vec<f64>) -> Result<Self> {
        if extra_degree.len() != n {
            return Err(Error::Shape(format!(
                "extra degree has {} entries for {n} nodes",
                extra_degree.len()
            )));
        }
        for &(u, v) in edges {
            if u >= v {
                return Err(Error::InvalidGraph(format!("edge ({u}, {v}) is not canonical")));
            }
        }
        let mut order: Vec<usize> = (0..edges.len()).collect();
        order.sort_unstable_by_key(|&i| edges[i]);
        let sorted: Vec<Edge> = order.iter().map(|&i| edges[i]).collect();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph("duplicate edge".into()));
        }
        let pattern = SparsePattern::from_undirected(n, edges, false)?;
        let entry_edge = pattern
            .entries()
            .map(|(r, c)| {
                let k = sorted.binary_search(&(r.min(c), r.max(c))).expect("edge exists");
                order[k]
            })
            .collect();
        Ok(Self {
            edges: edges.to_vec(),
            looped: LoopedPattern::build(&pattern, true)?,
            unlooped: LoopedPattern::build(&pattern, false)?,
            pattern: Arc::new(pattern),
            entry_edge: Arc::new(entry_edge),
            extra_degree,
        })
    }

    pub fn from_graph(graph: &Graph) -> Result<Self> {
        Self::new(graph.n(), graph.edges(), vec![0.0; graph.n()])
    }

    pub fn from_computation_graph(cg: &ComputationGraph) -> Result<Self> {
        Self::new(cg.num_nodes(), cg.edges(), cg.external_degree().to_vec())
    }

    /// Disjoint union of several graphs, with the node range of each.
    pub fn batch(graphs: &[&Graph]) -> Result<(Self, Vec<Range<usize>>)> {
        let mut edges = Vec::new();
        let mut segments = Vec::with_capacity(graphs.len());
        let mut offset = 0;
        for g in graphs {
            edges.extend(g.edges().iter().map(|&(u, v)| (u + offset, v + offset)));
            segments.push(offset..offset + g.n());
            offset += g.n();
        }
        Ok((Self::new(offset, &edges, vec![0.0; offset])?, segments))
    }

    pub fn n(&self) -> usize {
        self.pattern.n()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn pattern(&self) -> &Arc<SparsePattern> {
        &self.pattern
    }

    /// For every pattern entry, the index of its undirected edge.
    pub fn entry_edge(&self) -> &Arc<Vec<usize>> {
        &self.entry_edge
    }

    pub fn extra_degree(&self) -> &[f64] {
        &self.extra_degree
    }

    pub(crate) fn looped(&self, self_loops: bool) -> &LoopedPattern {
        if self_loops {
            &self.looped
        } else {
            &self.unlooped
        }
    }

    /// Expands one weight per undirected edge to one per pattern entry.
    pub fn entry_weights(&self, edge_weights: &[f64]) -> Result<Matrix> {
        if edge_weights.len() != self.edges.len() {
            return Err(Error::Shape(format!(
                "{} edge weights for {} edges",
                edge_weights.len(),
                self.edges.len()
            )));
        }
        if let Some((k, &w)) = edge_weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
            let (row, col) = self.edges[k];
            return Err(Error::NegativeWeight { row, col, value: w });
        }
        Ok(Matrix::column(
            self.entry_edge.iter().map(|&k| edge_weights[k]).collect(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entries_map_back_to_caller_edges() {
        let edges = [(1, 2), (0, 1), (0, 3)];
        let p = Propagation::new(4, &edges, vec![0.0; 4]).unwrap();
        let w = p.entry_weights(&[10.0, 20.0, 30.0]).unwrap();
        for (e, (r, c)) in p.pattern().entries().enumerate() {
            let k = edges.iter().position(|&x| x == (r.min(c), r.max(c))).unwrap();
            assert_eq!(w.get(e, 0), [10.0, 20.0, 30.0][k]);
        }
    }

    #[test]
    fn batch_offsets_segments() {
        let a = Graph::new(2, [(0, 1)], Matrix::zeros(2, 1), None).unwrap();
        let b = Graph::new(3, [(0, 2)], Matrix::zeros(3, 1), None).unwrap();
        let (p, seg) = Propagation::batch(&[&a, &b]).unwrap();
        assert_eq!(seg, vec![0..2, 2..5]);
        assert_eq!(p.edges(), &[(0, 1), (2, 4)]);
    }
}
