//! Undirected graphs, computation-graph extraction, Laplacians and
//! connectivity helpers.

use std::collections::{BTreeSet, VecDeque};

use crate::diff::Matrix;
use crate::error::{Error, Result};

/// Undirected edge stored as `(smaller id, larger id)`.
pub type Edge = (usize, usize);

#[inline]
pub fn canonical(u: usize, v: usize) -> Edge {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Undirected simple graph with per-node features and optional annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<usize>>,
    features: Matrix,
    labels: Option<Vec<usize>>,
    node_roles: Option<Vec<usize>>,
    gt_motif_edges: BTreeSet<Edge>,
}

impl Graph {
    /// Validates and normalizes the input: symmetric duplicates are merged,
    /// self-loops and out-of-range endpoints are errors. A feature matrix
    /// with zero columns stands for `d = 0`.
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Matrix,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n {
                return Err(Error::NodeOutOfRange { node: u, n });
            }
            if v >= n {
                return Err(Error::NodeOutOfRange { node: v, n });
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            set.insert(canonical(u, v));
        }
        let features = if features.cols() == 0 {
            Matrix::zeros(n, 0)
        } else if features.rows() != n {
            return Err(Error::Shape(format!(
                "feature matrix has {} rows for {} nodes",
                features.rows(),
                n
            )));
        } else {
            features
        };
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Shape(format!("{} labels for {} nodes", l.len(), n)));
            }
        }
        let edges: Vec<Edge> = set.into_iter().collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(u, v) in &edges {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        neighbors.iter_mut().for_each(|l| l.sort_unstable());
        Ok(Self {
            n,
            edges,
            neighbors,
            features,
            labels,
            node_roles: None,
            gt_motif_edges: BTreeSet::new(),
        })
    }

    pub fn with_roles(mut self, roles: Vec<usize>) -> Result<Self> {
        if roles.len() != self.n {
            return Err(Error::Shape(format!(
                "{} roles for {} nodes",
                roles.len(),
                self.n
            )));
        }
        self.node_roles = Some(roles);
        Ok(self)
    }

    pub fn with_ground_truth(mut self, gt: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (u, v) in gt {
            let e = canonical(u, v);
            if !self.has_edge(e.0, e.1) {
                return Err(Error::InvalidGraph(format!(
                    "ground-truth edge {e:?} is not an edge of the graph"
                )));
            }
            set.insert(e);
        }
        self.gt_motif_edges = set;
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::Shape(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.n
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn node_roles(&self) -> Option<&[usize]> {
        self.node_roles.as_deref()
    }

    pub fn gt_motif_edges(&self) -> &BTreeSet<Edge> {
        &self.gt_motif_edges
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && self.neighbors[u].binary_search(&v).is_ok()
    }

    /// Breadth-first distances from `source`, `None` beyond `max_hops`.
    pub fn bfs_distances(&self, source: usize, max_hops: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[source] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].unwrap();
            if du == max_hops {
                continue;
            }
            for &w in &self.neighbors[u] {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// The `hops`-hop neighbourhood of `v` with every edge of the graph
    /// among the included nodes. Local indices follow ascending global id.
    pub fn computation_graph(&self, v: usize, hops: usize) -> Result<ComputationGraph> {
        if v >= self.n {
            return Err(Error::NodeOutOfRange { node: v, n: self.n });
        }
        if hops == 0 {
            return Err(Error::Config("computation graph needs at least one hop".into()));
        }
        let dist = self.bfs_distances(v, hops);
        let nodes: Vec<usize> = (0..self.n).filter(|&u| dist[u].is_some()).collect();
        let mut cg = self.induced(&nodes)?;
        cg.center = Some(cg.local_of(v).expect("center is within range"));
        cg.hops = hops;
        Ok(cg)
    }

    /// The whole graph viewed as a computation graph without a center.
    pub fn whole_computation_graph(&self) -> ComputationGraph {
        let nodes: Vec<usize> = (0..self.n).collect();
        self.induced(&nodes).expect("all nodes are valid")
    }

    fn induced(&self, nodes: &[usize]) -> Result<ComputationGraph> {
        let mut local = vec![usize::MAX; self.n];
        for (i, &u) in nodes.iter().enumerate() {
            if u >= self.n {
                return Err(Error::NodeOutOfRange { node: u, n: self.n });
            }
            local[u] = i;
        }
        let m = nodes.len();
        let mut adjacency = Matrix::zeros(m, m);
        let mut edges = Vec::new();
        let mut external_degree = vec![0.0; m];
        for (i, &u) in nodes.iter().enumerate() {
            for &w in &self.neighbors[u] {
                let j = local[w];
                if j == usize::MAX {
                    external_degree[i] += 1.0;
                } else {
                    adjacency.set(i, j, 1.0);
                    if i < j {
                        edges.push((i, j));
                    }
                }
            }
        }
        edges.sort_unstable();
        let d = self.features.cols();
        let features = Matrix::from_fn(m, d, |i, k| self.features.get(nodes[i], k));
        Ok(ComputationGraph {
            center: None,
            adjacency,
            features,
            local_to_global: nodes.to_vec(),
            hops: 0,
            edges,
            external_degree,
        })
    }

    /// Edges of the planted motif containing `v`: the connected component of
    /// the ground-truth edge set that touches `v`. Empty for non-motif nodes.
    pub fn motif_edges_of(&self, v: usize) -> BTreeSet<Edge> {
        let mut out = BTreeSet::new();
        let touches = |u: usize| {
            self.neighbors[u]
                .iter()
                .any(|&w| self.gt_motif_edges.contains(&canonical(u, w)))
        };
        if v >= self.n || !touches(v) {
            return out;
        }
        let mut seen = BTreeSet::from([v]);
        let mut queue = VecDeque::from([v]);
        while let Some(u) = queue.pop_front() {
            for &w in &self.neighbors[u] {
                let e = canonical(u, w);
                if self.gt_motif_edges.contains(&e) {
                    out.insert(e);
                    if seen.insert(w) {
                        queue.push_back(w);
                    }
                }
            }
        }
        out
    }

    /// Copy of the graph without the given edges; annotations that referenced
    /// removed edges are dropped from the ground truth.
    pub fn without_edges(&self, remove: &BTreeSet<Edge>) -> Result<Self> {
        let kept = self.edges.iter().copied().filter(|e| !remove.contains(e));
        let mut g = Graph::new(self.n, kept, self.features.clone(), self.labels.clone())?;
        g.node_roles = self.node_roles.clone();
        g.gt_motif_edges = self
            .gt_motif_edges
            .iter()
            .copied()
            .filter(|e| !remove.contains(e))
            .collect();
        Ok(g)
    }

    /// Dense 0/1 adjacency.
    pub fn adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.n, self.n);
        for &(u, v) in &self.edges {
            a.set(u, v, 1.0);
            a.set(v, u, 1.0);
        }
        a
    }
}

/// Neighbourhood subgraph that determines a GNN's output at one node.
///
/// Local nodes are ordered by ascending global id. `external_degree[i]`
/// counts the edges of local node `i` that leave the subgraph; models use it
/// so that degree normalization matches the full graph.
#[derive(Clone, Debug, PartialEq)]
pub struct ComputationGraph {
    center: Option<usize>,
    adjacency: Matrix,
    features: Matrix,
    local_to_global: Vec<usize>,
    hops: usize,
    edges: Vec<Edge>,
    external_degree: Vec<f64>,
}

impl ComputationGraph {
    /// Local index of the explained node; `None` for whole-graph views.
    pub fn center(&self) -> Option<usize> {
        self.center
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn local_to_global(&self) -> &[usize] {
        &self.local_to_global
    }

    pub fn hops(&self) -> usize {
        self.hops
    }

    pub fn num_nodes(&self) -> usize {
        self.local_to_global.len()
    }

    /// Local undirected edges, `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn external_degree(&self) -> &[f64] {
        &self.external_degree
    }

    pub fn local_of(&self, global: usize) -> Option<usize> {
        self.local_to_global.binary_search(&global).ok()
    }

    pub fn to_global_edge(&self, (i, j): Edge) -> Edge {
        canonical(self.local_to_global[i], self.local_to_global[j])
    }

    /// Maps a set of global edges to local edges, dropping those not in the subgraph.
    pub fn localize_edges<'a>(&self, global: impl IntoIterator<Item = &'a Edge>) -> BTreeSet<Edge> {
        global
            .into_iter()
            .filter_map(|&(u, v)| {
                let (i, j) = (self.local_of(u)?, self.local_of(v)?);
                (self.adjacency.get(i, j) != 0.0).then(|| canonical(i, j))
            })
            .collect()
    }

    /// Same node set and edges as a standalone [`Graph`] (global annotations dropped).
    pub fn to_graph(&self) -> Result<Graph> {
        Graph::new(
            self.num_nodes(),
            self.edges.iter().copied(),
            self.features.clone(),
            None,
        )
    }

    /// Replaces the features, keeping the structure.
    pub fn with_features(mut self, features: Matrix) -> Result<Self> {
        if features.rows() != self.num_nodes() {
            return Err(Error::Shape(format!(
                "{} feature rows for {} nodes",
                features.rows(),
                self.num_nodes()
            )));
        }
        self.features = features;
        Ok(self)
    }
}

/// `L = D - A` with `D` the diagonal of row sums.
pub fn laplacian(adjacency: &Matrix) -> Result<Matrix> {
    if !adjacency.is_symmetric(1e-12) {
        return Err(Error::Asymmetric);
    }
    let m = adjacency.rows();
    let mut l = adjacency.scale(-1.0);
    for i in 0..m {
        let d: f64 = adjacency.row(i).iter().sum();
        l.add_at(i, i, d);
    }
    Ok(l)
}

/// Nodes reachable from `seed` over entries with weight strictly above `threshold`.
pub fn connected_component(adjacency: &Matrix, seed: usize, threshold: f64) -> Result<BTreeSet<usize>> {
    let m = adjacency.rows();
    if seed >= m {
        return Err(Error::NodeOutOfRange { node: seed, n: m });
    }
    let mut seen = BTreeSet::from([seed]);
    let mut queue = VecDeque::from([seed]);
    while let Some(u) = queue.pop_front() {
        for w in 0..m {
            if w != u && adjacency.get(u, w) > threshold && seen.insert(w) {
                queue.push_back(w);
            }
        }
    }
    Ok(seen)
}

/// Largest component over entries above `threshold`; ties go to the
/// component holding the smallest node id. Empty for an empty matrix.
pub fn largest_connected_component(adjacency: &Matrix, threshold: f64) -> BTreeSet<usize> {
    let m = adjacency.rows();
    let mut assigned = vec![false; m];
    let mut best = BTreeSet::new();
    for s in 0..m {
        if assigned[s] {
            continue;
        }
        let comp = connected_component(adjacency, s, threshold).expect("seed in range");
        for &u in &comp {
            assigned[u] = true;
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best
}

/// Brute-force isomorphism test for small graphs given as edge lists.
/// Intended for up to about nine nodes.
pub fn is_isomorphic_small(n_a: usize, a: &[Edge], n_b: usize, b: &[Edge]) -> bool {
    if n_a != n_b || a.len() != b.len() {
        return false;
    }
    let n = n_a;
    let to_adj = |edges: &[Edge]| {
        let mut adj = vec![vec![false; n]; n];
        for &(u, v) in edges {
            adj[u][v] = true;
            adj[v][u] = true;
        }
        adj
    };
    let (adj_a, adj_b) = (to_adj(a), to_adj(b));
    let deg = |adj: &Vec<Vec<bool>>| -> Vec<usize> {
        adj.iter().map(|r| r.iter().filter(|&&x| x).count()).collect()
    };
    let (deg_a, deg_b) = (deg(&adj_a), deg(&adj_b));
    let mut sa = deg_a.clone();
    let mut sb = deg_b.clone();
    sa.sort_unstable();
    sb.sort_unstable();
    if sa != sb {
        return false;
    }
    // Backtracking over degree-compatible assignments a -> b.
    fn extend(
        k: usize,
        map: &mut Vec<usize>,
        used: &mut Vec<bool>,
        adj_a: &[Vec<bool>],
        adj_b: &[Vec<bool>],
        deg_a: &[usize],
        deg_b: &[usize],
    ) -> bool {
        let n = adj_a.len();
        if k == n {
            return true;
        }
        for cand in 0..n {
            if used[cand] || deg_a[k] != deg_b[cand] {
                continue;
            }
            if (0..k).any(|p| adj_a[k][p] != adj_b[cand][map[p]]) {
                continue;
            }
            map.push(cand);
            used[cand] = true;
            if extend(k + 1, map, used, adj_a, adj_b, deg_a, deg_b) {
                return true;
            }
            map.pop();
            used[cand] = false;
        }
        false
    }
    extend(
        0,
        &mut Vec::with_capacity(n),
        &mut vec![false; n],
        &adj_a,
        &adj_b,
        &deg_a,
        &deg_b,
    )
}

/// Drops isolated nodes and relabels the rest densely in ascending order.
pub fn compact_edges(edges: &[Edge]) -> (usize, Vec<Edge>) {
    let nodes: BTreeSet<usize> = edges.iter().flat_map(|&(u, v)| [u, v]).collect();
    let index: Vec<usize> = nodes.iter().copied().collect();
    let pos = |x: usize| index.binary_search(&x).unwrap();
    (
        index.len(),
        edges.iter().map(|&(u, v)| canonical(pos(u), pos(v))).collect(),
    )
}
