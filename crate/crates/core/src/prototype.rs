//! Class prototypes: explanations of many nodes of one class, aligned to a
//! reference explanation and combined by an entrywise median.

use std::collections::{BTreeMap, BTreeSet};

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff::{derived, AdamState, Matrix, SeededRng, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::explain::{explain_node, Explanation, ExplainerConfig};
use crate::gnn::{forward_graph, GnnModel};
use crate::graph::{compact_edges, Edge, Graph};

/// Class member whose embedding is closest to the class mean, ties to the
/// smaller id.
pub fn choose_reference_node(embeddings: &Matrix, members: &[usize]) -> Result<usize> {
    if members.is_empty() {
        return Err(Error::Config("a class needs at least one member".into()));
    }
    if let Some(&v) = members.iter().find(|&&v| v >= embeddings.rows()) {
        return Err(Error::NodeOutOfRange { node: v, n: embeddings.rows() });
    }
    let d = embeddings.cols();
    let mut mean = vec![0.0; d];
    for &v in members {
        for (m, x) in mean.iter_mut().zip(embeddings.row(v)) {
            *m += x / members.len() as f64;
        }
    }
    let dist = |v: usize| -> f64 { embeddings.row(v).iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum() };
    let mut best = members[0];
    for &v in members {
        let (dv, db) = (dist(v), dist(best));
        if dv < db || (dv == db && v < best) {
            best = v;
        }
    }
    Ok(best)
}

/// Match a weighted graph `(a_v, x_v)` onto a reference `(a_star, x_star)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentProblem {
    pub a_v: Matrix,
    pub x_v: Matrix,
    pub a_star: Matrix,
    pub x_star: Matrix,
}

impl AlignmentProblem {
    /// Pads `a_v` and `x_v` with zero rows (and columns) when the graph is
    /// smaller than the reference.
    pub fn new(a_v: Matrix, x_v: Matrix, a_star: Matrix, x_star: Matrix) -> Result<Self> {
        let (n, m) = (a_v.rows(), a_star.rows());
        if a_v.cols() != n || a_star.cols() != m {
            return Err(Error::Shape("adjacency matrices must be square".into()));
        }
        if x_v.rows() != n || x_star.rows() != m || x_v.cols() != x_star.cols() {
            return Err(Error::Shape(format!(
                "features {:?} and {:?} for {n} and {m} nodes",
                x_v.shape(),
                x_star.shape()
            )));
        }
        let (a_v, x_v) = if n < m {
            (
                Matrix::from_fn(m, m, |i, j| if i < n && j < n { a_v.get(i, j) } else { 0.0 }),
                Matrix::from_fn(m, x_v.cols(), |i, k| if i < n { x_v.get(i, k) } else { 0.0 }),
            )
        } else {
            (a_v, x_v)
        };
        Ok(Self { a_v, x_v, a_star, x_star })
    }

    /// Rows of the alignment matrix (size of the padded graph).
    pub fn rows(&self) -> usize {
        self.a_v.rows()
    }

    pub fn cols(&self) -> usize {
        self.a_star.rows()
    }

    /// `|PᵀAP - A*|² + |PᵀX - X*|²` with `P` the row softmax of `logits`.
    pub fn loss_on_tape(&self, tape: &mut Tape, logits: Var) -> Result<Var> {
        let p = tape.softmax_rows(logits)?;
        let pt = tape.transpose(p)?;
        let a = tape.constant(self.a_v.clone())?;
        let pta = tape.matmul(pt, a)?;
        let aligned = tape.matmul(pta, p)?;
        let a_star = tape.constant(self.a_star.clone())?;
        let diff = tape.sub(aligned, a_star)?;
        let mut loss = tape.sum_squares(diff)?;
        if self.x_v.cols() > 0 {
            let x = tape.constant(self.x_v.clone())?;
            let ptx = tape.matmul(pt, x)?;
            let x_star = tape.constant(self.x_star.clone())?;
            let fd = tape.sub(ptx, x_star)?;
            let feature_loss = tape.sum_squares(fd)?;
            loss = tape.add(loss, feature_loss)?;
        }
        Ok(loss)
    }

    pub fn loss(&self, logits: &Matrix) -> Result<f64> {
        let mut tape = Tape::new();
        let l = tape.constant(logits.clone())?;
        let loss = self.loss_on_tape(&mut tape, l)?;
        tape.value(loss).as_scalar()
    }

    /// `PᵀAP` for a given alignment matrix.
    pub fn aligned_adjacency(&self, p: &Matrix) -> Result<Matrix> {
        p.transpose().matmul(&self.a_v)?.matmul(p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignOptions {
    pub epochs: usize,
    pub lr: f64,
    pub restarts: usize,
    /// Scale of the logit added to the diagonal on the first restart; the
    /// other restarts start from standard normal logits.
    pub identity_init: f64,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 0.1,
            restarts: 10,
            identity_init: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    /// Row-stochastic `rows x cols` alignment matrix.
    pub p: Matrix,
    pub aligned: Matrix,
    pub loss: f64,
    /// Best loss after each restart.
    pub best_trace: Vec<f64>,
}

fn descend(problem: &AlignmentProblem, init: Matrix, options: &AlignOptions) -> Result<(Matrix, f64)> {
    let mut logits = Tensor::parameter(init);
    let mut adam = AdamState::new(options.lr);
    let mut best = (logits.value().clone(), problem.loss(logits.value())?);
    for _ in 0..options.epochs {
        let mut tape = Tape::new();
        let l = tape.watch(&logits)?;
        let loss = problem.loss_on_tape(&mut tape, l)?;
        let value = tape.value(loss).as_scalar()?;
        if value < best.1 {
            best = (logits.value().clone(), value);
        }
        let grads = tape.backward(loss)?;
        grads.accumulate_into(l, &mut logits)?;
        adam.step(&mut [&mut logits])?;
    }
    let last = problem.loss(logits.value())?;
    if last < best.1 {
        best = (logits.value().clone(), last);
    }
    Ok(best)
}

/// Adam on row-softmaxed logits from several starting points; keeps the
/// lowest loss seen.
pub fn align_explanation(problem: &AlignmentProblem, options: &AlignOptions, rng: &mut SeededRng) -> Result<Alignment> {
    if options.restarts == 0 {
        return Err(Error::Config("alignment needs at least one restart".into()));
    }
    let (n, m) = (problem.rows(), problem.cols());
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut best: Option<(Matrix, f64)> = None;
    let mut best_trace = Vec::with_capacity(options.restarts);
    for r in 0..options.restarts {
        let init = if r == 0 {
            Matrix::from_fn(n, m, |i, j| if i == j { options.identity_init } else { 0.0 })
        } else {
            Matrix::from_fn(n, m, |_, _| normal.sample(rng))
        };
        let (logits, loss) = descend(problem, init, options)?;
        if best.as_ref().is_none_or(|b| loss < b.1) {
            best = Some((logits, loss));
        }
        best_trace.push(best.as_ref().expect("set above").1);
    }
    let (logits, loss) = best.expect("at least one restart");
    let p = crate::diff::softmax_rows(&logits);
    let aligned = problem.aligned_adjacency(&p)?;
    Ok(Alignment { p, aligned, loss, best_trace })
}

/// Entrywise lower median.
pub fn entrywise_median(matrices: &[Matrix]) -> Result<Matrix> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::Config("median of an empty list".into()))?;
    if matrices.iter().any(|m| m.shape() != first.shape()) {
        return Err(Error::Shape("median inputs differ in shape".into()));
    }
    Ok(Matrix::from_fn(first.rows(), first.cols(), |i, j| {
        let mut xs: Vec<f64> = matrices.iter().map(|m| m.get(i, j)).collect();
        xs.sort_by(|a, b| a.total_cmp(b));
        xs[(xs.len() - 1) / 2]
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub class: usize,
    pub reference: usize,
    /// Global ids of the reference explanation's nodes, in matrix order.
    pub nodes: Vec<usize>,
    pub members: Vec<usize>,
    pub adjacency: Matrix,
    /// Alignment loss of each member, in `members` order.
    pub alignment_losses: Vec<f64>,
}

impl Prototype {
    /// Upper-triangle entries above `t`, as pairs of matrix indices.
    pub fn thresholded_edges(&self, t: f64) -> Vec<Edge> {
        let n = self.adjacency.rows();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.adjacency.get(i, j) > t {
                    edges.push((i, j));
                }
            }
        }
        edges
    }

    /// The thresholded prototype with isolated nodes dropped.
    pub fn thresholded_graph(&self, t: f64) -> (usize, Vec<Edge>) {
        compact_edges(&self.thresholded_edges(t))
    }
}

/// Entrywise median of already aligned adjacencies.
pub fn prototype_median(
    class: usize,
    reference: usize,
    nodes: Vec<usize>,
    members: Vec<usize>,
    aligned: &[Matrix],
    alignment_losses: Vec<f64>,
) -> Result<Prototype> {
    Ok(Prototype {
        class,
        reference,
        nodes,
        members,
        adjacency: entrywise_median(aligned)?,
        alignment_losses,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototypeConfig {
    pub explainer: ExplainerConfig,
    pub align: AlignOptions,
    /// Explain at most this many class members, lowest ids first.
    pub max_members: usize,
    pub seed: u64,
}

impl Default for PrototypeConfig {
    fn default() -> Self {
        Self {
            explainer: ExplainerConfig::default(),
            align: AlignOptions::default(),
            max_members: 10,
            seed: 0,
        }
    }
}

/// The extracted explanation as a weighted adjacency over its nodes, the
/// explained node first and the rest by hop distance, then id.
pub fn explanation_matrices(graph: &Graph, e: &Explanation) -> Result<(Vec<usize>, Matrix, Matrix)> {
    let center = e
        .node
        .ok_or_else(|| Error::Config("prototype members must be node explanations".into()))?;
    let score: BTreeMap<Edge, f64> = e.edges.iter().copied().zip(e.edge_scores.iter().copied()).collect();
    let mut nodes: BTreeSet<usize> = BTreeSet::from([center]);
    for &(u, v) in &e.selected_edges {
        nodes.insert(u);
        nodes.insert(v);
    }
    let dist = graph.bfs_distances(center, usize::MAX);
    let mut order: Vec<usize> = nodes.into_iter().collect();
    order.sort_by_key(|&v| (dist[v].unwrap_or(usize::MAX), v));
    let index: BTreeMap<usize, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let k = order.len();
    let mut a = Matrix::zeros(k, k);
    for edge in &e.selected_edges {
        let (i, j) = (index[&edge.0], index[&edge.1]);
        let s = score[edge];
        a.set(i, j, s);
        a.set(j, i, s);
    }
    let x = graph.features();
    let feats = Matrix::from_fn(k, x.cols(), |i, c| x.get(order[i], c));
    Ok((order, a, feats))
}

/// Explains up to `max_members` nodes with label `class`, aligns each
/// explanation to the reference node's and takes the entrywise median.
pub fn build_class_prototype(
    model: &GnnModel,
    graph: &Graph,
    class: usize,
    config: &PrototypeConfig,
) -> Result<Prototype> {
    let labels = graph
        .labels()
        .ok_or_else(|| Error::Config("prototypes need node labels".into()))?;
    let mut members: Vec<usize> = (0..graph.n()).filter(|&v| labels[v] == class).collect();
    members.truncate(config.max_members);
    if members.is_empty() {
        return Err(Error::Config(format!("class {class} has no members")));
    }
    let embeddings = forward_graph(model, graph)?.embeddings;
    let reference = choose_reference_node(&embeddings, &members)?;
    let explained = members
        .par_iter()
        .map(|&v| {
            let mut rng = derived(config.seed, &format!("prototype-explain-{v}"));
            let e = explain_node(model, graph, v, &config.explainer, &mut rng)?;
            explanation_matrices(graph, &e)
        })
        .collect::<Result<Vec<_>>>()?;
    let r = members.iter().position(|&v| v == reference).expect("reference is a member");
    let (ref_nodes, a_star, x_star) = explained[r].clone();
    let aligned = members
        .par_iter()
        .zip(&explained)
        .map(|(&v, (_, a, x))| {
            if v == reference {
                return Ok((a_star.clone(), 0.0));
            }
            let problem = AlignmentProblem::new(a.clone(), x.clone(), a_star.clone(), x_star.clone())?;
            let mut rng = derived(config.seed, &format!("prototype-align-{v}"));
            let al = align_explanation(&problem, &config.align, &mut rng)?;
            Ok((al.aligned, al.loss))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mats, losses): (Vec<Matrix>, Vec<f64>) = aligned.into_iter().unzip();
    prototype_median(class, reference, ref_nodes, members, &mats, losses)
}
