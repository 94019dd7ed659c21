//! Edge and feature mask optimization for single predictions.
//!
//! A mask logit is kept for every undirected edge of a computation graph and
//! for every feature dimension. The explained model sees the adjacency
//! scaled by `σ(M)` and features pushed towards noise where `σ(F)` is small;
//! the masks are trained to keep the target class likely while staying
//! small and close to binary.

mod extract;

use std::sync::Arc;

use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::diff::{sigmoid, AdamState, Matrix, SeededRng, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::gnn::{forward_computation_graph, GnnModel, NormMode, Propagation, Readout};
use crate::graph::{ComputationGraph, Edge, Graph};

pub use extract::{extract_explanation_subgraph, ExtractionMode, Selection};

/// Which class the masked prediction is pushed towards.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// The class the model predicts on the unmasked computation graph.
    Predicted,
    Label(usize),
}

/// How the feature mask enters the model input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// `Z + (X - Z) ⊙ σ(F)` with `Z` drawn from each column's empirical distribution.
    Marginal,
    /// `X ⊙ σ(F)`.
    Multiply,
}

/// Rows that marginal-mode noise is drawn from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalPool {
    /// Nodes of the computation graph being explained.
    #[default]
    ComputationGraph,
    /// Every node of the source graph.
    Graph,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainerConfig {
    pub epochs: usize,
    pub lr: f64,
    pub size_coef: f64,
    pub entropy_coef: f64,
    pub laplacian_coef: f64,
    pub feature_size_coef: f64,
    /// Minimum number of edges in the extracted explanation.
    pub max_edges: usize,
    /// Number of feature dimensions reported.
    pub max_features: usize,
    pub target: Target,
    pub feature_mode: FeatureMode,
    /// Noise draws averaged per epoch in marginal mode.
    pub samples: usize,
    #[serde(default)]
    pub marginal_pool: MarginalPool,
    pub init_mean: f64,
    pub init_std: f64,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 0.1,
            size_coef: 0.05,
            entropy_coef: 0.0,
            laplacian_coef: 0.5,
            feature_size_coef: 0.1,
            max_edges: 10,
            max_features: 5,
            target: Target::Predicted,
            feature_mode: FeatureMode::Marginal,
            samples: 1,
            marginal_pool: MarginalPool::ComputationGraph,
            init_mean: 4.0,
            init_std: 0.1,
        }
    }
}

impl ExplainerConfig {
    /// All regularizers switched off.
    pub fn unregularized() -> Self {
        Self {
            size_coef: 0.0,
            entropy_coef: 0.0,
            laplacian_coef: 0.0,
            feature_size_coef: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let coefs = [
            self.size_coef,
            self.entropy_coef,
            self.laplacian_coef,
            self.feature_size_coef,
        ];
        if coefs.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::Config("regularizer coefficients must be nonnegative".into()));
        }
        if self.max_edges == 0 || self.max_features == 0 {
            return Err(Error::Config("max_edges and max_features must be at least 1".into()));
        }
        if self.samples == 0 {
            return Err(Error::Config("at least one noise sample is required".into()));
        }
        if !(self.lr > 0.0) || !(self.init_std >= 0.0) {
            return Err(Error::Config("lr must be positive and init_std nonnegative".into()));
        }
        Ok(())
    }
}

/// Mask logits: one per computation-graph edge and one per feature dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainerMasks {
    pub edge_logits: Vec<f64>,
    pub feature_logits: Vec<f64>,
}

impl ExplainerMasks {
    pub fn constant(edges: usize, features: usize, logit: f64) -> Self {
        Self {
            edge_logits: vec![logit; edges],
            feature_logits: vec![logit; features],
        }
    }

    pub fn random(edges: usize, features: usize, mean: f64, std: f64, rng: &mut SeededRng) -> Result<Self> {
        let normal = Normal::new(mean, std).map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            edge_logits: (0..edges).map(|_| rng.sample(normal)).collect(),
            feature_logits: (0..features).map(|_| rng.sample(normal)).collect(),
        })
    }

    pub fn edge_scores(&self) -> Vec<f64> {
        self.edge_logits.iter().map(|&x| sigmoid(x)).collect()
    }

    pub fn feature_scores(&self) -> Vec<f64> {
        self.feature_logits.iter().map(|&x| sigmoid(x)).collect()
    }
}

/// Values of the objective's terms, already multiplied by their coefficients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub prediction: f64,
    pub size: f64,
    pub entropy: f64,
    pub laplacian: f64,
    pub feature_size: f64,
    pub total: f64,
}

/// The objective's scalar nodes on a tape.
#[derive(Clone, Copy, Debug)]
pub struct ObjectiveVars {
    pub prediction: Var,
    pub size: Var,
    pub entropy: Var,
    pub laplacian: Var,
    pub feature_size: Var,
    pub total: Var,
}

/// Everything fixed while the masks of one prediction are optimized.
#[derive(Debug)]
pub struct ExplainProblem<'a> {
    model: &'a GnnModel,
    cg: &'a ComputationGraph,
    prop: Propagation,
    config: ExplainerConfig,
    target: usize,
    predicted: usize,
    /// `(f_i - f_j)^2` per edge, from the unmasked predicted classes.
    label_gaps: Matrix,
    pool: Option<&'a Matrix>,
}

impl<'a> ExplainProblem<'a> {
    pub fn new(model: &'a GnnModel, cg: &'a ComputationGraph, config: &ExplainerConfig) -> Result<Self> {
        config.validate()?;
        let readout = model.config().readout;
        if readout == Readout::Node && cg.center().is_none() {
            return Err(Error::Config("node explanations need a centered computation graph".into()));
        }
        if cg.num_nodes() == 0 {
            return Err(Error::InvalidGraph("empty computation graph".into()));
        }
        let prop = Propagation::from_computation_graph(cg)?;
        let out = forward_computation_graph(model, cg, None)?;
        let row = cg.center().filter(|_| readout == Readout::Node).unwrap_or(0);
        let predicted = out.probabilities.argmax_row(row);
        let classes = model.config().num_classes;
        let target = match config.target {
            Target::Predicted => predicted,
            Target::Label(c) if c < classes => c,
            Target::Label(label) => return Err(Error::LabelOutOfRange { label, classes }),
        };
        let label_gaps = if readout == Readout::Node {
            let f: Vec<f64> = (0..cg.num_nodes())
                .map(|i| out.probabilities.argmax_row(i) as f64)
                .collect();
            Matrix::column(cg.edges().iter().map(|&(i, j)| (f[i] - f[j]).powi(2)).collect())
        } else {
            Matrix::zeros(cg.edges().len(), 1)
        };
        Ok(Self {
            model,
            cg,
            prop,
            config: config.clone(),
            target,
            predicted,
            label_gaps,
            pool: None,
        })
    }

    /// Draws marginal noise from the rows of `pool` instead of the
    /// computation graph's own features.
    pub fn with_marginal_pool(mut self, pool: &'a Matrix) -> Result<Self> {
        if pool.cols() != self.feature_dim() || pool.rows() == 0 {
            return Err(Error::Shape(format!(
                "marginal pool {:?} for feature dim {}",
                pool.shape(),
                self.feature_dim()
            )));
        }
        self.pool = Some(pool);
        Ok(self)
    }

    pub fn computation_graph(&self) -> &ComputationGraph {
        self.cg
    }

    pub fn config(&self) -> &ExplainerConfig {
        &self.config
    }

    pub fn target(&self) -> usize {
        self.target
    }

    /// Class predicted on the unmasked computation graph.
    pub fn predicted(&self) -> usize {
        self.predicted
    }

    pub fn num_edges(&self) -> usize {
        self.cg.edges().len()
    }

    pub fn feature_dim(&self) -> usize {
        self.cg.features().cols()
    }

    /// Noise matrices for one evaluation: each entry of column `k` is a
    /// uniformly drawn value of column `k`. Empty in multiply mode.
    pub fn draw_noise(&self, rng: &mut SeededRng) -> Vec<Matrix> {
        if self.config.feature_mode == FeatureMode::Multiply {
            return Vec::new();
        }
        let pool = self.pool.unwrap_or_else(|| self.cg.features());
        let (m, r) = (self.cg.num_nodes(), pool.rows());
        (0..self.config.samples)
            .map(|_| Matrix::from_fn(m, pool.cols(), |_, k| pool.get(rng.gen_range(0..r), k)))
            .collect()
    }

    /// Builds the objective from edge logits (`edges x 1`) and feature
    /// logits (`1 x d`) already on the tape.
    pub fn objective_on_tape(
        &self,
        tape: &mut Tape,
        edge_logits: Var,
        feature_logits: Var,
        noise: &[Matrix],
    ) -> Result<ObjectiveVars> {
        let cfg = &self.config;
        let params = self.model.bind_frozen(tape)?;
        let edge_mask = tape.sigmoid(edge_logits)?;
        let feature_mask = tape.sigmoid(feature_logits)?;
        let entry = tape.gather_rows(edge_mask, self.prop.entry_edge().clone())?;
        let x = self.cg.features();
        let inputs: Vec<Var> = match cfg.feature_mode {
            FeatureMode::Multiply => {
                let xv = tape.constant(x.clone())?;
                vec![tape.mul_row(xv, feature_mask)?]
            }
            FeatureMode::Marginal => {
                if noise.len() != cfg.samples {
                    return Err(Error::Shape(format!(
                        "{} noise draws for {} samples",
                        noise.len(),
                        cfg.samples
                    )));
                }
                noise
                    .iter()
                    .map(|z| {
                        let diff = tape.constant(x.zip_map(z, |a, b| a - b)?)?;
                        let zv = tape.constant(z.clone())?;
                        let kept = tape.mul_row(diff, feature_mask)?;
                        tape.add(zv, kept)
                    })
                    .collect::<Result<_>>()?
            }
        };
        let mut prediction: Option<Var> = None;
        for input in &inputs {
            let fwd = self
                .model
                .embed_on_tape(tape, &params, &self.prop, entry, *input, NormMode::Frozen)?;
            let (logits, row) = match self.model.config().readout {
                Readout::Node => (
                    self.model.node_logits(tape, &params, fwd.embeddings)?,
                    self.cg.center().expect("checked in new"),
                ),
                Readout::Graph => {
                    let seg = Arc::new(vec![0..self.cg.num_nodes()]);
                    (self.model.graph_logits(tape, &params, fwd.embeddings, seg)?, 0)
                }
            };
            let ce = tape.cross_entropy(logits, Arc::new(vec![(row, self.target)]))?;
            prediction = Some(match prediction {
                None => ce,
                Some(acc) => tape.add(acc, ce)?,
            });
        }
        let prediction = tape.scalar_mul(
            prediction.expect("at least one input"),
            1.0 / inputs.len() as f64,
        )?;

        let mask_sum = tape.sum(edge_mask)?;
        let size = tape.scalar_mul(mask_sum, cfg.size_coef)?;
        let h_edges = tape.binary_entropy(edge_mask)?;
        let h_edges = tape.sum(h_edges)?;
        let h_features = tape.binary_entropy(feature_mask)?;
        let h_features = tape.sum(h_features)?;
        let h = tape.add(h_edges, h_features)?;
        let entropy = tape.scalar_mul(h, cfg.entropy_coef)?;
        let gaps = tape.constant(self.label_gaps.clone())?;
        let mt = tape.transpose(edge_mask)?;
        let quad = tape.matmul(mt, gaps)?;
        let laplacian = tape.scalar_mul(quad, cfg.laplacian_coef)?;
        let feature_sum = tape.sum(feature_mask)?;
        let feature_size = tape.scalar_mul(feature_sum, cfg.feature_size_coef)?;

        let mut total = prediction;
        for term in [size, entropy, laplacian, feature_size] {
            total = tape.add(total, term)?;
        }
        Ok(ObjectiveVars {
            prediction,
            size,
            entropy,
            laplacian,
            feature_size,
            total,
        })
    }

    fn check_masks(&self, masks: &ExplainerMasks) -> Result<()> {
        if masks.edge_logits.len() != self.num_edges() || masks.feature_logits.len() != self.feature_dim() {
            return Err(Error::Shape(format!(
                "masks ({}, {}) for {} edges and {} features",
                masks.edge_logits.len(),
                masks.feature_logits.len(),
                self.num_edges(),
                self.feature_dim()
            )));
        }
        Ok(())
    }

    /// Evaluates the objective at `masks` with the given noise draws.
    pub fn evaluate(&self, masks: &ExplainerMasks, noise: &[Matrix]) -> Result<ObjectiveTerms> {
        self.check_masks(masks)?;
        let mut tape = Tape::new();
        let m = tape.constant(Matrix::column(masks.edge_logits.clone()))?;
        let f = tape.constant(Matrix::row_vector(masks.feature_logits.clone()))?;
        let vars = self.objective_on_tape(&mut tape, m, f, noise)?;
        let get = |v: Var| tape.value(v).as_scalar();
        Ok(ObjectiveTerms {
            prediction: get(vars.prediction)?,
            size: get(vars.size)?,
            entropy: get(vars.entropy)?,
            laplacian: get(vars.laplacian)?,
            feature_size: get(vars.feature_size)?,
            total: get(vars.total)?,
        })
    }

    /// Evaluates the objective with fresh noise from `rng`.
    pub fn objective(&self, masks: &ExplainerMasks, rng: &mut SeededRng) -> Result<ObjectiveTerms> {
        let noise = self.draw_noise(rng);
        self.evaluate(masks, &noise)
    }

    /// Adam on both masks starting from `masks`; returns the final masks and
    /// the total objective before each update.
    pub fn optimize_from(&self, masks: ExplainerMasks, rng: &mut SeededRng) -> Result<(ExplainerMasks, Vec<f64>)> {
        self.check_masks(&masks)?;
        let mut m = Tensor::parameter(Matrix::column(masks.edge_logits));
        let mut f = Tensor::parameter(Matrix::row_vector(masks.feature_logits));
        let mut adam = AdamState::new(self.config.lr);
        let mut trace = Vec::with_capacity(self.config.epochs);
        for _ in 0..self.config.epochs {
            let noise = self.draw_noise(rng);
            let mut tape = Tape::new();
            let mv = tape.watch(&m)?;
            let fv = tape.watch(&f)?;
            let vars = self.objective_on_tape(&mut tape, mv, fv, &noise)?;
            trace.push(tape.value(vars.total).as_scalar()?);
            let grads = tape.backward(vars.total)?;
            grads.accumulate_into(mv, &mut m)?;
            grads.accumulate_into(fv, &mut f)?;
            adam.step(&mut [&mut m, &mut f])?;
        }
        let masks = ExplainerMasks {
            edge_logits: m.value().data().to_vec(),
            feature_logits: f.value().data().to_vec(),
        };
        Ok((masks, trace))
    }

    /// Random initialization followed by [`optimize_from`](Self::optimize_from).
    pub fn optimize(&self, rng: &mut SeededRng) -> Result<(ExplainerMasks, Vec<f64>)> {
        let init = ExplainerMasks::random(
            self.num_edges(),
            self.feature_dim(),
            self.config.init_mean,
            self.config.init_std,
            rng,
        )?;
        self.optimize_from(init, rng)
    }
}

/// The masked input for one noise draw: `Z + (X - Z) ⊙ σ(F)` in marginal
/// mode, `X ⊙ σ(F)` in multiply mode (`noise` ignored). `σ(F)` is broadcast
/// over rows.
pub fn marginalize_features(
    features: &Matrix,
    noise: &Matrix,
    feature_logits: &[f64],
    mode: FeatureMode,
) -> Result<Matrix> {
    if feature_logits.len() != features.cols() {
        return Err(Error::Shape(format!(
            "{} feature logits for {} columns",
            feature_logits.len(),
            features.cols()
        )));
    }
    let s: Vec<f64> = feature_logits.iter().map(|&f| sigmoid(f)).collect();
    match mode {
        FeatureMode::Multiply => Ok(Matrix::from_fn(features.rows(), features.cols(), |i, k| features.get(i, k) * s[k])),
        FeatureMode::Marginal => {
            if noise.shape() != features.shape() {
                return Err(Error::Shape(format!("noise {:?} for features {:?}", noise.shape(), features.shape())));
            }
            Ok(Matrix::from_fn(features.rows(), features.cols(), |i, k| {
                let z = noise.get(i, k);
                z + (features.get(i, k) - z) * s[k]
            }))
        }
    }
}

/// Optimized masks with their loss trace.
pub fn optimize_masks(
    model: &GnnModel,
    cg: &ComputationGraph,
    config: &ExplainerConfig,
    rng: &mut SeededRng,
) -> Result<(ExplainerMasks, Vec<f64>)> {
    ExplainProblem::new(model, cg, config)?.optimize(rng)
}

/// Result of explaining one prediction. Edges are global node pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    /// Explained node (global id); `None` for graph explanations.
    pub node: Option<usize>,
    /// Global ids of the computation graph nodes, ascending.
    pub nodes: Vec<usize>,
    pub edges: Vec<Edge>,
    /// `σ(M)` aligned with `edges`.
    pub edge_scores: Vec<f64>,
    /// `σ(F)` per feature dimension.
    pub feature_scores: Vec<f64>,
    pub selected_edges: Vec<Edge>,
    /// Top feature dimensions by score, best first.
    pub selected_features: Vec<usize>,
    pub threshold: f64,
    /// Fewer than `max_edges` edges were reachable.
    pub undersized: bool,
    pub target: usize,
    pub predicted_before: usize,
    /// Prediction with only the selected edges present.
    pub predicted_after: usize,
    pub objective: ObjectiveTerms,
    pub losses: Vec<f64>,
    pub config: ExplainerConfig,
}

impl Explanation {
    /// Dense symmetric matrix of edge scores over the computation graph's local ids.
    pub fn edge_score_matrix(&self) -> Matrix {
        let m = self.nodes.len();
        let mut a = Matrix::zeros(m, m);
        for (&(u, v), &s) in self.edges.iter().zip(&self.edge_scores) {
            let i = self.nodes.binary_search(&u).expect("edge endpoint in node set");
            let j = self.nodes.binary_search(&v).expect("edge endpoint in node set");
            a.set(i, j, s);
            a.set(j, i, s);
        }
        a
    }
}

/// Indices of the `k` largest scores, best first; ties go to the lower index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn explain_computation_graph(
    model: &GnnModel,
    cg: &ComputationGraph,
    mode: ExtractionMode,
    pool: Option<&Matrix>,
    config: &ExplainerConfig,
    rng: &mut SeededRng,
) -> Result<Explanation> {
    let mut problem = ExplainProblem::new(model, cg, config)?;
    if let Some(pool) = pool.filter(|_| config.marginal_pool == MarginalPool::Graph) {
        problem = problem.with_marginal_pool(pool)?;
    }
    let (masks, losses) = problem.optimize(rng)?;
    let objective = problem.objective(&masks, rng)?;
    let scores = masks.edge_scores();
    let selection = extract_explanation_subgraph(cg, &scores, config.max_edges, mode)?;
    let keep: Vec<f64> = (0..cg.edges().len())
        .map(|e| if selection.edges.contains(&e) { 1.0 } else { 0.0 })
        .collect();
    let after = forward_computation_graph(model, cg, Some(&keep))?;
    let row = match model.config().readout {
        Readout::Node => cg.center().expect("node explanation has a center"),
        Readout::Graph => 0,
    };
    let feature_scores = masks.feature_scores();
    Ok(Explanation {
        node: cg.center().map(|c| cg.local_to_global()[c]),
        nodes: cg.local_to_global().to_vec(),
        edges: cg.edges().iter().map(|&e| cg.to_global_edge(e)).collect(),
        edge_scores: scores,
        selected_features: top_k(&feature_scores, config.max_features),
        feature_scores,
        selected_edges: selection.edges.iter().map(|&e| cg.to_global_edge(cg.edges()[e])).collect(),
        threshold: selection.threshold,
        undersized: selection.undersized,
        target: problem.target(),
        predicted_before: problem.predicted(),
        predicted_after: after.probabilities.argmax_row(row),
        objective,
        losses,
        config: config.clone(),
    })
}

/// Explains the prediction at node `v` over its `L`-hop computation graph.
pub fn explain_node(
    model: &GnnModel,
    graph: &Graph,
    v: usize,
    config: &ExplainerConfig,
    rng: &mut SeededRng,
) -> Result<Explanation> {
    if model.config().readout != Readout::Node {
        return Err(Error::Model("node explanations need a node-readout model".into()));
    }
    let cg = graph.computation_graph(v, model.config().layers)?;
    explain_computation_graph(model, &cg, ExtractionMode::NodeCentered, Some(graph.features()), config, rng)
}

/// Explains a graph-level prediction with a mask over every edge; the
/// explanation is the largest connected component of the selection.
pub fn explain_graph(
    model: &GnnModel,
    graph: &Graph,
    config: &ExplainerConfig,
    rng: &mut SeededRng,
) -> Result<Explanation> {
    if model.config().readout != Readout::Graph {
        return Err(Error::Model("graph explanations need a graph-readout model".into()));
    }
    let cg = graph.whole_computation_graph();
    explain_computation_graph(model, &cg, ExtractionMode::LargestComponent, Some(graph.features()), config, rng)
}
