//! The models being explained: a graph convolutional network and a
//! single-head attention variant, both driven by a (possibly masked)
//! weighted adjacency.
//!
//! Each layer follows the message / aggregate / update decomposition:
//! messages are the transformed neighbour states `h_j W`, aggregation is an
//! edge-weighted sum (plain or degree-normalized) or an attention-weighted
//! sum, and the update adds a bias and applies ReLU. Node logits come from a linear head on the last layer; graph
//! logits from the same head applied to the mean of node embeddings.

mod propagation;
mod train;

use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{softmax_rows, Matrix, SeededRng, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::{ComputationGraph, Graph};

use propagation::LoopedPattern;
pub use propagation::Propagation;
pub use train::{
    accuracy, freeze_norm_stats, train_graph_classifier, train_node_classifier, Split, TrainOptions, TrainReport,
};

const ATTENTION_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Attention,
}

/// How a GCN layer combines neighbor messages.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// `(A_w + I) H W`: a masked edge contributes exactly its weight.
    #[default]
    Sum,
    /// `D^-1/2 (A_w + I) D^-1/2 H W` with degrees taken from the weights.
    Normalized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

/// Whether the head reads single node embeddings or mean-pooled graphs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    Node,
    Graph,
}

/// Whether feature standardization uses statistics of the current batch
/// (training) or the statistics stored in the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    Batch,
    Frozen,
}

const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub layers: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub arch: Arch,
    /// Ignored by the attention architecture.
    #[serde(default)]
    pub aggregation: Aggregation,
    pub activation: Activation,
    pub add_self_loops: bool,
    /// Standardize each aggregated feature column before the bias.
    pub batch_norm: bool,
    pub readout: Readout,
}

impl GnnConfig {
    /// Three ReLU layers of width 20 with self-loops and feature standardization.
    pub fn new(input_dim: usize, num_classes: usize) -> Self {
        Self {
            layers: 3,
            input_dim,
            hidden_dim: 20,
            num_classes,
            arch: Arch::Gcn,
            aggregation: Aggregation::Sum,
            activation: Activation::Relu,
            add_self_loops: true,
            batch_norm: true,
            readout: Readout::Node,
        }
    }

    pub fn with_arch(mut self, arch: Arch) -> Self {
        self.arch = arch;
        self
    }

    pub fn with_aggregation(mut self, aggregation: Aggregation) -> Self {
        self.aggregation = aggregation;
        self
    }

    pub fn with_batch_norm(mut self, batch_norm: bool) -> Self {
        self.batch_norm = batch_norm;
        self
    }

    pub fn with_readout(mut self, readout: Readout) -> Self {
        self.readout = readout;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("at least one layer is required".into()));
        }
        if self.input_dim == 0 || self.hidden_dim == 0 || self.num_classes == 0 {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Per-column shift and scale applied to aggregated features when the
/// model runs with frozen statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Matrix,
    pub inv_std: Matrix,
}

impl NormStats {
    fn identity(dim: usize) -> Self {
        Self {
            mean: Matrix::zeros(1, dim),
            inv_std: Matrix::filled(1, dim, 1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub weight: Tensor,
    pub bias: Tensor,
    /// Attention vectors for the receiving and sending node (attention arch only).
    pub att_dst: Option<Tensor>,
    pub att_src: Option<Tensor>,
    /// Stored standardization statistics (batch-norm models only).
    pub norm: Option<NormStats>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GnnModel {
    config: GnnConfig,
    layers: Vec<LayerParams>,
    head_weight: Tensor,
    head_bias: Tensor,
}

/// Tape handles for every parameter of a model, in [`GnnModel::params`] order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    /// Wraps externally created variables, in [`GnnModel::params`] order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self { vars }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Variables produced by a forward pass on a tape.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    /// Last-layer node embeddings `z_i`.
    pub embeddings: Var,
    /// Attention coefficients per layer, one entry per looped pattern entry.
    pub attention: Vec<Var>,
    /// Per layer `(mean, inv_std)` computed in [`NormMode::Batch`].
    pub batch_stats: Vec<(Var, Var)>,
}

/// Plain (tape-free) forward result.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    pub probabilities: Matrix,
    pub embeddings: Matrix,
    /// Per layer, `(receiver, sender, coefficient)` for every attention entry.
    pub attention: Vec<Vec<(usize, usize, f64)>>,
}

/// Edge weights spread over the self-looped pattern (self-loops weigh 1),
/// built once per forward.
fn looped_entry_weights(tape: &mut Tape, cache: &mut Option<Var>, weights: Var, looped: &LoopedPattern) -> Result<Var> {
    if let Some(v) = *cache {
        return Ok(v);
    }
    let one = tape.constant(Matrix::scalar(1.0))?;
    let all = tape.concat_rows(weights, one)?;
    let v = tape.gather_rows(all, looped.weight_source.clone())?;
    *cache = Some(v);
    Ok(v)
}

/// Column-wise `(x - mean) / sqrt(var + eps)` over all rows, returning the
/// standardized matrix with the mean and inverse deviation rows.
fn standardize_columns(tape: &mut Tape, x: Var) -> Result<(Var, Var, Var)> {
    let n = tape.value(x).rows();
    if n == 0 {
        return Err(Error::Shape("cannot standardize an empty batch".into()));
    }
    let avg = tape.constant(Matrix::filled(1, n, 1.0 / n as f64))?;
    let mean = tape.matmul(avg, x)?;
    let neg = tape.scalar_mul(mean, -1.0)?;
    let centered = tape.add_row(x, neg)?;
    let sq = tape.hadamard(centered, centered)?;
    let var = tape.matmul(avg, sq)?;
    let var = tape.add_scalar(var, NORM_EPS)?;
    let log_var = tape.log(var)?;
    let half = tape.scalar_mul(log_var, -0.5)?;
    let inv_std = tape.exp(half)?;
    let normed = tape.mul_row(centered, inv_std)?;
    Ok((normed, mean, inv_std))
}

fn glorot(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-a..a))
}

impl GnnModel {
    /// Fresh model with Glorot-uniform weights and zero biases.
    pub fn new(config: GnnConfig, rng: &mut SeededRng) -> Result<Self> {
        config.validate()?;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let fan_in = if l == 0 { config.input_dim } else { config.hidden_dim };
            let weight = Tensor::parameter(glorot(fan_in, config.hidden_dim, rng));
            let bias = Tensor::parameter(Matrix::zeros(1, config.hidden_dim));
            let (att_dst, att_src) = match config.arch {
                Arch::Gcn => (None, None),
                Arch::Attention => (
                    Some(Tensor::parameter(glorot(config.hidden_dim, 1, rng))),
                    Some(Tensor::parameter(glorot(config.hidden_dim, 1, rng))),
                ),
            };
            let norm = config.batch_norm.then(|| NormStats::identity(config.hidden_dim));
            layers.push(LayerParams {
                weight,
                bias,
                att_dst,
                att_src,
                norm,
            });
        }
        let head_weight = Tensor::parameter(glorot(config.hidden_dim, config.num_classes, rng));
        let head_bias = Tensor::parameter(Matrix::zeros(1, config.num_classes));
        Ok(Self {
            config,
            layers,
            head_weight,
            head_bias,
        })
    }

    pub fn config(&self) -> &GnnConfig {
        &self.config
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    /// Named parameters in a fixed order.
    pub fn params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (l, p) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.weight"), &p.weight));
            out.push((format!("layer{l}.bias"), &p.bias));
            if let Some(a) = &p.att_dst {
                out.push((format!("layer{l}.att_dst"), a));
            }
            if let Some(a) = &p.att_src {
                out.push((format!("layer{l}.att_src"), a));
            }
        }
        out.push(("head.weight".into(), &self.head_weight));
        out.push(("head.bias".into(), &self.head_bias));
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for p in self.layers.iter_mut() {
            out.push(&mut p.weight);
            out.push(&mut p.bias);
            if let Some(a) = p.att_dst.as_mut() {
                out.push(a);
            }
            if let Some(a) = p.att_src.as_mut() {
                out.push(a);
            }
        }
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    /// Overwrites parameter values in [`GnnModel::params`] order.
    pub fn set_param_values(&mut self, values: Vec<Matrix>) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != values.len() {
            return Err(Error::Model(format!(
                "expected {} parameter blocks, got {}",
                params.len(),
                values.len()
            )));
        }
        for (p, v) in params.iter_mut().zip(values) {
            if p.shape() != v.shape() {
                return Err(Error::Model(format!(
                    "parameter shape {:?} does not match {:?}",
                    v.shape(),
                    p.shape()
                )));
            }
            *p.value_mut() = v;
        }
        Ok(())
    }

    /// Stored standardization statistics as named row vectors.
    pub fn norm_buffers(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (l, p) in self.layers.iter().enumerate() {
            if let Some(n) = &p.norm {
                out.push((format!("layer{l}.norm_mean"), &n.mean));
                out.push((format!("layer{l}.norm_inv_std"), &n.inv_std));
            }
        }
        out
    }

    /// Replaces stored statistics, one entry per layer.
    pub fn set_norm_stats(&mut self, stats: Vec<NormStats>) -> Result<()> {
        if !self.config.batch_norm || stats.len() != self.layers.len() {
            return Err(Error::Model(format!(
                "{} statistics blocks for {} layers (batch_norm = {})",
                stats.len(),
                self.layers.len(),
                self.config.batch_norm
            )));
        }
        for (layer, st) in self.layers.iter_mut().zip(stats) {
            let dim = self.config.hidden_dim;
            if st.mean.shape() != (1, dim) || st.inv_std.shape() != (1, dim) {
                return Err(Error::Model("statistics shape does not match hidden_dim".into()));
            }
            layer.norm = Some(st);
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape) -> Result<BoundParams> {
        let vars = self
            .params()
            .into_iter()
            .map(|(_, t)| tape.watch(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundParams { vars })
    }

    /// Binds parameters as constants (no gradient), for explaining a frozen model.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Result<BoundParams> {
        let vars = self
            .params()
            .into_iter()
            .map(|(_, t)| tape.constant(t.value().clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundParams { vars })
    }

    /// Message passing over `prop` with one weight per off-diagonal pattern
    /// entry (`weights`, `nnz x 1`) and node features `features` (`n x d`).
    pub fn embed_on_tape(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        prop: &Propagation,
        weights: Var,
        features: Var,
        mode: NormMode,
    ) -> Result<ForwardVars> {
        let fv = tape.value(features);
        if fv.cols() != self.config.input_dim || fv.rows() != prop.n() {
            return Err(Error::Shape(format!(
                "features {:?} for {} nodes and input_dim {}",
                fv.shape(),
                prop.n(),
                self.config.input_dim
            )));
        }
        let self_weight = if self.config.add_self_loops { 1.0 } else { 0.0 };
        let mut h = features;
        let mut attention = Vec::new();
        let mut batch_stats = Vec::new();
        let mut k = 0;
        let mut looped_weights = None;
        for layer in &self.layers {
            let w = params.vars[k];
            let b = params.vars[k + 1];
            k += 2;
            let hw = tape.matmul(h, w)?;
            let looped = prop.looped(self.config.add_self_loops);
            let agg = match self.config.arch {
                Arch::Gcn if std::env::var("GNNX_POSTNORM").is_ok() => {
                    let n = prop.n();
                    let mut deg = vec![self_weight; n];
                    for i in 0..n { deg[i] += prop.extra_degree()[i]; }
                    for &r in looped.receivers.iter() { deg[r] += 1.0; }
                    for i in 0..n { deg[i] -= if self.config.add_self_loops {1.0} else {0.0}; }
                    let norm: Vec<f64> = looped.receivers.iter().zip(looped.senders.iter()).map(|(&r, &s)| 1.0 / (deg[r] * deg[s]).sqrt()).collect();
                    let lw = match looped_weights {
                        Some(v) => v,
                        None => {
                            let one = tape.constant(Matrix::scalar(1.0))?;
                            let all = tape.concat_rows(weights, one)?;
                            let v = tape.gather_rows(all, looped.weight_source.clone())?;
                            looped_weights = Some(v);
                            v
                        }
                    };
                    let nc = tape.constant(Matrix::from_vec(norm.len(), 1, norm)?)?;
                    let coef = tape.hadamard(nc, lw)?;
                    tape.spmm(coef, looped.pattern.clone(), hw)?
                }
                Arch::Gcn if self.config.aggregation == Aggregation::Normalized => tape.gcn_aggregate(
                    weights,
                    prop.pattern().clone(),
                    hw,
                    self_weight,
                    prop.extra_degree(),
                )?,
                Arch::Gcn => {
                    let lw = looped_entry_weights(tape, &mut looped_weights, weights, looped)?;
                    tape.spmm(lw, looped.pattern.clone(), hw)?
                }
                Arch::Attention => {
                    let (a_dst, a_src) = (params.vars[k], params.vars[k + 1]);
                    k += 2;
                    let lw = looped_entry_weights(tape, &mut looped_weights, weights, looped)?;
                    let s_dst = tape.matmul(hw, a_dst)?;
                    let s_src = tape.matmul(hw, a_src)?;
                    let e_dst = tape.gather_rows(s_dst, looped.receivers.clone())?;
                    let e_src = tape.gather_rows(s_src, looped.senders.clone())?;
                    let e = tape.add(e_dst, e_src)?;
                    let e = tape.leaky_relu(e, ATTENTION_SLOPE)?;
                    let alpha = tape.segment_softmax(e, looped.pattern.clone())?;
                    attention.push(alpha);
                    let coef = tape.hadamard(alpha, lw)?;
                    tape.spmm(coef, looped.pattern.clone(), hw)?
                }
            };
            let agg = match (&layer.norm, mode) {
                (None, _) => agg,
                (Some(stats), NormMode::Frozen) => {
                    let shift = tape.constant(stats.mean.scale(-1.0))?;
                    let scale = tape.constant(stats.inv_std.clone())?;
                    let centered = tape.add_row(agg, shift)?;
                    tape.mul_row(centered, scale)?
                }
                (Some(_), NormMode::Batch) => {
                    let (normed, mean, inv_std) = standardize_columns(tape, agg)?;
                    batch_stats.push((mean, inv_std));
                    normed
                }
            };
            let pre = tape.add_row(agg, b)?;
            h = match self.config.activation {
                Activation::Relu => tape.relu(pre)?,
            };
        }
        Ok(ForwardVars {
            embeddings: h,
            attention,
            batch_stats,
        })
    }

    fn head_vars(&self, params: &BoundParams) -> (Var, Var) {
        let n = params.vars.len();
        (params.vars[n - 2], params.vars[n - 1])
    }

    /// Per-node class logits from embeddings.
    pub fn node_logits(&self, tape: &mut Tape, params: &BoundParams, embeddings: Var) -> Result<Var> {
        let (w, b) = self.head_vars(params);
        let z = tape.matmul(embeddings, w)?;
        tape.add_row(z, b)
    }

    /// Per-graph class logits; `segments` are the node ranges of each graph.
    pub fn graph_logits(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        embeddings: Var,
        segments: Arc<Vec<Range<usize>>>,
    ) -> Result<Var> {
        let pooled = tape.segment_mean_rows(embeddings, segments)?;
        self.node_logits(tape, params, pooled)
    }

    /// Forward pass over a propagation structure with explicit per-edge
    /// weights (one per undirected edge of `prop`).
    pub fn run(&self, prop: &Propagation, edge_weights: &[f64], features: &Matrix) -> Result<ForwardOutput> {
        let mut tape = Tape::new();
        let params = self.bind_frozen(&mut tape)?;
        let w = tape.constant(prop.entry_weights(edge_weights)?)?;
        let x = tape.constant(features.clone())?;
        let fwd = self.embed_on_tape(&mut tape, &params, prop, w, x, NormMode::Frozen)?;
        let logits = match self.config.readout {
            Readout::Node => self.node_logits(&mut tape, &params, fwd.embeddings)?,
            Readout::Graph => {
                let seg = Arc::new(vec![0..prop.n()]);
                if prop.n() == 0 {
                    return Err(Error::Shape("graph readout over an empty graph".into()));
                }
                self.graph_logits(&mut tape, &params, fwd.embeddings, seg)?
            }
        };
        let looped = prop.looped(self.config.add_self_loops);
        let attention = fwd
            .attention
            .iter()
            .map(|&a| {
                tape.value(a)
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(e, &c)| (looped.pattern.row_of(e), looped.pattern.col_of(e), c))
                    .collect()
            })
            .collect();
        Ok(ForwardOutput {
            probabilities: softmax_rows(tape.value(logits)),
            embeddings: tape.value(fwd.embeddings).clone(),
            attention,
        })
    }

    fn check_input_dim(&self, features: &Matrix) -> Result<()> {
        if features.cols() != self.config.input_dim {
            return Err(Error::Shape(format!(
                "model expects {} input features, got {}",
                self.config.input_dim,
                features.cols()
            )));
        }
        Ok(())
    }
}

/// Forward pass on a dense weighted adjacency. Entries must be nonnegative
/// and symmetric; zero entries are treated as absent edges. The output has
/// one probability row per node (node readout) or a single row (graph readout).
pub fn forward(model: &GnnModel, adjacency: &Matrix, features: &Matrix) -> Result<ForwardOutput> {
    let m = adjacency.rows();
    if adjacency.cols() != m || features.rows() != m {
        return Err(Error::Shape(format!(
            "adjacency {:?} with features {:?}",
            adjacency.shape(),
            features.shape()
        )));
    }
    model.check_input_dim(features)?;
    let mut edges = Vec::new();
    let mut weights = Vec::new();
    for i in 0..m {
        for j in 0..m {
            let w = adjacency.get(i, j);
            if w < 0.0 || w.is_nan() {
                return Err(Error::NegativeWeight {
                    row: i,
                    col: j,
                    value: w,
                });
            }
            if j > i && w > 0.0 {
                edges.push((i, j));
                weights.push(w);
            }
        }
    }
    if !adjacency.is_symmetric(0.0) {
        return Err(Error::Asymmetric);
    }
    let prop = Propagation::new(m, &edges, vec![0.0; m])?;
    model.run(&prop, &weights, features)
}

/// Node class probabilities over a whole graph.
pub fn forward_graph(model: &GnnModel, graph: &Graph) -> Result<ForwardOutput> {
    model.check_input_dim(graph.features())?;
    let prop = Propagation::from_graph(graph)?;
    model.run(&prop, &vec![1.0; graph.num_edges()], graph.features())
}

/// Forward pass restricted to a computation graph; `edge_weights` (one per
/// local edge) default to 1.
pub fn forward_computation_graph(
    model: &GnnModel,
    cg: &ComputationGraph,
    edge_weights: Option<&[f64]>,
) -> Result<ForwardOutput> {
    model.check_input_dim(cg.features())?;
    let prop = Propagation::from_computation_graph(cg)?;
    let ones;
    let w = match edge_weights {
        Some(w) => w,
        None => {
            ones = vec![1.0; cg.edges().len()];
            &ones
        }
    };
    model.run(&prop, w, cg.features())
}

/// Predicted class and distribution at the center of a computation graph.
pub fn predict_node(model: &GnnModel, cg: &ComputationGraph) -> Result<(usize, Vec<f64>)> {
    let center = cg
        .center()
        .ok_or_else(|| Error::Config("computation graph has no center".into()))?;
    if model.config.readout != Readout::Node {
        return Err(Error::Model("node prediction needs a node-readout model".into()));
    }
    let out = forward_computation_graph(model, cg, None)?;
    Ok((
        out.probabilities.argmax_row(center),
        out.probabilities.row(center).to_vec(),
    ))
}

/// Graph-level prediction from mean-pooled embeddings.
pub fn predict_graph(model: &GnnModel, graph: &Graph) -> Result<(usize, Vec<f64>)> {
    if model.config.readout != Readout::Graph {
        return Err(Error::Model("graph prediction needs a graph-readout model".into()));
    }
    let out = forward_graph(model, graph)?;
    Ok((out.probabilities.argmax_row(0), out.probabilities.row(0).to_vec()))
}

/// Final-layer embeddings `z_i` for every node.
pub fn node_embeddings(model: &GnnModel, graph: &Graph) -> Result<Matrix> {
    Ok(forward_graph(model, graph)?.embeddings)
}
