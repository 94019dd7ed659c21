use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{forward_graph, GnnModel, NormMode, NormStats, Propagation, Readout};
use crate::diff::{softmax_rows, AdamState, Matrix, Tape};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Disjoint train / validation / test index sets (nodes or graphs).
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 1000,
            lr: 0.001,
            weight_decay: 0.005,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Training loss before each update.
    pub losses: Vec<f64>,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

fn fraction_correct(predicted: &[usize], truth: &[usize], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    idx.iter().filter(|&&i| predicted[i] == truth[i]).count() as f64 / idx.len() as f64
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= classes) {
        Some(&label) => Err(Error::LabelOutOfRange { label, classes }),
        None => Ok(()),
    }
}

fn check_split(split: &Split, len: usize) -> Result<()> {
    for &i in split.train.iter().chain(&split.val).chain(&split.test) {
        if i >= len {
            return Err(Error::NodeOutOfRange { node: i, n: len });
        }
    }
    if split.train.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    Ok(())
}

/// Stores the full-batch standardization statistics of the current weights
/// in the model, so later forwards do not depend on which nodes are present.
pub fn freeze_norm_stats(
    model: &mut GnnModel,
    prop: &Propagation,
    entry_weights: &Matrix,
    features: &Matrix,
) -> Result<()> {
    if !model.config().batch_norm {
        return Ok(());
    }
    let mut tape = Tape::new();
    let params = model.bind_frozen(&mut tape)?;
    let w = tape.constant(entry_weights.clone())?;
    let x = tape.constant(features.clone())?;
    let fwd = model.embed_on_tape(&mut tape, &params, prop, w, x, NormMode::Batch)?;
    let stats = fwd
        .batch_stats
        .iter()
        .map(|&(m, s)| NormStats {
            mean: tape.value(m).clone(),
            inv_std: tape.value(s).clone(),
        })
        .collect();
    model.set_norm_stats(stats)
}

/// Node classification accuracy of `model` on the listed nodes.
pub fn accuracy(model: &GnnModel, graph: &Graph, nodes: &[usize]) -> Result<f64> {
    let labels = graph.labels().ok_or(Error::MissingLabels)?;
    let probs = forward_graph(model, graph)?.probabilities;
    let predicted: Vec<usize> = (0..graph.n()).map(|i| probs.argmax_row(i)).collect();
    Ok(fraction_correct(&predicted, labels, nodes))
}

/// Full-batch training with cross-entropy over the training nodes.
pub fn train_node_classifier(
    model: &mut GnnModel,
    graph: &Graph,
    split: &Split,
    options: &TrainOptions,
) -> Result<TrainReport> {
    if model.config().readout != Readout::Node {
        return Err(Error::Model("node training needs a node-readout model".into()));
    }
    let labels = graph.labels().ok_or(Error::MissingLabels)?;
    check_labels(labels, model.config().num_classes)?;
    check_split(split, graph.n())?;
    let prop = Propagation::from_graph(graph)?;
    let weights = prop.entry_weights(&vec![1.0; graph.num_edges()])?;
    let targets = Arc::new(split.train.iter().map(|&i| (i, labels[i])).collect::<Vec<_>>());
    let mut adam = AdamState::new(options.lr);
    adam.weight_decay = options.weight_decay;
    let mut losses = Vec::with_capacity(options.epochs);
    for _ in 0..options.epochs {
        let mut tape = Tape::new();
        let params = model.bind(&mut tape)?;
        let w = tape.constant(weights.clone())?;
        let x = tape.constant(graph.features().clone())?;
        let fwd = model.embed_on_tape(&mut tape, &params, &prop, w, x, NormMode::Batch)?;
        let logits = model.node_logits(&mut tape, &params, fwd.embeddings)?;
        let loss = tape.cross_entropy(logits, targets.clone())?;
        losses.push(tape.value(loss).as_scalar()?);
        let grads = tape.backward(loss)?;
        let mut tensors = model.params_mut();
        for (&v, t) in params.vars().iter().zip(tensors.iter_mut()) {
            grads.accumulate_into(v, t)?;
        }
        adam.step(&mut tensors)?;
    }
    freeze_norm_stats(model, &prop, &weights, graph.features())?;
    let probs = forward_graph(model, graph)?.probabilities;
    let predicted: Vec<usize> = (0..graph.n()).map(|i| probs.argmax_row(i)).collect();
    Ok(TrainReport {
        losses,
        train_accuracy: fraction_correct(&predicted, labels, &split.train),
        val_accuracy: fraction_correct(&predicted, labels, &split.val),
        test_accuracy: fraction_correct(&predicted, labels, &split.test),
    })
}

/// Graph classification over a set of graphs with one label each; the split
/// indexes into `graphs`.
pub fn train_graph_classifier(
    model: &mut GnnModel,
    graphs: &[Graph],
    labels: &[usize],
    split: &Split,
    options: &TrainOptions,
) -> Result<TrainReport> {
    if model.config().readout != Readout::Graph {
        return Err(Error::Model("graph training needs a graph-readout model".into()));
    }
    if graphs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} graphs with {} labels",
            graphs.len(),
            labels.len()
        )));
    }
    if let Some(g) = graphs.iter().find(|g| g.n() == 0) {
        return Err(Error::InvalidGraph(format!("empty graph among {} nodes", g.n())));
    }
    check_labels(labels, model.config().num_classes)?;
    check_split(split, graphs.len())?;
    let refs: Vec<&Graph> = graphs.iter().collect();
    let (prop, segments) = Propagation::batch(&refs)?;
    let segments = Arc::new(segments);
    let dim = model.config().input_dim;
    let mut features = Matrix::zeros(prop.n(), dim);
    for (g, seg) in graphs.iter().zip(segments.iter()) {
        if g.feature_dim() != dim {
            return Err(Error::Shape(format!(
                "graph features have {} columns, model expects {dim}",
                g.feature_dim()
            )));
        }
        for i in 0..g.n() {
            features.row_mut(seg.start + i).copy_from_slice(g.features().row(i));
        }
    }
    let weights = prop.entry_weights(&vec![1.0; prop.edges().len()])?;
    let targets = Arc::new(split.train.iter().map(|&i| (i, labels[i])).collect::<Vec<_>>());
    let mut adam = AdamState::new(options.lr);
    adam.weight_decay = options.weight_decay;
    let mut losses = Vec::with_capacity(options.epochs);
    let mut run = |model: &mut GnnModel, update: bool| -> Result<Matrix> {
        let mut tape = Tape::new();
        let params = if update {
            model.bind(&mut tape)?
        } else {
            model.bind_frozen(&mut tape)?
        };
        let w = tape.constant(weights.clone())?;
        let x = tape.constant(features.clone())?;
        let mode = if update { NormMode::Batch } else { NormMode::Frozen };
        let fwd = model.embed_on_tape(&mut tape, &params, &prop, w, x, mode)?;
        let logits = model.graph_logits(&mut tape, &params, fwd.embeddings, segments.clone())?;
        let out = tape.value(logits).clone();
        if update {
            let loss = tape.cross_entropy(logits, targets.clone())?;
            losses.push(tape.value(loss).as_scalar()?);
            let grads = tape.backward(loss)?;
            let mut tensors = model.params_mut();
            for (&v, t) in params.vars().iter().zip(tensors.iter_mut()) {
                grads.accumulate_into(v, t)?;
            }
            adam.step(&mut tensors)?;
        }
        Ok(out)
    };
    for _ in 0..options.epochs {
        run(model, true)?;
    }
    freeze_norm_stats(model, &prop, &weights, &features)?;
    let probs = softmax_rows(&run(model, false)?);
    let predicted: Vec<usize> = (0..graphs.len()).map(|i| probs.argmax_row(i)).collect();
    Ok(TrainReport {
        losses,
        train_accuracy: fraction_correct(&predicted, labels, &split.train),
        val_accuracy: fraction_correct(&predicted, labels, &split.val),
        test_accuracy: fraction_correct(&predicted, labels, &split.test),
    })
}
