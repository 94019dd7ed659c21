//! Edge importance scores from gradients, attention coefficients and noise.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Matrix, SeededRng, Tape};
use crate::error::{Error, Result};
use crate::explain::Explanation;
use crate::gnn::{forward_computation_graph, Arch, GnnModel, NormMode, Propagation, Readout};
use crate::graph::{ComputationGraph, Edge};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Explainer,
    Grad,
    Att,
    Random,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Explainer, Method::Grad, Method::Att, Method::Random];

    pub fn name(self) -> &'static str {
        match self {
            Method::Explainer => "gnnx",
            Method::Grad => "grad",
            Method::Att => "att",
            Method::Random => "random",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gnnx" | "explainer" => Ok(Method::Explainer),
            "grad" => Ok(Method::Grad),
            "att" => Ok(Method::Att),
            "random" => Ok(Method::Random),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

/// One nonnegative score per computation-graph edge (global node pairs).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScores {
    pub method: Method,
    pub nodes: Vec<usize>,
    pub edges: Vec<Edge>,
    pub edge_scores: Vec<f64>,
    pub feature_scores: Option<Vec<f64>>,
}

impl ImportanceScores {
    fn new(method: Method, cg: &ComputationGraph, edge_scores: Vec<f64>, feature_scores: Option<Vec<f64>>) -> Self {
        Self {
            method,
            nodes: cg.local_to_global().to_vec(),
            edges: cg.edges().iter().map(|&e| cg.to_global_edge(e)).collect(),
            edge_scores,
            feature_scores,
        }
    }

    /// Dense symmetric score matrix over the local node ids.
    pub fn matrix(&self) -> Matrix {
        let m = self.nodes.len();
        let mut a = Matrix::zeros(m, m);
        for (&(u, v), &s) in self.edges.iter().zip(&self.edge_scores) {
            let i = self.nodes.binary_search(&u).expect("endpoint in node set");
            let j = self.nodes.binary_search(&v).expect("endpoint in node set");
            a.set(i, j, s);
            a.set(j, i, s);
        }
        a
    }
}

impl From<&Explanation> for ImportanceScores {
    fn from(e: &Explanation) -> Self {
        Self {
            method: Method::Explainer,
            nodes: e.nodes.clone(),
            edges: e.edges.clone(),
            edge_scores: e.edge_scores.clone(),
            feature_scores: Some(e.feature_scores.clone()),
        }
    }
}

fn prediction_row(model: &GnnModel, cg: &ComputationGraph) -> Result<usize> {
    match model.config().readout {
        Readout::Node => cg
            .center()
            .ok_or_else(|| Error::Config("node scores need a centered computation graph".into())),
        Readout::Graph => Ok(0),
    }
}

/// Class predicted on the unmasked computation graph.
pub fn predicted_class(model: &GnnModel, cg: &ComputationGraph) -> Result<usize> {
    let row = prediction_row(model, cg)?;
    Ok(forward_computation_graph(model, cg, None)?.probabilities.argmax_row(row))
}

/// `|∂CE/∂A[j,k]|` for the symmetric entry pair of every edge (half the
/// gradient of the undirected edge weight), taken at the unmasked adjacency,
/// and the mean `|∂CE/∂x|` per feature dimension.
pub fn grad_saliency(model: &GnnModel, cg: &ComputationGraph, target: usize) -> Result<ImportanceScores> {
    let classes = model.config().num_classes;
    if target >= classes {
        return Err(Error::LabelOutOfRange { label: target, classes });
    }
    let row = prediction_row(model, cg)?;
    let prop = Propagation::from_computation_graph(cg)?;
    let mut tape = Tape::new();
    let params = model.bind_frozen(&mut tape)?;
    let w = tape.leaf(prop.entry_weights(&vec![1.0; cg.edges().len()])?, true)?;
    let x = tape.leaf(cg.features().clone(), true)?;
    let fwd = model.embed_on_tape(&mut tape, &params, &prop, w, x, NormMode::Frozen)?;
    let logits = match model.config().readout {
        Readout::Node => model.node_logits(&mut tape, &params, fwd.embeddings)?,
        Readout::Graph => {
            let seg = Arc::new(vec![0..cg.num_nodes()]);
            model.graph_logits(&mut tape, &params, fwd.embeddings, seg)?
        }
    };
    let loss = tape.cross_entropy(logits, Arc::new(vec![(row, target)]))?;
    let grads = tape.backward(loss)?;
    let gw = grads.get(w).cloned().unwrap_or_else(|| Matrix::zeros(prop.pattern().nnz(), 1));
    let gx = grads.get(x).cloned().unwrap_or_else(|| Matrix::zeros(cg.num_nodes(), cg.features().cols()));
    let mut edge_scores = vec![0.0; cg.edges().len()];
    for (e, &k) in prop.entry_edge().iter().enumerate() {
        edge_scores[k] += 0.5 * gw.get(e, 0);
    }
    for s in &mut edge_scores {
        *s = s.abs();
    }
    let m = gx.rows().max(1) as f64;
    let feature_scores = (0..gx.cols())
        .map(|k| (0..gx.rows()).map(|i| gx.get(i, k).abs()).sum::<f64>() / m)
        .collect();
    Ok(ImportanceScores::new(Method::Grad, cg, edge_scores, Some(feature_scores)))
}

/// Mean attention coefficient across layers, averaged over both directions.
pub fn attention_importance(model: &GnnModel, cg: &ComputationGraph) -> Result<ImportanceScores> {
    if model.config().arch != Arch::Attention {
        return Err(Error::Model("attention scores need an attention model".into()));
    }
    let out = forward_computation_graph(model, cg, None)?;
    let index: BTreeMap<Edge, usize> = cg.edges().iter().enumerate().map(|(k, &e)| (e, k)).collect();
    let mut edge_scores = vec![0.0; cg.edges().len()];
    let layers = out.attention.len() as f64;
    for layer in &out.attention {
        for &(r, c, a) in layer {
            if r != c {
                let k = index[&(r.min(c), r.max(c))];
                edge_scores[k] += a / (2.0 * layers);
            }
        }
    }
    Ok(ImportanceScores::new(Method::Att, cg, edge_scores, None))
}

/// Independent uniform scores; a floor for the other methods.
pub fn random_importance(cg: &ComputationGraph, rng: &mut SeededRng) -> ImportanceScores {
    let edge_scores = (0..cg.edges().len()).map(|_| rng.gen::<f64>()).collect();
    let feature_scores = (0..cg.features().cols()).map(|_| rng.gen::<f64>()).collect();
    ImportanceScores::new(Method::Random, cg, edge_scores, Some(feature_scores))
}
