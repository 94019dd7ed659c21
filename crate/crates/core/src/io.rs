//! File formats: JSON graphs and datasets, model checkpoints, explanation
//! JSON, Graphviz DOT and CSV reports.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::baselines::Method;
use crate::diff::{seeded, Matrix};
use crate::error::{Error, Result};
use crate::eval::{BenchmarkConfig, EvalReport, GraphEvalReport};
use crate::explain::{ExplainerConfig, Explanation};
use crate::gnn::{GnnConfig, GnnModel, NormStats, Split, TrainOptions};
use crate::graph::{Edge, Graph};
use crate::prototype::Prototype;
use crate::synth::{DatasetBundle, GraphDataset};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
const CHECKPOINT_FORMAT: &str = "gnnx-checkpoint";

fn pairs(edges: impl IntoIterator<Item = Edge>) -> Vec<[usize; 2]> {
    edges.into_iter().map(|(u, v)| [u, v]).collect()
}

/// One graph with its annotations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub n: usize,
    pub edges: Vec<[usize; 2]>,
    pub features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roles: Option<Vec<usize>>,
    #[serde(default)]
    pub gt_edges: Vec<[usize; 2]>,
    #[serde(default)]
    pub meta: Value,
}

impl GraphJson {
    pub fn from_graph(g: &Graph, meta: Value) -> Self {
        Self {
            n: g.n(),
            edges: pairs(g.edges().iter().copied()),
            features: (0..g.n()).map(|i| g.features().row(i).to_vec()).collect(),
            labels: g.labels().map(<[usize]>::to_vec),
            roles: g.node_roles().map(<[usize]>::to_vec),
            gt_edges: pairs(g.gt_motif_edges().iter().copied()),
            meta,
        }
    }

    pub fn to_graph(&self) -> Result<Graph> {
        let features = if self.features.is_empty() && self.n > 0 {
            return Err(Error::Format("graph without feature rows".into()));
        } else if self.n == 0 {
            Matrix::zeros(0, self.features.first().map_or(0, Vec::len))
        } else {
            Matrix::from_rows(&self.features)?
        };
        let mut g = Graph::new(
            self.n,
            self.edges.iter().map(|&[u, v]| (u, v)),
            features,
            self.labels.clone(),
        )?;
        if let Some(r) = &self.roles {
            g = g.with_roles(r.clone())?;
        }
        g.with_ground_truth(self.gt_edges.iter().map(|&[u, v]| (u, v)))
    }
}

/// Node-classification dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDatasetJson {
    pub name: String,
    pub seed: u64,
    pub version: String,
    #[serde(flatten)]
    pub graph: GraphJson,
    pub split: Split,
    pub num_classes: usize,
    pub motif_size: usize,
    pub informative_feature: Option<usize>,
}

/// Graph-classification dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDatasetJson {
    pub name: String,
    pub seed: u64,
    pub version: String,
    pub graphs: Vec<GraphJson>,
    pub graph_labels: Vec<usize>,
    pub split: Split,
    pub num_classes: usize,
    pub motif_size: usize,
    pub meta: Value,
}

/// Either kind of benchmark.
#[derive(Clone, Debug, PartialEq)]
pub enum Dataset {
    Node(DatasetBundle),
    Graph(GraphDataset),
}

impl Dataset {
    pub fn name(&self) -> &str {
        match self {
            Dataset::Node(d) => &d.name,
            Dataset::Graph(d) => &d.name,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Dataset::Node(d) => d.seed,
            Dataset::Graph(d) => d.seed,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let value = match self {
            Dataset::Node(d) => {
                let mut v = serde_json::to_value(NodeDatasetJson {
                    name: d.name.clone(),
                    seed: d.seed,
                    version: VERSION.into(),
                    graph: GraphJson::from_graph(&d.graph, d.meta.clone()),
                    split: d.split.clone(),
                    num_classes: d.num_classes,
                    motif_size: d.motif_size,
                    informative_feature: d.informative_feature,
                })?;
                v["task"] = "node".into();
                v
            }
            Dataset::Graph(d) => {
                let mut v = serde_json::to_value(GraphDatasetJson {
                    name: d.name.clone(),
                    seed: d.seed,
                    version: VERSION.into(),
                    graphs: d.graphs.iter().map(|g| GraphJson::from_graph(g, Value::Null)).collect(),
                    graph_labels: d.labels.clone(),
                    split: d.split.clone(),
                    num_classes: d.num_classes,
                    motif_size: d.motif_size,
                    meta: d.meta.clone(),
                })?;
                v["task"] = "graph".into();
                v
            }
        };
        Ok(serde_json::to_string(&value)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text)?;
        let task = value
            .as_object_mut()
            .and_then(|o| o.remove("task"))
            .ok_or_else(|| Error::Format("dataset file has no \"task\" field".into()))?;
        match task.as_str() {
            Some("node") => {
                let f: NodeDatasetJson = serde_json::from_value(value)?;
                Ok(Dataset::Node(DatasetBundle {
                    graph: f.graph.to_graph()?,
                    name: f.name,
                    seed: f.seed,
                    split: f.split,
                    num_classes: f.num_classes,
                    motif_size: f.motif_size,
                    informative_feature: f.informative_feature,
                    meta: f.graph.meta,
                }))
            }
            Some("graph") => {
                let f: GraphDatasetJson = serde_json::from_value(value)?;
                Ok(Dataset::Graph(GraphDataset {
                    graphs: f.graphs.iter().map(GraphJson::to_graph).collect::<Result<_>>()?,
                    labels: f.graph_labels,
                    name: f.name,
                    seed: f.seed,
                    split: f.split,
                    num_classes: f.num_classes,
                    motif_size: f.motif_size,
                    meta: f.meta,
                }))
            }
            _ => Err(Error::Format(format!("unknown task {task}"))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(fs::write(path, self.to_json()?)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

/// A matrix as shape plus base64 of its row-major little-endian `f64`s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: String,
}

impl Blob {
    pub fn encode(name: &str, m: &Matrix) -> Self {
        let bytes: Vec<u8> = m.data().iter().flat_map(|x| x.to_le_bytes()).collect();
        Self {
            name: name.into(),
            rows: m.rows(),
            cols: m.cols(),
            data: STANDARD.encode(bytes),
        }
    }

    pub fn decode(&self) -> Result<Matrix> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| Error::Format(format!("blob {}: {e}", self.name)))?;
        if bytes.len() != self.rows * self.cols * 8 {
            return Err(Error::Format(format!(
                "blob {} holds {} bytes for a {}x{} matrix",
                self.name,
                bytes.len(),
                self.rows,
                self.cols
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Matrix::from_vec(self.rows, self.cols, data)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: String,
    pub config: GnnConfig,
    pub params: Vec<Blob>,
    #[serde(default)]
    pub buffers: Vec<Blob>,
    /// Free-form provenance (dataset, seed, training options, accuracies).
    #[serde(default)]
    pub meta: Value,
}

impl Checkpoint {
    pub fn from_model(model: &GnnModel, meta: Value) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: VERSION.into(),
            config: model.config().clone(),
            params: model.params().iter().map(|(n, t)| Blob::encode(n, t.value())).collect(),
            buffers: model.norm_buffers().iter().map(|(n, m)| Blob::encode(n, m)).collect(),
            meta,
        }
    }

    pub fn to_model(&self) -> Result<GnnModel> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("not a checkpoint: format {:?}", self.format)));
        }
        let mut model = GnnModel::new(self.config.clone(), &mut seeded(0))?;
        let names: Vec<String> = model.params().into_iter().map(|(n, _)| n).collect();
        if names.len() != self.params.len() || names.iter().zip(&self.params).any(|(n, b)| *n != b.name) {
            return Err(Error::Format("checkpoint parameters do not match the config".into()));
        }
        model.set_param_values(self.params.iter().map(Blob::decode).collect::<Result<_>>()?)?;
        if self.config.batch_norm {
            let values = self.buffers.iter().map(Blob::decode).collect::<Result<Vec<_>>>()?;
            if values.len() != 2 * self.config.layers {
                return Err(Error::Format("checkpoint lacks normalization statistics".into()));
            }
            let stats = values
                .chunks_exact(2)
                .map(|c| NormStats {
                    mean: c[0].clone(),
                    inv_std: c[1].clone(),
                })
                .collect();
            model.set_norm_stats(stats)?;
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(fs::write(path, self.to_json()?)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Everything needed to rerun an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub seed: u64,
    pub model: GnnConfig,
    pub training: TrainOptions,
    pub explainer: ExplainerConfig,
    pub methods: Vec<Method>,
    pub output_dir: String,
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Explanation JSON with provenance.
pub fn explanation_json(explanation: &Explanation, meta: Value) -> Result<String> {
    let mut v = serde_json::to_value(explanation)?;
    v["version"] = VERSION.into();
    v["meta"] = meta;
    Ok(serde_json::to_string_pretty(&v)?)
}

/// Graphviz rendering of scored edges. Ground-truth edges are solid and the
/// rest dashed; selected edges are red; opacity follows the score; the
/// explained node is drawn with a double circle.
pub fn to_dot(
    edges: &[Edge],
    scores: &[f64],
    selected: &BTreeSet<Edge>,
    ground_truth: &BTreeSet<Edge>,
    center: Option<usize>,
) -> String {
    let mut out = String::from("graph explanation {\n  node [shape=circle];\n");
    let mut nodes: BTreeSet<usize> = edges.iter().flat_map(|&(u, v)| [u, v]).collect();
    nodes.extend(center);
    for v in nodes {
        if Some(v) == center {
            let _ = writeln!(out, "  {v} [shape=doublecircle];");
        } else {
            let _ = writeln!(out, "  {v};");
        }
    }
    for (&(u, v), &s) in edges.iter().zip(scores) {
        let alpha = (s.clamp(0.0, 1.0) * 255.0).round() as u8;
        let color = if selected.contains(&(u, v)) { "ff0000" } else { "000000" };
        let style = if ground_truth.contains(&(u, v)) { "solid" } else { "dashed" };
        let _ = writeln!(
            out,
            "  {u} -- {v} [color=\"#{color}{alpha:02x}\", style={style}, label=\"{s:.3}\"];"
        );
    }
    out.push_str("}\n");
    out
}

/// DOT for an explanation, with ground truth from the source graph.
pub fn explanation_dot(explanation: &Explanation, graph: Option<&Graph>) -> String {
    let selected: BTreeSet<Edge> = explanation.selected_edges.iter().copied().collect();
    let gt = graph.map(|g| g.gt_motif_edges().clone()).unwrap_or_default();
    to_dot(&explanation.edges, &explanation.edge_scores, &selected, &gt, explanation.node)
}

/// DOT for a class prototype: every positive entry of the median adjacency,
/// with opacity equal to the weight. Nodes carry the reference node's ids.
pub fn prototype_dot(prototype: &Prototype) -> String {
    let a = &prototype.adjacency;
    let mut out = format!("graph prototype_{} {{\n  node [shape=circle];\n", prototype.class);
    for (i, v) in prototype.nodes.iter().enumerate() {
        let shape = if *v == prototype.reference { "shape=doublecircle, " } else { "" };
        let _ = writeln!(out, "  n{i} [{shape}label=\"{v}\"];");
    }
    for i in 0..a.rows() {
        for j in i + 1..a.cols() {
            let w = a.get(i, j);
            if w > 0.0 {
                let alpha = (w.clamp(0.0, 1.0) * 255.0).round() as u8;
                let _ = writeln!(out, "  n{i} -- n{j} [color=\"#000000{alpha:02x}\", label=\"{w:.3}\"];");
            }
        }
    }
    out.push_str("}\n");
    out
}

/// Per-node CSV: `dataset,method,node,auc,acc_at_k`, blank for skipped nodes.
pub fn eval_csv(report: &EvalReport) -> String {
    let mut out = String::from("dataset,method,node,auc,acc_at_k\n");
    let fmt = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_default();
    for r in &report.results {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            report.dataset,
            r.method.name(),
            r.node,
            fmt(r.auc),
            fmt(r.accuracy_at_k)
        );
    }
    out
}

/// Summary CSV: `dataset,method,mean_auc,mean_acc_at_k,evaluated,skipped`.
pub fn summary_csv(report: &EvalReport) -> String {
    let mut out = String::from("dataset,method,mean_auc,mean_acc_at_k,evaluated,skipped\n");
    for s in &report.summary {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{},{}",
            report.dataset,
            s.method.name(),
            s.mean_auc,
            s.mean_accuracy_at_k,
            s.evaluated,
            s.skipped
        );
    }
    out
}

/// Per-graph CSV: `dataset,method,graph,auc,covered,motif_edges`.
pub fn graph_eval_csv(report: &GraphEvalReport) -> String {
    let mut out = String::from("dataset,method,graph,auc,covered,motif_edges\n");
    for r in &report.results {
        let auc = r.auc.map(|v| format!("{v:.6}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            report.dataset,
            r.method.name(),
            r.graph,
            auc,
            r.covered,
            r.motif_edges
        );
    }
    out
}

/// Summary CSV: `dataset,method,mean_auc,coverage_rate,min_covered,evaluated`.
pub fn graph_summary_csv(report: &GraphEvalReport) -> String {
    let mut out = String::from("dataset,method,mean_auc,coverage_rate,min_covered,evaluated\n");
    for s in &report.summary {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{},{}",
            report.dataset,
            s.method.name(),
            s.mean_auc,
            s.coverage_rate,
            s.min_covered,
            s.evaluated
        );
    }
    out
}

/// Sidecar JSON for CSV outputs: configuration and version.
pub fn report_meta(config: &BenchmarkConfig, extra: Value) -> Result<String> {
    let v = serde_json::json!({
        "version": VERSION,
        "config": config,
        "extra": extra,
    });
    Ok(serde_json::to_string_pretty(&v)?)
}
