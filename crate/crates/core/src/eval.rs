//! Scoring explanations against planted motifs.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{attention_importance, grad_saliency, predicted_class, random_importance, ImportanceScores, Method};
use crate::diff::derived;
use crate::error::{Error, Result};
use crate::explain::{explain_graph, explain_node, extract_explanation_subgraph, top_k, ExplainerConfig, ExtractionMode};
use crate::gnn::GnnModel;
use crate::graph::Edge;
use crate::synth::{DatasetBundle, GraphDataset};

/// ROC-AUC with half credit for ties, via midranks. `None` when either
/// class is empty.
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len(), "one label per score");
    let pos = positive.iter().filter(|&&p| p).count();
    let neg = positive.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Some(u / (pos * neg) as f64)
}

/// AUC of edge scores against a ground-truth edge set, over the scored edges.
pub fn explanation_auc(scores: &ImportanceScores, gt: &BTreeSet<Edge>) -> Option<f64> {
    let labels: Vec<bool> = scores.edges.iter().map(|e| gt.contains(e)).collect();
    auc(&scores.edge_scores, &labels)
}

/// Fraction of positives among the `k` best scores, counting every score
/// tied with the `k`-th. `None` without positives.
pub fn accuracy_at_k(scores: &[f64], positive: &[bool], k: usize) -> Option<f64> {
    let pos = positive.iter().filter(|&&p| p).count();
    if pos == 0 || k == 0 || scores.is_empty() {
        return None;
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let cut = sorted[k.min(sorted.len()) - 1];
    let hits = (0..scores.len()).filter(|&i| positive[i] && scores[i] >= cut).count();
    Some(hits as f64 / pos as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSet {
    /// Motif nodes in the test split.
    #[default]
    Test,
    /// Every motif node.
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    pub explainer: ExplainerConfig,
    pub nodes: NodeSet,
    /// Evaluate at most this many nodes (the first ones by id).
    pub max_nodes: Option<usize>,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            explainer: ExplainerConfig::default(),
            nodes: NodeSet::Test,
            max_nodes: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeResult {
    pub method: Method,
    pub node: usize,
    pub auc: Option<f64>,
    pub accuracy_at_k: Option<f64>,
    /// Highest scoring feature dimension, when the method scores features.
    pub top_feature: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean_auc: f64,
    pub mean_accuracy_at_k: f64,
    pub evaluated: usize,
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub seed: u64,
    pub results: Vec<NodeResult>,
    pub summary: Vec<MethodSummary>,
    pub config: BenchmarkConfig,
}

impl EvalReport {
    pub fn summary_for(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }
}

/// Nodes a benchmark explains: motif members of the chosen set.
pub fn benchmark_nodes(data: &DatasetBundle, set: NodeSet, max: Option<usize>) -> Result<Vec<usize>> {
    let roles = data
        .graph
        .node_roles()
        .ok_or_else(|| Error::Config("dataset has no node roles".into()))?;
    let pool: Vec<usize> = match set {
        NodeSet::Test => data.split.test.clone(),
        NodeSet::All => (0..data.graph.n()).collect(),
    };
    let mut nodes: Vec<usize> = pool.into_iter().filter(|&v| roles[v] > 0).collect();
    nodes.sort_unstable();
    if let Some(m) = max {
        nodes.truncate(m);
    }
    Ok(nodes)
}

fn score_node(
    method: Method,
    data: &DatasetBundle,
    model: &GnnModel,
    att_model: Option<&GnnModel>,
    v: usize,
    config: &BenchmarkConfig,
) -> Result<ImportanceScores> {
    let g = &data.graph;
    let hops = model.config().layers;
    let mut rng = derived(config.seed, &format!("{}-{}", method.name(), v));
    match method {
        Method::Explainer => Ok((&explain_node(model, g, v, &config.explainer, &mut rng)?).into()),
        Method::Grad => {
            let cg = g.computation_graph(v, hops)?;
            grad_saliency(model, &cg, predicted_class(model, &cg)?)
        }
        Method::Att => {
            let att = att_model.ok_or_else(|| Error::Config("att needs an attention model".into()))?;
            attention_importance(att, &g.computation_graph(v, att.config().layers)?)
        }
        Method::Random => Ok(random_importance(&g.computation_graph(v, hops)?, &mut rng)),
    }
}

/// Explains every selected motif node with each method and compares the
/// edge scores with the node's own motif edges.
pub fn run_benchmark(
    data: &DatasetBundle,
    model: &GnnModel,
    att_model: Option<&GnnModel>,
    config: &BenchmarkConfig,
) -> Result<EvalReport> {
    let nodes = benchmark_nodes(data, config.nodes, config.max_nodes)?;
    let jobs: Vec<(Method, usize)> = config
        .methods
        .iter()
        .flat_map(|&m| nodes.iter().map(move |&v| (m, v)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(method, v)| {
            let scores = score_node(method, data, model, att_model, v, config)?;
            let gt = data.graph.motif_edges_of(v);
            let labels: Vec<bool> = scores.edges.iter().map(|e| gt.contains(e)).collect();
            let k = labels.iter().filter(|&&p| p).count();
            Ok(NodeResult {
                method,
                node: v,
                auc: auc(&scores.edge_scores, &labels),
                accuracy_at_k: accuracy_at_k(&scores.edge_scores, &labels, k),
                top_feature: scores.feature_scores.as_ref().and_then(|f| top_k(f, 1).first().copied()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = config
        .methods
        .iter()
        .map(|&method| {
            let rows: Vec<&NodeResult> = results.iter().filter(|r| r.method == method).collect();
            let aucs: Vec<f64> = rows.iter().filter_map(|r| r.auc).collect();
            let accs: Vec<f64> = rows.iter().filter_map(|r| r.accuracy_at_k).collect();
            let mean = |xs: &[f64]| {
                if xs.is_empty() {
                    f64::NAN
                } else {
                    xs.iter().sum::<f64>() / xs.len() as f64
                }
            };
            MethodSummary {
                method,
                mean_auc: mean(&aucs),
                mean_accuracy_at_k: mean(&accs),
                evaluated: aucs.len(),
                skipped: rows.len() - aucs.len(),
            }
        })
        .collect();
    Ok(EvalReport {
        dataset: data.name.clone(),
        seed: config.seed,
        results,
        summary,
        config: config.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphResult {
    pub method: Method,
    pub graph: usize,
    pub auc: Option<f64>,
    /// Ground-truth edges inside the largest component of the top
    /// `motif_size` selection.
    pub covered: usize,
    pub motif_edges: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphMethodSummary {
    pub method: Method,
    pub mean_auc: f64,
    /// Share of graphs whose explanation covers at least `min_covered` motif edges.
    pub coverage_rate: f64,
    pub min_covered: usize,
    pub evaluated: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphEvalReport {
    pub dataset: String,
    pub seed: u64,
    pub results: Vec<GraphResult>,
    pub summary: Vec<GraphMethodSummary>,
    pub config: BenchmarkConfig,
}

impl GraphEvalReport {
    pub fn summary_for(&self, method: Method) -> Option<&GraphMethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }
}

/// Explains every graph carrying a motif (test split, or all graphs) and
/// checks how much of the motif the largest selected component recovers.
/// `min_covered` sets the bar for the coverage rate.
pub fn run_graph_benchmark(
    data: &GraphDataset,
    model: &GnnModel,
    config: &BenchmarkConfig,
    min_covered: usize,
) -> Result<GraphEvalReport> {
    let pool: Vec<usize> = match config.nodes {
        NodeSet::Test => data.split.test.clone(),
        NodeSet::All => (0..data.graphs.len()).collect(),
    };
    let mut graphs: Vec<usize> = pool
        .into_iter()
        .filter(|&i| !data.graphs[i].gt_motif_edges().is_empty())
        .collect();
    graphs.sort_unstable();
    if let Some(m) = config.max_nodes {
        graphs.truncate(m);
    }
    let jobs: Vec<(Method, usize)> = config
        .methods
        .iter()
        .flat_map(|&m| graphs.iter().map(move |&i| (m, i)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(method, i)| {
            let g = &data.graphs[i];
            let cg = g.whole_computation_graph();
            let mut rng = derived(config.seed, &format!("{}-graph-{}", method.name(), i));
            let scores = match method {
                Method::Explainer => (&explain_graph(model, g, &config.explainer, &mut rng)?).into(),
                Method::Grad => grad_saliency(model, &cg, predicted_class(model, &cg)?)?,
                Method::Att => attention_importance(model, &cg)?,
                Method::Random => random_importance(&cg, &mut rng),
            };
            let gt = g.gt_motif_edges();
            let labels: Vec<bool> = scores.edges.iter().map(|e| gt.contains(e)).collect();
            let selection = extract_explanation_subgraph(&cg, &scores.edge_scores, data.motif_size, ExtractionMode::LargestComponent)?;
            let covered = selection.edges.iter().filter(|&&e| labels[e]).count();
            Ok(GraphResult {
                method,
                graph: i,
                auc: auc(&scores.edge_scores, &labels),
                covered,
                motif_edges: gt.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = config
        .methods
        .iter()
        .map(|&method| {
            let rows: Vec<&GraphResult> = results.iter().filter(|r| r.method == method).collect();
            let aucs: Vec<f64> = rows.iter().filter_map(|r| r.auc).collect();
            let n = rows.len().max(1) as f64;
            GraphMethodSummary {
                method,
                mean_auc: if aucs.is_empty() { f64::NAN } else { aucs.iter().sum::<f64>() / aucs.len() as f64 },
                coverage_rate: rows.iter().filter(|r| r.covered >= min_covered).count() as f64 / n,
                min_covered,
                evaluated: rows.len(),
            }
        })
        .collect();
    Ok(GraphEvalReport {
        dataset: data.name.clone(),
        seed: config.seed,
        results,
        summary,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.8, 0.7, 0.6, 0.5], &[true, false, true, false]), Some(0.75));
        assert_eq!(auc(&[0.3; 4], &[true, false, true, false]), Some(0.5));
        assert_eq!(auc(&[0.9, 0.1], &[true, false]), Some(1.0));
        assert_eq!(auc(&[0.9, 0.1], &[true, true]), None);
    }

    #[test]
    fn accuracy_at_k_examples() {
        let labels = [true, true, false, false];
        assert_eq!(accuracy_at_k(&[0.9, 0.8, 0.1, 0.2], &labels, 2), Some(1.0));
        assert_eq!(accuracy_at_k(&[0.1, 0.2, 0.9, 0.8], &labels, 2), Some(0.0));
        assert_eq!(accuracy_at_k(&[0.5, 0.5, 0.5, 0.1], &labels, 1), Some(1.0));
    }
}
