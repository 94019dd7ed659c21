//! The `gnnx` command line: generate, train, explain, evaluate, prototype.
//!
//! Every file written carries the toolkit version, the seed and the parsed
//! command line minus the output path and worker count, so reruns into a
//! different location are byte-identical. CSV reports get a `.meta.json`
//! sidecar for that.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::baselines::{attention_importance, grad_saliency, predicted_class, ImportanceScores, Method};
use crate::diff::derived;
use crate::error::{Error, Result};
use crate::eval::{run_benchmark, run_graph_benchmark, BenchmarkConfig, NodeSet};
use crate::explain::{explain_graph, explain_node, extract_explanation_subgraph, ExplainerConfig, ExtractionMode};
use crate::gnn::{train_graph_classifier, train_node_classifier, Aggregation, Arch, GnnConfig, GnnModel, Readout, TrainOptions};
use crate::graph::{ComputationGraph, Edge, Graph};
use crate::io::*;
use crate::prototype::{build_class_prototype, AlignOptions, PrototypeConfig};
use crate::synth::{generate_cycliq, generate_named, CYCLIQ_GRAPHS, CYCLIQ_SIZES};

#[derive(Debug, Parser, Serialize)]
#[command(name = "gnnx", version, about = "Explain GNN predictions on synthetic motif benchmarks")]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "GNNX_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for parallel work (all cores when absent).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Write a synthetic benchmark as JSON.
    Generate(GenerateArgs),
    /// Train a GCN or attention model and write a checkpoint.
    Train(TrainArgs),
    /// Explain one node or one graph.
    Explain(ExplainArgs),
    /// Score explanation methods against the planted motifs.
    Evaluate(EvaluateArgs),
    /// Build a class prototype from aligned explanations.
    Prototype(PrototypeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum DatasetName {
    BaShapes,
    BaCommunity,
    TreeCycles,
    TreeGrid,
    Cycliq,
}

impl DatasetName {
    fn as_str(self) -> &'static str {
        match self {
            DatasetName::BaShapes => "ba-shapes",
            DatasetName::BaCommunity => "ba-community",
            DatasetName::TreeCycles => "tree-cycles",
            DatasetName::TreeGrid => "tree-grid",
            DatasetName::Cycliq => "cycliq",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long, value_enum)]
    pub dataset: DatasetName,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum ArchArg {
    Gcn,
    Attention,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum AggregationArg {
    Sum,
    Normalized,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = ArchArg::Gcn)]
    pub arch: ArchArg,
    #[arg(long, value_enum, default_value_t = AggregationArg::Sum)]
    pub aggregation: AggregationArg,
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.005)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 20)]
    pub hidden: usize,
    #[arg(long, default_value_t = 3)]
    pub layers: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

/// Explainer settings; unset flags keep the defaults (or the values from
/// `--explainer-config`). `--max-edges` defaults to the dataset's motif size.
#[derive(Debug, Args, Serialize, Default)]
pub struct ExplainerArgs {
    /// JSON file with a full explainer configuration.
    #[arg(long)]
    pub explainer_config: Option<PathBuf>,
    #[arg(long)]
    pub explainer_epochs: Option<usize>,
    #[arg(long)]
    pub explainer_lr: Option<f64>,
    #[arg(long)]
    pub size: Option<f64>,
    #[arg(long)]
    pub entropy: Option<f64>,
    #[arg(long)]
    pub laplacian: Option<f64>,
    #[arg(long)]
    pub feature_size: Option<f64>,
    #[arg(long)]
    pub max_edges: Option<usize>,
}

impl ExplainerArgs {
    fn resolve(&self, motif_size: usize) -> Result<ExplainerConfig> {
        let mut c = match &self.explainer_config {
            Some(p) => serde_json::from_str(&read(p)?)?,
            None => ExplainerConfig {
                max_edges: motif_size,
                ..ExplainerConfig::default()
            },
        };
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut c.lr, self.explainer_lr);
        set(&mut c.size_coef, self.size);
        set(&mut c.entropy_coef, self.entropy);
        set(&mut c.laplacian_coef, self.laplacian);
        set(&mut c.feature_size_coef, self.feature_size);
        c.epochs = self.explainer_epochs.unwrap_or(c.epochs);
        c.max_edges = self.max_edges.unwrap_or(c.max_edges);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
pub enum ExplainMethod {
    Gnnx,
    Grad,
    Att,
}

#[derive(Debug, Args, Serialize)]
pub struct ExplainArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, conflicts_with = "graph_id", required_unless_present = "graph_id")]
    pub node: Option<usize>,
    #[arg(long)]
    pub graph_id: Option<usize>,
    /// `att` expects an attention checkpoint.
    #[arg(long, value_enum, default_value_t = ExplainMethod::Gnnx)]
    pub method: ExplainMethod,
    #[command(flatten)]
    pub explainer: ExplainerArgs,
    /// Output directory for the explanation JSON and DOT files.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum NodeSetArg {
    Test,
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Attention checkpoint for the `att` method.
    #[arg(long)]
    pub att_ckpt: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated subset of gnnx, grad, att, random.
    #[arg(long, value_delimiter = ',', default_value = "gnnx,grad,random")]
    pub methods: Vec<String>,
    #[arg(long, value_enum, default_value_t = NodeSetArg::Test)]
    pub nodes: NodeSetArg,
    #[arg(long)]
    pub max_nodes: Option<usize>,
    /// Graph datasets: motif edges the largest component must recover.
    #[arg(long, default_value_t = 5)]
    pub min_covered: usize,
    #[command(flatten)]
    pub explainer: ExplainerArgs,
    /// Per-item CSV; the summary and metadata go next to it.
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PrototypeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub class: usize,
    #[arg(long, default_value_t = 10)]
    pub max_members: usize,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    /// Threshold for the reported prototype edges.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[command(flatten)]
    pub explainer: ExplainerArgs,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    Dataset::from_json(&read(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<GnnModel> {
    let ck: Checkpoint = serde_json::from_str(&read(path)?).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    ck.to_model()
}

fn provenance(cli: &Cli) -> Value {
    json!({ "version": VERSION, "seed": cli.seed, "args": cli })
}

/// Parses `args` and runs the command, returning the lines to print.
pub fn run<I, T>(args: I) -> Result<Vec<String>>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    execute(&cli)
}

pub fn execute(cli: &Cli) -> Result<Vec<String>> {
    match cli.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }
}

fn dispatch(cli: &Cli) -> Result<Vec<String>> {
    match &cli.command {
        Command::Generate(a) => generate(cli, a),
        Command::Train(a) => train(cli, a),
        Command::Explain(a) => explain(cli, a),
        Command::Evaluate(a) => evaluate(cli, a),
        Command::Prototype(a) => prototype(cli, a),
    }
}

fn generate(cli: &Cli, a: &GenerateArgs) -> Result<Vec<String>> {
    let data = match a.dataset {
        DatasetName::Cycliq => Dataset::Graph(generate_cycliq(cli.seed, CYCLIQ_GRAPHS, CYCLIQ_SIZES)?),
        other => Dataset::Node(generate_named(other.as_str(), cli.seed)?),
    };
    write(&a.out, &data.to_json()?)?;
    let size = match &data {
        Dataset::Node(d) => format!("{} nodes, {} edges", d.graph.n(), d.graph.num_edges()),
        Dataset::Graph(d) => format!("{} graphs", d.graphs.len()),
    };
    Ok(vec![format!("wrote {} (seed {}, {size}) to {}", data.name(), cli.seed, a.out.display())])
}

fn train(cli: &Cli, a: &TrainArgs) -> Result<Vec<String>> {
    let data = load_dataset(&a.data)?;
    let arch = match a.arch {
        ArchArg::Gcn => Arch::Gcn,
        ArchArg::Attention => Arch::Attention,
    };
    let aggregation = match a.aggregation {
        AggregationArg::Sum => Aggregation::Sum,
        AggregationArg::Normalized => Aggregation::Normalized,
    };
    let options = TrainOptions {
        epochs: a.epochs,
        lr: a.lr,
        weight_decay: a.weight_decay,
    };
    let mut rng = derived(cli.seed, "model");
    let (model, report) = match &data {
        Dataset::Node(d) => {
            let cfg = GnnConfig {
                hidden_dim: a.hidden,
                layers: a.layers,
                ..GnnConfig::new(d.graph.feature_dim(), d.num_classes)
                    .with_arch(arch)
                    .with_aggregation(aggregation)
            };
            let mut model = GnnModel::new(cfg, &mut rng)?;
            let report = train_node_classifier(&mut model, &d.graph, &d.split, &options)?;
            (model, report)
        }
        Dataset::Graph(d) => {
            let dim = d.graphs.first().map_or(0, Graph::feature_dim);
            let cfg = GnnConfig {
                hidden_dim: a.hidden,
                layers: a.layers,
                ..GnnConfig::new(dim, d.num_classes)
                    .with_arch(arch)
                    .with_aggregation(aggregation)
                    .with_readout(Readout::Graph)
            };
            let mut model = GnnModel::new(cfg, &mut rng)?;
            let report = train_graph_classifier(&mut model, &d.graphs, &d.labels, &d.split, &options)?;
            (model, report)
        }
    };
    let meta = json!({
        "provenance": provenance(cli),
        "dataset": data.name(),
        "data_seed": data.seed(),
        "training": options,
        "train_accuracy": report.train_accuracy,
        "val_accuracy": report.val_accuracy,
        "test_accuracy": report.test_accuracy,
        "final_loss": report.losses.last(),
    });
    write(&a.out, &Checkpoint::from_model(&model, meta).to_json()?)?;
    Ok(vec![
        format!(
            "{} on {}: train {:.3} val {:.3} test {:.3}",
            arch_name(arch),
            data.name(),
            report.train_accuracy,
            report.val_accuracy,
            report.test_accuracy
        ),
        format!("wrote checkpoint to {}", a.out.display()),
    ])
}

fn arch_name(arch: Arch) -> &'static str {
    match arch {
        Arch::Gcn => "gcn",
        Arch::Attention => "attention",
    }
}

/// Scores and top-`k` selection for a baseline, in the explanation layout.
fn baseline_json(scores: &ImportanceScores, cg: &ComputationGraph, k: usize, mode: ExtractionMode, meta: Value) -> Result<(String, Vec<Edge>)> {
    let selection = extract_explanation_subgraph(cg, &scores.edge_scores, k, mode)?;
    let selected: Vec<Edge> = selection.edges.iter().map(|&e| scores.edges[e]).collect();
    let v = json!({
        "method": scores.method,
        "node": cg.center().map(|c| cg.local_to_global()[c]),
        "nodes": scores.nodes,
        "edges": scores.edges,
        "edge_scores": scores.edge_scores,
        "feature_scores": scores.feature_scores,
        "selected_edges": selected,
        "threshold": selection.threshold,
        "undersized": selection.undersized,
        "version": VERSION,
        "meta": meta,
    });
    Ok((serde_json::to_string_pretty(&v)?, selected))
}

fn explain(cli: &Cli, a: &ExplainArgs) -> Result<Vec<String>> {
    let data = load_dataset(&a.data)?;
    let model = load_model(&a.ckpt)?;
    let (graph, motif_size, label) = match (&data, a.node, a.graph_id) {
        (Dataset::Node(d), Some(v), None) => (&d.graph, d.motif_size, format!("node_{v}")),
        (Dataset::Graph(d), None, Some(g)) => {
            let graph = d
                .graphs
                .get(g)
                .ok_or_else(|| Error::Config(format!("graph {g} out of range ({} graphs)", d.graphs.len())))?;
            (graph, d.motif_size, format!("graph_{g}"))
        }
        (Dataset::Node(_), _, _) => return Err(Error::Config("node datasets need --node".into())),
        (Dataset::Graph(_), _, _) => return Err(Error::Config("graph datasets need --graph-id".into())),
    };
    let config = a.explainer.resolve(motif_size)?;
    let method = match a.method {
        ExplainMethod::Gnnx => "gnnx",
        ExplainMethod::Grad => "grad",
        ExplainMethod::Att => "att",
    };
    let meta = json!({
        "provenance": provenance(cli),
        "dataset": data.name(),
        "data_seed": data.seed(),
        "checkpoint": a.ckpt,
        "explainer": config,
    });
    let mut rng = derived(cli.seed, &format!("{method}-{label}"));
    let (text, dot, selected) = match (a.method, a.node) {
        (ExplainMethod::Gnnx, Some(v)) => {
            let e = explain_node(&model, graph, v, &config, &mut rng)?;
            (explanation_json(&e, meta)?, explanation_dot(&e, Some(graph)), e.selected_edges.clone())
        }
        (ExplainMethod::Gnnx, None) => {
            let e = explain_graph(&model, graph, &config, &mut rng)?;
            (explanation_json(&e, meta)?, explanation_dot(&e, Some(graph)), e.selected_edges.clone())
        }
        (m, node) => {
            let (cg, mode) = match node {
                Some(v) => (graph.computation_graph(v, model.config().layers)?, ExtractionMode::NodeCentered),
                None => (graph.whole_computation_graph(), ExtractionMode::LargestComponent),
            };
            let scores = if m == ExplainMethod::Grad {
                grad_saliency(&model, &cg, predicted_class(&model, &cg)?)?
            } else {
                attention_importance(&model, &cg)?
            };
            let (text, selected) = baseline_json(&scores, &cg, config.max_edges, mode, meta)?;
            let sel: BTreeSet<Edge> = selected.iter().copied().collect();
            let dot = to_dot(&scores.edges, &scores.edge_scores, &sel, graph.gt_motif_edges(), node);
            (text, dot, selected)
        }
    };
    let json_path = a.out.join(format!("{label}_{method}.json"));
    let dot_path = a.out.join(format!("{label}_{method}.dot"));
    write(&json_path, &text)?;
    write(&dot_path, &dot)?;
    Ok(vec![
        format!("{method} {label}: selected {selected:?}"),
        format!("wrote {} and {}", json_path.display(), dot_path.display()),
    ])
}

fn evaluate(cli: &Cli, a: &EvaluateArgs) -> Result<Vec<String>> {
    let data = load_dataset(&a.data)?;
    let model = load_model(&a.ckpt)?;
    let att = a.att_ckpt.as_deref().map(load_model).transpose()?;
    let methods = a.methods.iter().map(|m| m.parse()).collect::<Result<Vec<Method>>>()?;
    let motif_size = match &data {
        Dataset::Node(d) => d.motif_size,
        Dataset::Graph(d) => d.motif_size,
    };
    let config = BenchmarkConfig {
        methods,
        explainer: a.explainer.resolve(motif_size)?,
        nodes: match a.nodes {
            NodeSetArg::Test => NodeSet::Test,
            NodeSetArg::All => NodeSet::All,
        },
        max_nodes: a.max_nodes,
        seed: cli.seed,
    };
    let extra = json!({
        "provenance": provenance(cli),
        "dataset": data.name(),
        "data_seed": data.seed(),
        "checkpoint": a.ckpt,
        "att_checkpoint": a.att_ckpt,
    });
    let summary_path = sibling(&a.out, "_summary.csv");
    let meta_path = sibling(&a.out, ".meta.json");
    let mut lines = Vec::new();
    match &data {
        Dataset::Node(d) => {
            let report = run_benchmark(d, &model, att.as_ref(), &config)?;
            write(&a.out, &eval_csv(&report))?;
            write(&summary_path, &summary_csv(&report))?;
            for s in &report.summary {
                lines.push(format!(
                    "{:<6} auc {:.3}  acc@k {:.3}  nodes {} (skipped {})",
                    s.method.name(),
                    s.mean_auc,
                    s.mean_accuracy_at_k,
                    s.evaluated,
                    s.skipped
                ));
            }
        }
        Dataset::Graph(d) => {
            if config.methods.contains(&Method::Att) && att.is_some() {
                return Err(Error::Config("graph evaluation scores att with --ckpt itself".into()));
            }
            let report = run_graph_benchmark(d, &model, &config, a.min_covered)?;
            write(&a.out, &graph_eval_csv(&report))?;
            write(&summary_path, &graph_summary_csv(&report))?;
            for s in &report.summary {
                lines.push(format!(
                    "{:<6} auc {:.3}  covered>={} in {:.3} of {} graphs",
                    s.method.name(),
                    s.mean_auc,
                    s.min_covered,
                    s.coverage_rate,
                    s.evaluated
                ));
            }
        }
    }
    write(&meta_path, &report_meta(&config, extra)?)?;
    lines.push(format!(
        "wrote {}, {} and {}",
        a.out.display(),
        summary_path.display(),
        meta_path.display()
    ));
    Ok(lines)
}

fn prototype(cli: &Cli, a: &PrototypeArgs) -> Result<Vec<String>> {
    let Dataset::Node(data) = load_dataset(&a.data)? else {
        return Err(Error::Config("prototypes are built from node datasets".into()));
    };
    let model = load_model(&a.ckpt)?;
    let config = PrototypeConfig {
        explainer: a.explainer.resolve(data.motif_size)?,
        align: AlignOptions {
            restarts: a.restarts,
            ..AlignOptions::default()
        },
        max_members: a.max_members,
        seed: cli.seed,
    };
    let proto = build_class_prototype(&model, &data.graph, a.class, &config)?;
    let (n, edges) = proto.thresholded_graph(a.threshold);
    let v = json!({
        "prototype": proto,
        "threshold": a.threshold,
        "thresholded": { "n": n, "edges": edges },
        "config": config,
        "version": VERSION,
        "meta": {
            "provenance": provenance(cli),
            "dataset": data.name,
            "data_seed": data.seed,
            "checkpoint": a.ckpt,
        },
    });
    let json_path = a.out.join(format!("prototype_class{}.json", a.class));
    let dot_path = a.out.join(format!("prototype_class{}.dot", a.class));
    write(&json_path, &serde_json::to_string_pretty(&v)?)?;
    write(&dot_path, &prototype_dot(&proto))?;
    Ok(vec![
        format!(
            "class {} prototype from {} members (reference {}): {n} nodes, edges above {} {:?}",
            a.class,
            proto.members.len(),
            proto.reference,
            a.threshold,
            edges
        ),
        format!("wrote {} and {}", json_path.display(), dot_path.display()),
    ])
}
