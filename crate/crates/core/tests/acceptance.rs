//! End-to-end acceptance run: trains the benchmark models over three seeds,
//! explains every motif node and prints one PASS/FAIL line per criterion.
//!
//! Criteria 6 and 7 are exact invariants and fail the test when broken.
//! Criteria 1-5 are empirical targets; their outcome is reported as
//! measured, and the test only asserts that every measurement was made.

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

use gnnx::baselines::Method;
use gnnx::cli;
use gnnx::diff::{derived, finite_diff_check, seeded, Matrix, Tape, Var};
use gnnx::eval::{auc, run_benchmark, run_graph_benchmark, BenchmarkConfig, EvalReport, NodeSet};
use gnnx::explain::{explain_node, ExplainProblem, ExplainerConfig, ExplainerMasks, FeatureMode};
use gnnx::gnn::*;
use gnnx::graph::{is_isomorphic_small, Graph};
use gnnx::io::explanation_json;
use gnnx::prototype::{build_class_prototype, AlignOptions, AlignmentProblem, PrototypeConfig};
use gnnx::synth::{generate_ba_shapes, generate_cycliq, generate_named, DatasetBundle, CYCLIQ_GRAPHS, CYCLIQ_SIZES};
use rand::Rng;
use serde_json::json;

const SEEDS: [u64; 3] = [0, 1, 2];
const NODE_DATASETS: [&str; 4] = ["ba-shapes", "ba-community", "tree-cycles", "tree-grid"];
const LAPLACIAN: [f64; 2] = [0.5, 0.0];
const HOUSE: [(usize, usize); 6] = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (1, 4)];

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn train(data: &DatasetBundle, arch: Arch, seed: u64) -> (GnnModel, TrainReport) {
    let cfg = GnnConfig::new(data.graph.feature_dim(), data.num_classes).with_arch(arch);
    let mut model = GnnModel::new(cfg, &mut derived(seed, "model")).unwrap();
    let report = train_node_classifier(&mut model, &data.graph, &data.split, &TrainOptions::default()).unwrap();
    (model, report)
}

fn explainer(data: &DatasetBundle, laplacian: f64) -> ExplainerConfig {
    ExplainerConfig {
        max_edges: data.motif_size,
        laplacian_coef: laplacian,
        ..ExplainerConfig::default()
    }
}

/// Everything measured on one node benchmark for one seed.
struct NodeRun {
    test_accuracy: f64,
    /// Full method comparison at the default Laplacian weight.
    report: EvalReport,
    /// Explainer-only reports keyed by Laplacian weight (as bits).
    explainer: BTreeMap<u64, EvalReport>,
}

fn node_run(name: &str, seed: u64) -> NodeRun {
    let data = generate_named(name, seed).unwrap();
    let (gcn, r) = train(&data, Arch::Gcn, seed);
    let (att, _) = train(&data, Arch::Attention, seed);
    let mut explainer_reports = BTreeMap::new();
    let mut full = None;
    for lap in LAPLACIAN {
        let methods = if full.is_none() { Method::ALL.to_vec() } else { vec![Method::Explainer] };
        let config = BenchmarkConfig {
            methods,
            explainer: explainer(&data, lap),
            nodes: NodeSet::All,
            max_nodes: None,
            seed,
        };
        let report = run_benchmark(&data, &gcn, Some(&att), &config).unwrap();
        explainer_reports.insert(lap.to_bits(), report.clone());
        full.get_or_insert(report);
    }
    NodeRun {
        test_accuracy: r.test_accuracy,
        report: full.unwrap(),
        explainer: explainer_reports,
    }
}

fn method_auc(runs: &[NodeRun], method: Method) -> f64 {
    mean(&runs.iter().map(|r| r.report.summary_for(method).unwrap().mean_auc).collect::<Vec<_>>())
}

fn explainer_auc(runs: &[NodeRun], lap: f64) -> f64 {
    mean(
        &runs
            .iter()
            .map(|r| r.explainer[&lap.to_bits()].summary_for(Method::Explainer).unwrap().mean_auc)
            .collect::<Vec<_>>(),
    )
}

/// Fraction of explained nodes whose top feature is the informative one.
fn top_feature_rate(runs: &[NodeRun], lap: f64, informative: usize) -> (usize, usize) {
    let mut hits = 0;
    let mut total = 0;
    for r in runs {
        for res in r.explainer[&lap.to_bits()].results.iter().filter(|x| x.method == Method::Explainer) {
            if let Some(f) = res.top_feature {
                total += 1;
                hits += usize::from(f == informative);
            }
        }
    }
    (hits, total)
}

fn pairwise_auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0usize;
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if positive[i] && !positive[j] {
                pairs += 1;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    (pairs > 0).then(|| wins / pairs as f64)
}

fn random_graph(n: usize, p: f64, d: usize, seed: u64) -> Graph {
    let mut rng = seeded(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if u + 1 == v || rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let x = Matrix::from_fn(n, d, |_, _| rng.gen_range(-1.0..1.0));
    Graph::new(n, edges, x, None).unwrap()
}

/// Relative FD error of the node-classification loss in every parameter,
/// edge weight and input feature.
fn gcn_loss_fd(arch: Arch, aggregation: Aggregation) -> f64 {
    let g = random_graph(8, 0.3, 3, 4);
    let cfg = GnnConfig {
        hidden_dim: 6,
        ..GnnConfig::new(3, 3).with_arch(arch).with_aggregation(aggregation)
    };
    let mut rng = seeded(5);
    let model = GnnModel::new(cfg, &mut rng).unwrap();
    let prop = Propagation::from_graph(&g).unwrap();
    let mut params: Vec<Matrix> = model.params().iter().map(|(_, t)| t.value().clone()).collect();
    for m in params.iter_mut().filter(|m| m.rows() == 1) {
        *m = Matrix::from_fn(1, m.cols(), |_, _| rng.gen_range(-0.3..0.3));
    }
    params.push(Matrix::column((0..g.num_edges()).map(|_| rng.gen_range(0.3..1.0)).collect()));
    params.push(g.features().clone());
    let np = params.len();
    let targets = Arc::new((0..g.n()).map(|i| (i, i % 3)).collect::<Vec<_>>());
    let f = |tape: &mut Tape, vars: &[Var]| {
        let bound = BoundParams::from_vars(vars[..np - 2].to_vec());
        let entry = tape.gather_rows(vars[np - 2], prop.entry_edge().clone())?;
        let fwd = model.embed_on_tape(tape, &bound, &prop, entry, vars[np - 1], NormMode::Batch)?;
        let logits = model.node_logits(tape, &bound, fwd.embeddings)?;
        tape.cross_entropy(logits, targets.clone())
    };
    finite_diff_check(f, &params, 1e-6, 400, &mut rng).unwrap()
}

fn explainer_fd() -> Vec<(String, f64)> {
    let g = random_graph(14, 0.15, 3, 1);
    let cg = g.computation_graph(4, 3).unwrap();
    let only = |f: fn(&mut ExplainerConfig)| {
        let mut c = ExplainerConfig::unregularized();
        f(&mut c);
        c
    };
    let configs = [
        ("size", only(|c| c.size_coef = 0.3)),
        ("entropy", only(|c| c.entropy_coef = 0.3)),
        ("laplacian", only(|c| c.laplacian_coef = 0.3)),
        ("feature", only(|c| c.feature_size_coef = 0.3)),
        (
            "combined",
            ExplainerConfig {
                entropy_coef: 0.1,
                ..ExplainerConfig::default()
            },
        ),
    ];
    // A model that predicts more than one class on the computation graph,
    // so the Laplacian term is not identically zero.
    let model = (0..50)
        .map(|s| GnnModel::new(GnnConfig::new(3, 3), &mut seeded(s)).unwrap())
        .map(|mut m| {
            let h = m.config().hidden_dim;
            let stats = (0..m.config().layers)
                .map(|_| NormStats {
                    mean: Matrix::zeros(1, h),
                    inv_std: Matrix::filled(1, h, 1.0),
                })
                .collect();
            m.set_norm_stats(stats).unwrap();
            m
        })
        .find(|m| {
            let p = forward_computation_graph(m, &cg, None).unwrap().probabilities;
            let first = p.argmax_row(0);
            (0..p.rows()).any(|i| p.argmax_row(i) != first)
        })
        .expect("a model with mixed predictions");
    let mut out = Vec::new();
    for (name, cfg) in configs {
        for mode in [FeatureMode::Marginal, FeatureMode::Multiply] {
            let cfg = ExplainerConfig {
                feature_mode: mode,
                samples: 2,
                ..cfg.clone()
            };
            let problem = ExplainProblem::new(&model, &cg, &cfg).unwrap();
            let mut rng = seeded(3);
            let noise = problem.draw_noise(&mut rng);
            let masks = ExplainerMasks::random(problem.num_edges(), problem.feature_dim(), 0.5, 1.0, &mut rng).unwrap();
            let params = [Matrix::column(masks.edge_logits), Matrix::row_vector(masks.feature_logits)];
            let terms = problem.objective(&ExplainerMasks::constant(problem.num_edges(), 3, 0.3), &mut seeded(0)).unwrap();
            let active = match name {
                "size" => terms.size > 0.0,
                "entropy" => terms.entropy > 0.0,
                "laplacian" => terms.laplacian > 0.0,
                "feature" => terms.feature_size > 0.0,
                _ => true,
            };
            let err = finite_diff_check(
                |tape, v| Ok(problem.objective_on_tape(tape, v[0], v[1], &noise)?.total),
                &params,
                1e-5,
                200,
                &mut rng,
            )
            .unwrap();
            out.push((format!("{name}/{mode:?}"), if active { err } else { f64::INFINITY }));
        }
    }
    out
}

fn alignment_fd() -> f64 {
    let mut rng = seeded(8);
    let n = 5;
    let sym = |rng: &mut gnnx::diff::SeededRng| {
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let w = rng.gen_range(0.0..1.0);
                a.set(i, j, w);
                a.set(j, i, w);
            }
        }
        a
    };
    let a_v = sym(&mut rng);
    let a_star = sym(&mut rng);
    let x_v = Matrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
    let x_star = Matrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0..1.0));
    let problem = AlignmentProblem::new(a_v, x_v, a_star, x_star).unwrap();
    let logits = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    finite_diff_check(|t, v| problem.loss_on_tape(t, v[0]), &[logits], 1e-6, 100, &mut rng).unwrap()
}

fn determinism() -> Vec<(&'static str, bool)> {
    let data = generate_ba_shapes(1).unwrap();
    let dataset_bytes = gnnx::io::Dataset::Node(data.clone()).to_json().unwrap();
    let regenerated = gnnx::io::Dataset::Node(generate_ba_shapes(1).unwrap()).to_json().unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    std::fs::write(path("d.json"), &dataset_bytes).unwrap();
    for (out, workers) in [("a.json", "1"), ("b.json", "4")] {
        cli::run(["gnnx", "--workers", workers, "train", "--data", &path("d.json"), "--epochs", "100", "--out", &path(out)]).unwrap();
    }
    let same_ckpt = std::fs::read(path("a.json")).unwrap() == std::fs::read(path("b.json")).unwrap();

    let opts = TrainOptions {
        epochs: 100,
        ..TrainOptions::default()
    };
    let mut model = GnnModel::new(GnnConfig::new(1, data.num_classes), &mut derived(1, "model")).unwrap();
    train_node_classifier(&mut model, &data.graph, &data.split, &opts).unwrap();
    let cfg = explainer(&data, 0.5);
    let v = data.graph.node_roles().unwrap().iter().position(|&r| r > 0).unwrap();
    let explain = || explanation_json(&explain_node(&model, &data.graph, v, &cfg, &mut seeded(9)).unwrap(), json!(null)).unwrap();
    let bench_cfg = BenchmarkConfig {
        methods: vec![Method::Explainer, Method::Grad, Method::Random],
        explainer: cfg.clone(),
        nodes: NodeSet::All,
        max_nodes: Some(12),
        seed: 1,
    };
    let bench = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let r = pool.install(|| run_benchmark(&data, &model, None, &bench_cfg).unwrap());
        serde_json::to_string(&r).unwrap()
    };
    let proto_cfg = PrototypeConfig {
        explainer: cfg.clone(),
        align: AlignOptions {
            restarts: 3,
            ..AlignOptions::default()
        },
        max_members: 4,
        seed: 1,
    };
    let proto = || serde_json::to_string(&build_class_prototype(&model, &data.graph, 2, &proto_cfg).unwrap()).unwrap();
    vec![
        ("dataset", dataset_bytes == regenerated),
        ("checkpoint", same_ckpt),
        ("explanation", explain() == explain()),
        ("benchmark 1 vs 4 threads", bench(1) == bench(4)),
        ("prototype", proto() == proto()),
    ]
}

fn saturated_masks_max_gap(model: &GnnModel, data: &DatasetBundle) -> f64 {
    let roles = data.graph.node_roles().unwrap();
    let mut worst: f64 = 0.0;
    for v in (0..data.graph.n()).filter(|&v| roles[v] > 0).step_by(7).take(20) {
        let cg = data.graph.computation_graph(v, model.config().layers).unwrap();
        let probs = forward_computation_graph(model, &cg, None).unwrap().probabilities;
        for mode in [FeatureMode::Marginal, FeatureMode::Multiply] {
            let cfg = ExplainerConfig {
                feature_mode: mode,
                ..ExplainerConfig::unregularized()
            };
            let p = ExplainProblem::new(model, &cg, &cfg).unwrap();
            let unmasked = -probs.get(cg.center().unwrap(), p.target()).ln();
            let masks = ExplainerMasks::constant(p.num_edges(), p.feature_dim(), 20.0);
            let t = p.objective(&masks, &mut seeded(v as u64)).unwrap();
            worst = worst.max((t.total - unmasked).abs());
        }
    }
    worst
}

#[test]
fn acceptance() {
    let started = std::time::Instant::now();
    let mut outcomes = Vec::new();

    // Node benchmarks: training, explanations and baselines per seed.
    let runs: BTreeMap<&str, Vec<NodeRun>> = NODE_DATASETS
        .iter()
        .map(|&name| (name, SEEDS.iter().map(|&s| node_run(name, s)).collect()))
        .collect();

    // Cycliq: graph classification and largest-component coverage.
    let mut cycliq_acc = Vec::new();
    let (mut covered, mut graphs) = (0.0, 0usize);
    for seed in SEEDS {
        let data = generate_cycliq(seed, CYCLIQ_GRAPHS, CYCLIQ_SIZES).unwrap();
        let cfg = GnnConfig::new(data.graphs[0].feature_dim(), data.num_classes).with_readout(Readout::Graph);
        let mut model = GnnModel::new(cfg, &mut derived(seed, "model")).unwrap();
        let r = train_graph_classifier(&mut model, &data.graphs, &data.labels, &data.split, &TrainOptions::default()).unwrap();
        cycliq_acc.push(r.test_accuracy);
        let config = BenchmarkConfig {
            methods: vec![Method::Explainer],
            explainer: ExplainerConfig {
                max_edges: data.motif_size,
                ..ExplainerConfig::default()
            },
            nodes: NodeSet::Test,
            max_nodes: None,
            seed,
        };
        let report = run_graph_benchmark(&data, &model, &config, 5).unwrap();
        let s = report.summary_for(Method::Explainer).unwrap();
        covered += s.coverage_rate * s.evaluated as f64;
        graphs += s.evaluated;
    }

    // 1. Model quality.
    let mut lines = Vec::new();
    let mut ok = true;
    for name in ["ba-shapes", "tree-cycles", "tree-grid"] {
        let accs: Vec<f64> = runs[name].iter().map(|r| r.test_accuracy).collect();
        ok &= mean(&accs) >= 0.95;
        lines.push(format!("{name} {:.3} {accs:.3?}", mean(&accs)));
    }
    ok &= mean(&cycliq_acc) >= 0.85;
    lines.push(format!("cycliq {:.3} {cycliq_acc:.3?}", mean(&cycliq_acc)));
    outcomes.push(Outcome {
        id: "1 GCN test accuracy >= .95 node / .85 graph (3-seed mean)",
        pass: ok,
        detail: lines.join("; "),
    });

    // 2. Explanation AUC ordering and bands, better Laplacian setting per dataset.
    let band = |name: &str| if matches!(name, "ba-shapes" | "tree-cycles") { 0.85 } else { 0.75 };
    let mut ordering = true;
    let mut bands = true;
    let mut margins = BTreeMap::new();
    let mut lines = Vec::new();
    let mut min_nodes = usize::MAX;
    for name in NODE_DATASETS {
        let rs = &runs[name];
        let by_lap: Vec<f64> = LAPLACIAN.iter().map(|&l| explainer_auc(rs, l)).collect();
        let (best_lap, gnnx) = LAPLACIAN
            .iter()
            .zip(&by_lap)
            .map(|(&l, &a)| (l, a))
            .fold((f64::NAN, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        let grad = method_auc(rs, Method::Grad);
        let att = method_auc(rs, Method::Att);
        let random = method_auc(rs, Method::Random);
        ordering &= gnnx > grad && grad > random;
        bands &= gnnx >= band(name);
        margins.insert(name, gnnx - att);
        min_nodes = min_nodes.min(rs.iter().map(|r| r.report.summary_for(Method::Explainer).unwrap().evaluated).min().unwrap());
        lines.push(format!(
            "{name}: gnnx {gnnx:.3} (lap {best_lap}; lap .5 {:.3}, lap 0 {:.3}) grad {grad:.3} att {att:.3} random {random:.3}",
            by_lap[0], by_lap[1]
        ));
    }
    let widest = margins.iter().max_by(|a, b| a.1.total_cmp(b.1)).map(|(k, _)| *k).unwrap();
    lines.push(format!("largest gnnx-att margin on {widest}; fewest nodes per run {min_nodes}"));
    outcomes.push(Outcome {
        id: "2 gnnx > grad > random, widest att margin on tree-grid, AUC bands",
        pass: ordering && bands && widest == "tree-grid" && min_nodes >= 100,
        detail: format!(
            "ordering {}, bands {}, margin {}. {}",
            pass_word(ordering),
            pass_word(bands),
            pass_word(widest == "tree-grid"),
            lines.join("; ")
        ),
    });

    // 3. Feature explanation on BA-Community.
    let informative = generate_named("ba-community", 0).unwrap().informative_feature.unwrap();
    let rates: Vec<(f64, usize, usize)> = LAPLACIAN
        .iter()
        .map(|&l| top_feature_rate(&runs["ba-community"], l, informative))
        .map(|(h, t)| (h as f64 / t as f64, h, t))
        .collect();
    let best = rates.iter().map(|r| r.0).fold(0.0, f64::max);
    outcomes.push(Outcome {
        id: "3 ba-community top-1 feature is informative in >= 80% of nodes",
        pass: best >= 0.8,
        detail: format!(
            "lap .5: {}/{} = {:.3}; lap 0: {}/{} = {:.3}",
            rates[0].1, rates[0].2, rates[0].0, rates[1].1, rates[1].2, rates[1].0
        ),
    });

    // 4. Cycliq coverage.
    let rate = covered / graphs as f64;
    outcomes.push(Outcome {
        id: "4 cycliq largest component covers >= 5/6 cycle edges in >= 80% of graphs",
        pass: rate >= 0.8,
        detail: format!("{:.0}/{graphs} = {rate:.3} over 3 seeds", covered.round()),
    });

    // 5. House prototype for BA-Shapes class 2.
    let mut houses = BTreeMap::new();
    let mut lines = Vec::new();
    for lap in LAPLACIAN {
        let mut count = 0;
        for seed in SEEDS {
            let data = generate_ba_shapes(seed).unwrap();
            let (model, _) = train(&data, Arch::Gcn, seed);
            let cfg = PrototypeConfig {
                explainer: explainer(&data, lap),
                seed,
                ..PrototypeConfig::default()
            };
            let proto = build_class_prototype(&model, &data.graph, 2, &cfg).unwrap();
            let (n, edges) = proto.thresholded_graph(0.5);
            let house = is_isomorphic_small(n, &edges, 5, &HOUSE);
            count += usize::from(house);
            lines.push(format!("lap {lap} seed {seed}: {n} nodes {edges:?}{}", if house { " house" } else { "" }));
        }
        houses.insert(lap.to_bits(), count);
    }
    let best = houses.values().copied().max().unwrap();
    outcomes.push(Outcome {
        id: "5 ba-shapes class-2 prototype is a house in >= 2 of 3 seeds",
        pass: best >= 2,
        detail: format!("best {best}/3. {}", lines.join("; ")),
    });

    // 6. Numerical foundations.
    let mut fd = vec![
        ("gcn loss".to_string(), gcn_loss_fd(Arch::Gcn, Aggregation::Sum)),
        ("gcn loss normalized".to_string(), gcn_loss_fd(Arch::Gcn, Aggregation::Normalized)),
        ("attention loss".to_string(), gcn_loss_fd(Arch::Attention, Aggregation::Sum)),
        ("alignment loss".to_string(), alignment_fd()),
    ];
    fd.extend(explainer_fd());
    let fd_worst = fd.iter().map(|x| x.1).fold(0.0, f64::max);
    let mut rng = seeded(12);
    let mut auc_mismatch = 0;
    for i in 0..1000 {
        let n = rng.gen_range(2..40);
        let scores: Vec<f64> = if i % 2 == 0 {
            (0..n).map(|_| rng.gen_range(0..6) as f64).collect()
        } else {
            (0..n).map(|_| rng.gen_range(0.0..1.0)).collect()
        };
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        auc_mismatch += usize::from(auc(&scores, &labels) != pairwise_auc(&scores, &labels));
    }
    let det = determinism();
    let det_ok = det.iter().all(|d| d.1);
    outcomes.push(Outcome {
        id: "6 FD <= 1e-4, AUC equals pairwise oracle, byte-identical reruns",
        pass: fd_worst <= 1e-4 && auc_mismatch == 0 && det_ok,
        detail: format!(
            "worst FD {fd_worst:.2e} over {} checks; AUC mismatches {auc_mismatch}/1000; determinism {det:?}",
            fd.len()
        ),
    });

    // 7. Sanity floors.
    let randoms: Vec<(&str, f64)> = NODE_DATASETS.iter().map(|&n| (n, method_auc(&runs[n], Method::Random))).collect();
    let random_ok = randoms.iter().all(|r| (r.1 - 0.5).abs() <= 0.05);
    let data = generate_ba_shapes(0).unwrap();
    let (model, _) = train(&data, Arch::Gcn, 0);
    let gap = saturated_masks_max_gap(&model, &data);
    outcomes.push(Outcome {
        id: "7 random AUC .5 +- .05, saturated masks reproduce the prediction",
        pass: random_ok && gap <= 1e-6,
        detail: format!("random {randoms:.3?}; max loss gap at +20 logits {gap:.2e}"),
    });

    // Bypass the test harness capture so the summary reaches the log.
    let mut err = std::io::stderr().lock();
    writeln!(err, "\n==== acceptance ({:.0?}) ====", started.elapsed()).unwrap();
    for o in &outcomes {
        writeln!(err, "{} criterion {}\n      {}", pass_word(o.pass).to_uppercase(), o.id, o.detail).unwrap();
    }
    writeln!(err, "==== {}/{} criteria pass ====", outcomes.iter().filter(|o| o.pass).count(), outcomes.len()).unwrap();

    assert_eq!(outcomes.len(), 7);
    for o in &outcomes[5..] {
        assert!(o.pass, "criterion {}: {}", o.id, o.detail);
    }
}

fn pass_word(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}
