use std::fs;
use std::path::Path;
use std::process::Command;

use gnnx::cli::run;
use gnnx::io::{Checkpoint, Dataset, VERSION};
use gnnx::synth::generate_tree_cycles;

fn gnnx(dir: &Path, args: &[&str]) -> Vec<String> {
    let full: Vec<String> = std::iter::once("gnnx".to_string())
        .chain(args.iter().map(|a| a.replace("{}", dir.to_str().unwrap())))
        .collect();
    run(full).unwrap_or_else(|e| panic!("{args:?}: {e}"))
}

#[test]
fn generated_dataset_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    gnnx(dir.path(), &["generate", "--dataset", "tree-cycles", "--seed", "4", "--out", "{}/d.json"]);
    let loaded = Dataset::load(&dir.path().join("d.json")).unwrap();
    assert_eq!(loaded, Dataset::Node(generate_tree_cycles(4).unwrap()));
}

#[test]
fn training_twice_gives_identical_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    gnnx(dir.path(), &["generate", "--dataset", "ba-shapes", "--out", "{}/d.json"]);
    for (out, workers) in [("a", "1"), ("b", "3")] {
        let path = format!("{{}}/{out}.json");
        gnnx(dir.path(), &["train", "--data", "{}/d.json", "--epochs", "30", "--seed", "2", "--workers", workers, "--out", &path]);
    }
    let a = fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.json")).unwrap());

    let ck: Checkpoint = serde_json::from_slice(&a).unwrap();
    assert_eq!(ck.meta["provenance"]["seed"], 2);
    assert_eq!(ck.meta["provenance"]["version"], VERSION);
    assert_eq!(ck.meta["training"]["epochs"], 30);
    ck.to_model().unwrap();
}

#[test]
fn evaluate_writes_one_row_per_method_and_node() {
    let dir = tempfile::tempdir().unwrap();
    gnnx(dir.path(), &["generate", "--dataset", "ba-shapes", "--out", "{}/d.json"]);
    gnnx(dir.path(), &["train", "--data", "{}/d.json", "--epochs", "20", "--out", "{}/m.json"]);
    gnnx(dir.path(), &[
        "evaluate", "--ckpt", "{}/m.json", "--data", "{}/d.json", "--methods", "gnnx,grad,random", "--max-nodes", "4",
        "--explainer-epochs", "20", "--out", "{}/r/eval.csv",
    ]);
    let csv = fs::read_to_string(dir.path().join("r/eval.csv")).unwrap();
    assert!(!csv.contains('\r'));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("dataset,method,node,auc,acc_at_k"));
    assert_eq!(lines.count(), 12);
    let summary = fs::read_to_string(dir.path().join("r/eval_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("r/eval.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["version"], VERSION);
    assert_eq!(meta["config"]["explainer"]["epochs"], 20);
    assert_eq!(meta["config"]["explainer"]["max_edges"], 6);
}

#[test]
fn explain_and_prototype_write_json_and_dot() {
    let dir = tempfile::tempdir().unwrap();
    gnnx(dir.path(), &["generate", "--dataset", "ba-shapes", "--out", "{}/d.json"]);
    gnnx(dir.path(), &["train", "--data", "{}/d.json", "--epochs", "20", "--out", "{}/m.json"]);
    for method in ["gnnx", "grad"] {
        gnnx(dir.path(), &[
            "explain", "--ckpt", "{}/m.json", "--data", "{}/d.json", "--node", "310", "--method", method,
            "--explainer-epochs", "10", "--out", "{}/ex",
        ]);
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(format!("ex/node_310_{method}.json"))).unwrap()).unwrap();
        assert_eq!(json["version"], VERSION);
        assert_eq!(json["meta"]["provenance"]["seed"], 0);
        let dot = fs::read_to_string(dir.path().join(format!("ex/node_310_{method}.dot"))).unwrap();
        assert!(dot.starts_with("graph"));
    }
    gnnx(dir.path(), &[
        "prototype", "--ckpt", "{}/m.json", "--data", "{}/d.json", "--class", "2", "--max-members", "3",
        "--restarts", "2", "--explainer-epochs", "10", "--out", "{}/p",
    ]);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("p/prototype_class2.json")).unwrap()).unwrap();
    assert_eq!(json["prototype"]["members"].as_array().unwrap().len(), 3);
    assert!(dir.path().join("p/prototype_class2.dot").exists());
}

#[test]
fn graph_datasets_explain_by_graph_id() {
    let dir = tempfile::tempdir().unwrap();
    let data = gnnx::synth::generate_cycliq(1, 16, 8..=10).unwrap();
    Dataset::Graph(data).save(&dir.path().join("c.json")).unwrap();
    gnnx(dir.path(), &["train", "--data", "{}/c.json", "--epochs", "10", "--out", "{}/m.json"]);
    gnnx(dir.path(), &["explain", "--ckpt", "{}/m.json", "--data", "{}/c.json", "--graph-id", "3", "--explainer-epochs", "10", "--out", "{}/ex"]);
    assert!(dir.path().join("ex/graph_3_gnnx.json").exists());
    gnnx(dir.path(), &["evaluate", "--ckpt", "{}/m.json", "--data", "{}/c.json", "--methods", "grad,random", "--nodes", "all", "--out", "{}/g.csv"]);
    let csv = fs::read_to_string(dir.path().join("g.csv")).unwrap();
    // Half of the 16 graphs carry a cycle.
    assert_eq!(csv.lines().count(), 1 + 2 * 8);
}

#[test]
fn errors_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_gnnx");
    let out = Command::new(bin).args(["train", "--data", "missing.json", "--out", "m.json"]).current_dir(dir.path()).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.json"));

    let out = Command::new(bin).args(["generate", "--dataset", "petersen", "--out", "x.json"]).output().unwrap();
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    let path = dir.path().join("d.json");
    let ok = Command::new(bin)
        .args(["generate", "--dataset", "ba-community", "--out", path.to_str().unwrap()])
        .env("GNNX_SEED", "7")
        .output()
        .unwrap();
    assert!(ok.status.success());
    assert_eq!(Dataset::load(&path).unwrap().seed(), 7);
}
