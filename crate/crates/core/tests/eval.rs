use std::collections::BTreeSet;

use gnnx::baselines::Method;
use gnnx::eval::*;
use gnnx::gnn::{GnnConfig, GnnModel};
use gnnx::synth::generate_ba_shapes;
use proptest::prelude::*;

/// Fraction of (positive, negative) pairs ranked correctly, ties counting half.
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

/// Positives with fewer than `k` strictly better scores, over all positives.
fn topk_oracle(scores: &[f64], positive: &[bool], k: usize) -> f64 {
    let pos: Vec<usize> = (0..scores.len()).filter(|&i| positive[i]).collect();
    let hits = pos
        .iter()
        .filter(|&&i| scores.iter().filter(|&&s| s > scores[i]).count() < k)
        .count();
    hits as f64 / pos.len() as f64
}

fn scored_instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    // Scores drawn from a small grid so ties are common.
    (2usize..30).prop_flat_map(|n| {
        (
            prop::collection::vec((0u8..8).prop_map(|s| s as f64 / 4.0), n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn auc_equals_pairwise_counting((scores, labels) in scored_instance()) {
        prop_assert_eq!(auc(&scores, &labels), pairwise_auc(&scores, &labels));
    }

    #[test]
    fn auc_ignores_strictly_monotone_maps((scores, labels) in scored_instance(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let base = auc(&scores, &labels);
        let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        let affine: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        prop_assert_eq!(auc(&exp, &labels), base);
        prop_assert_eq!(auc(&affine, &labels), base);
        if let Some(x) = base {
            prop_assert!((0.0..=1.0).contains(&x));
            let flipped: Vec<f64> = scores.iter().map(|s| -s).collect();
            prop_assert!((auc(&flipped, &labels).unwrap() - (1.0 - x)).abs() < 1e-12);
        }
    }

    #[test]
    fn accuracy_at_k_matches_exhaustive_count((scores, labels) in scored_instance(), k in 1usize..8) {
        let got = accuracy_at_k(&scores, &labels, k);
        if labels.iter().any(|&p| p) {
            let want = topk_oracle(&scores, &labels, k);
            prop_assert!((got.unwrap() - want).abs() < 1e-12, "{:?} vs {}", got, want);
        } else {
            prop_assert_eq!(got, None);
        }
    }
}

#[test]
fn auc_edge_cases() {
    assert_eq!(auc(&[0.9, 0.8, 0.1, 0.0], &[true, true, false, false]), Some(1.0));
    assert_eq!(auc(&[0.2; 5], &[true, false, false, true, false]), Some(0.5));
    assert_eq!(auc(&[0.8, 0.7, 0.6, 0.5], &[true, false, true, false]), Some(0.75));
    assert_eq!(auc(&[], &[]), None);
    assert_eq!(auc(&[0.1, 0.2], &[false, false]), None);
}

#[test]
fn accuracy_at_k_on_a_house() {
    // Six house edges among ten candidates. Two off-motif edges enter the
    // top 6 and the cut falls on a tie at 0.6, which counts both tied edges.
    let scores = [0.9, 0.8, 0.85, 0.7, 0.6, 0.3, 0.75, 0.6, 0.2, 0.1];
    let labels = [true, true, false, true, true, true, false, true, false, false];
    let got = accuracy_at_k(&scores, &labels, 6).unwrap();
    assert!((got - topk_oracle(&scores, &labels, 6)).abs() < 1e-12);
    assert!((got - 5.0 / 6.0).abs() < 1e-12);
    assert_eq!(accuracy_at_k(&[1.0, 0.0], &[true, false], 1), Some(1.0));
    assert_eq!(accuracy_at_k(&[0.0, 1.0], &[true, false], 1), Some(0.0));
}

#[test]
fn benchmark_reports_every_motif_node() {
    let data = generate_ba_shapes(0).unwrap();
    let model = GnnModel::new(GnnConfig::new(data.graph.feature_dim(), data.num_classes), &mut gnnx::diff::seeded(0)).unwrap();
    let config = BenchmarkConfig {
        methods: vec![Method::Grad, Method::Random],
        nodes: NodeSet::All,
        max_nodes: Some(150),
        ..BenchmarkConfig::default()
    };
    let report = run_benchmark(&data, &model, None, &config).unwrap();
    let roles = data.graph.node_roles().unwrap();
    let nodes: BTreeSet<usize> = report.results.iter().map(|r| r.node).collect();
    assert_eq!(nodes.len(), 150);
    assert!(nodes.iter().all(|&v| roles[v] > 0));
    assert_eq!(report.results.len(), 300);
    for s in &report.summary {
        assert_eq!(s.evaluated + s.skipped, 150);
        assert!((0.0..=1.0).contains(&s.mean_auc));
    }
    let random = report.summary_for(Method::Random).unwrap().mean_auc;
    assert!((random - 0.5).abs() <= 0.05, "random AUC {random}");
    assert_eq!(report, run_benchmark(&data, &model, None, &config).unwrap());
}

#[test]
fn att_without_an_attention_model_is_an_error() {
    let data = generate_ba_shapes(0).unwrap();
    let model = GnnModel::new(GnnConfig::new(data.graph.feature_dim(), data.num_classes), &mut gnnx::diff::seeded(0)).unwrap();
    let config = BenchmarkConfig {
        methods: vec![Method::Att],
        max_nodes: Some(3),
        ..BenchmarkConfig::default()
    };
    assert!(run_benchmark(&data, &model, None, &config).is_err());
}
