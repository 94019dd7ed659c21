use gnnx::diff::{finite_diff_check, seeded, softmax_rows, Matrix};
use gnnx::explain::{explain_node, ExplainerConfig};
use gnnx::gnn::{GnnConfig, GnnModel};
use gnnx::io::prototype_dot;
use gnnx::prototype::*;
use gnnx::synth::generate_ba_shapes;
use proptest::prelude::*;
use rand::Rng;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn permute(a: &Matrix, perm: &[usize]) -> Matrix {
    Matrix::from_fn(a.rows(), a.cols(), |i, j| a.get(perm[i], perm[j]))
}

fn weighted_triangle() -> Matrix {
    let mut a = Matrix::zeros(3, 3);
    for (i, j, w) in [(0, 1, 0.9), (1, 2, 0.5), (0, 2, 0.2)] {
        a.set(i, j, w);
        a.set(j, i, w);
    }
    a
}

fn fast_options() -> AlignOptions {
    AlignOptions {
        epochs: 200,
        restarts: 4,
        ..AlignOptions::default()
    }
}

#[test]
fn reference_node_examples() {
    let e = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![-1.0, -1.0], vec![5.0, 5.0]]).unwrap();
    assert_eq!(choose_reference_node(&e, &[3]).unwrap(), 3);
    // 1 and 2 are equally far from their mean.
    assert_eq!(choose_reference_node(&e, &[2, 1]).unwrap(), 1);
    assert!(choose_reference_node(&e, &[]).is_err());
    assert!(choose_reference_node(&e, &[4]).is_err());
}

#[test]
fn reference_node_ignores_an_outlier() {
    let mut rng = seeded(3);
    let mut rows: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.gen_range(-0.2..0.2)).collect()).collect();
    rows.push(vec![40.0, -40.0, 40.0, -40.0]);
    let e = Matrix::from_rows(&rows).unwrap();
    let members: Vec<usize> = (0..6).collect();
    let mean: Vec<f64> = (0..4).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / 6.0).collect();
    let dist = |v: usize| rows[v].iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum::<f64>();
    let oracle = (0..6).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).unwrap();
    let got = choose_reference_node(&e, &members).unwrap();
    assert_eq!(got, oracle);
    assert!(got < 5);
}

#[test]
fn identical_graphs_align_to_the_identity() {
    let a = weighted_triangle();
    let x = Matrix::from_fn(3, 2, |i, k| (i + k) as f64 * 0.3);
    let problem = AlignmentProblem::new(a.clone(), x.clone(), a, x).unwrap();
    let al = align_explanation(&problem, &fast_options(), &mut seeded(0)).unwrap();
    assert!(al.loss < 1e-3, "{}", al.loss);
    for i in 0..3 {
        assert!(al.p.get(i, i) > 0.95, "{:?}", al.p);
    }
}

#[test]
fn relabeled_triangle_recovers_its_weights() {
    let a_star = weighted_triangle();
    let x = Matrix::zeros(3, 0);
    let perm = [2, 0, 1];
    let a_v = permute(&a_star, &perm);
    // Exhaustive oracle: some relabeling matches exactly.
    let exact = permutations(3)
        .into_iter()
        .filter(|p| {
            let back = permute(&a_v, p);
            (0..3).all(|i| (0..3).all(|j| back.get(i, j) == a_star.get(i, j)))
        })
        .count();
    assert_eq!(exact, 1);
    let problem = AlignmentProblem::new(a_v, x.clone(), a_star.clone(), x).unwrap();
    let al = align_explanation(&problem, &AlignOptions::default(), &mut seeded(2)).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            assert!((al.aligned.get(i, j) - a_star.get(i, j)).abs() < 0.1, "{:?}", al.aligned);
        }
    }
}

#[test]
fn empty_features_leave_only_the_adjacency_term() {
    let a = weighted_triangle();
    let b = permute(&a, &[1, 2, 0]);
    let problem = AlignmentProblem::new(a.clone(), Matrix::zeros(3, 0), b.clone(), Matrix::zeros(3, 0)).unwrap();
    let logits = Matrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 * 0.1);
    let p = softmax_rows(&logits);
    let aligned = p.transpose().matmul(&a).unwrap().matmul(&p).unwrap();
    let want: f64 = aligned.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
    assert!((problem.loss(&logits).unwrap() - want).abs() < 1e-12);
}

#[test]
fn alignment_loss_gradient_matches_central_differences() {
    let mut rng = seeded(5);
    let a_v = Matrix::from_fn(4, 4, |i, j| if i != j { ((i + j) % 3) as f64 * 0.4 } else { 0.0 });
    let x_v = Matrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0));
    let a_star = weighted_triangle();
    let x_star = Matrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
    let problem = AlignmentProblem::new(a_v, x_v, a_star, x_star).unwrap();
    let logits = Matrix::from_fn(4, 3, |_, _| rng.gen_range(-1.0..1.0));
    let err = finite_diff_check(|t, v| problem.loss_on_tape(t, v[0]), &[logits], 1e-6, 100, &mut rng).unwrap();
    assert!(err <= 1e-4, "{err}");
}

#[test]
fn alignment_matrix_is_row_stochastic_and_the_trace_never_rises() {
    let a_v = permute(&weighted_triangle(), &[1, 0, 2]);
    let pad = AlignmentProblem::new(
        Matrix::from_fn(2, 2, |i, j| if i != j { 0.7 } else { 0.0 }),
        Matrix::filled(2, 1, 1.0),
        a_v,
        Matrix::filled(3, 1, 1.0),
    )
    .unwrap();
    let al = align_explanation(&pad, &fast_options(), &mut seeded(1)).unwrap();
    assert_eq!(al.p.shape(), (3, 3));
    for i in 0..3 {
        let s: f64 = al.p.row(i).iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
        assert!(al.p.row(i).iter().all(|&x| x >= 0.0));
    }
    assert_eq!(al.best_trace.len(), 4);
    assert!(al.best_trace.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(*al.best_trace.last().unwrap(), al.loss);
}

#[test]
fn alignment_rejects_bad_shapes() {
    let a = weighted_triangle();
    assert!(AlignmentProblem::new(Matrix::zeros(3, 2), Matrix::zeros(3, 0), a.clone(), Matrix::zeros(3, 0)).is_err());
    assert!(AlignmentProblem::new(a.clone(), Matrix::zeros(3, 1), a.clone(), Matrix::zeros(3, 2)).is_err());
    let ok = AlignmentProblem::new(a.clone(), Matrix::zeros(3, 0), a, Matrix::zeros(3, 0)).unwrap();
    let no_restarts = AlignOptions {
        restarts: 0,
        ..AlignOptions::default()
    };
    assert!(align_explanation(&ok, &no_restarts, &mut seeded(0)).is_err());
}

#[test]
fn median_drops_a_corrupted_outlier() {
    let clean = weighted_triangle();
    let noisy = Matrix::filled(3, 3, 9.0);
    let inputs = vec![clean.clone(), clean.clone(), noisy, clean.clone(), clean.clone()];
    // Entrywise oracle: sort the five values and take the middle one.
    let oracle = Matrix::from_fn(3, 3, |i, j| {
        let mut xs: Vec<f64> = inputs.iter().map(|m| m.get(i, j)).collect();
        xs.sort_by(f64::total_cmp);
        xs[2]
    });
    let got = entrywise_median(&inputs).unwrap();
    assert_eq!(got, oracle);
    assert_eq!(got, clean);
    assert_eq!(entrywise_median(&[clean.clone(), clean.clone()]).unwrap(), clean);
    assert!(entrywise_median(&[clean, Matrix::zeros(2, 2)]).is_err());
}

proptest! {
    #[test]
    fn median_stays_within_the_inputs(values in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 1..8)) {
        let mats: Vec<Matrix> = values.iter().map(|v| Matrix::from_vec(2, 2, v.clone()).unwrap()).collect();
        let m = entrywise_median(&mats).unwrap();
        for k in 0..4 {
            let xs: Vec<f64> = values.iter().map(|v| v[k]).collect();
            let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m.data()[k] >= lo && m.data()[k] <= hi);
            prop_assert!(xs.contains(&m.data()[k]));
        }
    }
}

fn small_config(max_members: usize) -> PrototypeConfig {
    PrototypeConfig {
        explainer: ExplainerConfig {
            epochs: 40,
            max_edges: 6,
            ..ExplainerConfig::default()
        },
        align: AlignOptions {
            epochs: 60,
            restarts: 2,
            ..AlignOptions::default()
        },
        max_members,
        seed: 4,
    }
}

#[test]
fn single_member_prototype_is_its_own_explanation() {
    let data = generate_ba_shapes(0).unwrap();
    let model = GnnModel::new(GnnConfig::new(data.graph.feature_dim(), data.num_classes), &mut seeded(1)).unwrap();
    let config = small_config(1);
    let proto = build_class_prototype(&model, &data.graph, 1, &config).unwrap();
    let labels = data.graph.labels().unwrap();
    let first = (0..data.graph.n()).find(|&v| labels[v] == 1).unwrap();
    assert_eq!(proto.members, vec![first]);
    assert_eq!(proto.reference, first);
    let mut rng = gnnx::diff::derived(config.seed, &format!("prototype-explain-{first}"));
    let e = explain_node(&model, &data.graph, first, &config.explainer, &mut rng).unwrap();
    let (nodes, a, _) = explanation_matrices(&data.graph, &e).unwrap();
    assert_eq!(proto.nodes, nodes);
    assert_eq!(proto.adjacency, a);
    assert_eq!(proto.alignment_losses, vec![0.0]);
}

#[test]
fn class_prototypes_are_deterministic_and_exportable() {
    let data = generate_ba_shapes(1).unwrap();
    let model = GnnModel::new(GnnConfig::new(data.graph.feature_dim(), data.num_classes), &mut seeded(2)).unwrap();
    let config = small_config(4);
    let a = build_class_prototype(&model, &data.graph, 2, &config).unwrap();
    let b = build_class_prototype(&model, &data.graph, 2, &config).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.members.len(), 4);
    assert_eq!(a.nodes[0], a.reference);
    assert!(a.adjacency.is_symmetric(1e-12));
    assert!(a.adjacency.data().iter().all(|&w| (0.0..=1.0).contains(&w)));
    let dot = prototype_dot(&a);
    assert!(dot.starts_with("graph prototype_2 {"));
    let drawn = dot.matches(" -- ").count();
    let positive = (0..a.adjacency.rows())
        .flat_map(|i| (i + 1..a.adjacency.rows()).map(move |j| (i, j)))
        .filter(|&(i, j)| a.adjacency.get(i, j) > 0.0)
        .count();
    assert_eq!(drawn, positive);
    assert!(build_class_prototype(&model, &data.graph, 9, &config).is_err());
}

#[test]
fn thresholded_prototype_drops_weak_edges() {
    let adjacency = weighted_triangle();
    let proto = Prototype {
        class: 0,
        reference: 7,
        nodes: vec![7, 8, 9],
        members: vec![7],
        adjacency,
        alignment_losses: vec![0.0],
    };
    assert_eq!(proto.thresholded_edges(0.4), vec![(0, 1), (1, 2)]);
    assert_eq!(proto.thresholded_graph(0.6), (2, vec![(0, 1)]));
}
