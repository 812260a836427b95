mod common;

use rand::Rng;

use soiln::data::{FeatureTable, TargetScale};
use soiln::params::{ExtraTreesParams, GbdtParams, ModelParams};
use soiln::shap::{rank_features, select_top_k, tree_shap, ShapMatrix};
use soiln::trees::{self, Ensemble, EnsembleMode, RegressionTree, TreeNode};

use common::{brute_force_shap, model_row, random_dataset, rng};

fn small_gbdt(seed: u64) -> (Ensemble, FeatureTable) {
    let mut r = rng(seed);
    let ds = random_dataset(&mut r, 300, 8, 0.1);
    let p = GbdtParams {
        n_trees: 15,
        max_depth: 4,
        learning_rate: 0.3,
        subsample_rows: 0.8,
        seed,
        ..GbdtParams::default()
    };
    (trees::fit(&ds, &ModelParams::Gbdt(p)).unwrap(), ds.features)
}

#[test]
fn matches_subset_enumeration() {
    for seed in 0..4 {
        let (m, ft) = small_gbdt(seed);
        let shap = tree_shap(&m, &ft).unwrap();
        for r in 0..20 {
            let (base, phi) = brute_force_shap(&m, &model_row(&m, &ft, r));
            assert!((shap.base_value - base).abs() < 1e-9);
            for (a, b) in shap.row(r).iter().zip(&phi) {
                assert!((a - b).abs() < 1e-9, "seed {seed} row {r}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn extratrees_attributions_match_oracle() {
    let mut r = rng(9);
    let ds = random_dataset(&mut r, 200, 6, 0.0);
    let p = ExtraTreesParams {
        n_trees: 10,
        max_depth: 4,
        seed: 3,
        ..ExtraTreesParams::default()
    };
    let m = trees::train_extratrees(&ds, &p).unwrap();
    let shap = tree_shap(&m, &ds.features).unwrap();
    for row in 0..25 {
        let (base, phi) = brute_force_shap(&m, &model_row(&m, &ds.features, row));
        assert!((shap.base_value - base).abs() < 1e-9);
        for (a, b) in shap.row(row).iter().zip(&phi) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}

#[test]
fn local_accuracy_on_trained_model() {
    let (m, ft) = small_gbdt(11);
    let shap = tree_shap(&m, &ft).unwrap();
    let pred = m.predict(&ft).unwrap();
    for r in 0..ft.n_rows() {
        let total = shap.base_value + shap.row(r).iter().sum::<f64>();
        assert!((total - pred[r]).abs() < 1e-9);
    }
}

#[test]
fn unused_features_get_exactly_zero() {
    let (m, ft) = small_gbdt(5);
    let used: Vec<usize> = m.trees.iter().flat_map(|t| t.split_features()).collect();
    let shap = tree_shap(&m, &ft).unwrap();
    let unused: Vec<usize> = (0..m.feature_names.len()).filter(|f| !used.contains(f)).collect();
    for r in 0..ft.n_rows() {
        for &f in &unused {
            assert_eq!(shap.get(r, f), 0.0);
        }
    }
}

fn leaf(v: f64) -> TreeNode {
    TreeNode::Leaf { value: v }
}

fn split(feature: usize, left: usize, right: usize) -> TreeNode {
    TreeNode::Internal {
        feature,
        threshold: 0.5,
        default_left: true,
        left,
        right,
    }
}

fn hand_model(trees: Vec<RegressionTree>, mode: EnsembleMode) -> Ensemble {
    let mut m = Ensemble::constant(0.25, vec!["a".into(), "b".into(), "c".into()], TargetScale::TransformedLog);
    m.mode = mode;
    m.trees = trees;
    m
}

#[test]
fn interchangeable_features_share_credit() {
    // y = 1 iff a > 0.5 and b > 0.5, uniform covers: a and b play the same role
    let t = RegressionTree {
        nodes: vec![split(0, 1, 2), leaf(0.0), split(1, 3, 4), leaf(0.0), leaf(1.0)],
        root: 0,
        max_depth_reached: 2,
        covers: Some(vec![4.0, 2.0, 2.0, 1.0, 1.0]),
    };
    let mirrored = RegressionTree {
        nodes: vec![split(1, 1, 2), leaf(0.0), split(0, 3, 4), leaf(0.0), leaf(1.0)],
        ..t.clone()
    };
    let m = hand_model(vec![t, mirrored], EnsembleMode::Gbdt);
    let ft = FeatureTable::from_rows(
        m.feature_names.clone(),
        &[vec![0.9, 0.8, 0.1], vec![0.2, 0.7, 0.3], vec![0.9, 0.1, 0.3], vec![0.1, 0.2, 0.9]],
    )
    .unwrap();
    let shap = tree_shap(&m, &ft).unwrap();
    // rows 0 and 3 treat a and b symmetrically
    for r in [0, 3] {
        assert!((shap.get(r, 0) - shap.get(r, 1)).abs() < 1e-12);
    }
    // swapping a and b swaps the attributions
    assert!((shap.get(1, 0) - shap.get(2, 1)).abs() < 1e-12);
    assert!((shap.get(1, 1) - shap.get(2, 0)).abs() < 1e-12);
    for r in 0..4 {
        assert_eq!(shap.get(r, 2), 0.0);
    }
}

#[test]
fn attributions_add_across_trees() {
    let (m, ft) = small_gbdt(21);
    for mode in [EnsembleMode::Gbdt, EnsembleMode::ExtraTrees] {
        let mut pair = m.truncated(2);
        pair.mode = mode;
        let both = tree_shap(&pair, &ft).unwrap();
        let w = pair.tree_weight();
        let single: Vec<ShapMatrix> = (0..2)
            .map(|i| {
                let mut one = pair.clone();
                one.trees = vec![pair.trees[i].clone()];
                one.mode = EnsembleMode::Gbdt;
                one.learning_rate = w;
                tree_shap(&one, &ft).unwrap()
            })
            .collect();
        for r in 0..ft.n_rows() {
            for f in 0..ft.n_cols() {
                let sum = single[0].get(r, f) + single[1].get(r, f);
                assert!((both.get(r, f) - sum).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn stump_with_equal_covers() {
    let t = RegressionTree {
        nodes: vec![split(1, 1, 2), leaf(-2.0), leaf(4.0)],
        root: 0,
        max_depth_reached: 1,
        covers: Some(vec![10.0, 5.0, 5.0]),
    };
    let m = hand_model(vec![t], EnsembleMode::ExtraTrees);
    let ft = FeatureTable::from_rows(m.feature_names.clone(), &[vec![0.9, 0.1, 0.9]]).unwrap();
    let shap = tree_shap(&m, &ft).unwrap();
    assert_eq!(shap.row(0), &[0.0, -3.0, 0.0]);
    assert_eq!(shap.base_value, 0.25 + 1.0);
}

#[test]
fn ranking_examples() {
    let mut rng = rng(1);
    let names: Vec<String> = ["big", "half", "null"].iter().map(|s| s.to_string()).collect();
    let mut values = Vec::new();
    for _ in 0..50 {
        let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        values.extend([s, -0.5 * s, 0.0]);
    }
    let shap = ShapMatrix::from_values(values, names, 0.0).unwrap();
    let ranking = rank_features(&shap).unwrap();
    let got: Vec<(&str, f64)> = ranking.entries.iter().map(|e| (e.name.as_str(), e.importance)).collect();
    assert_eq!(got, vec![("big", 1.0), ("half", 0.5), ("null", 0.0)]);
    assert_eq!(select_top_k(&ranking, 1), vec!["big"]);
    assert_eq!(select_top_k(&ranking, 10), vec!["big", "half", "null"]);
}

#[test]
fn top_fifty_of_eighty_four() {
    let names: Vec<String> = (0..84).map(|j| format!("f{j:02}")).collect();
    let values: Vec<f64> = (0..10).flat_map(|r| (0..84).map(move |j| ((j * 7 + r) % 13) as f64)).collect();
    let ranking = rank_features(&ShapMatrix::from_values(values, names, 0.0).unwrap()).unwrap();
    let top = select_top_k(&ranking, 50);
    assert_eq!(top.len(), 50);
    let prefix: Vec<&str> = ranking.names().take(50).collect();
    assert_eq!(top, prefix);
}
