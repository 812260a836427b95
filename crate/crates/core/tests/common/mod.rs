//! Helpers shared by the integration suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use soiln::data::{Dataset, FeatureTable, Landcover, TargetVector};
use soiln::synth::{self, SynthSpec};
use soiln::trees::{Ensemble, RegressionTree, TreeNode};

/// Synthetic dataset with the default latent function, resized.
pub fn synth(n_rows: usize, n_noise: usize, seed: u64) -> Dataset {
    let spec = SynthSpec {
        n_rows,
        n_noise,
        seed,
        ..SynthSpec::default()
    };
    synth::generate(&spec).unwrap()
}

pub fn synth_transformed(n_rows: usize, n_noise: usize, seed: u64) -> Dataset {
    synth(n_rows, n_noise, seed).with_transformed_target().unwrap()
}

/// Small dense dataset with random features, optional missing cells and a
/// transformed-scale target.
pub fn random_dataset(rng: &mut ChaCha8Rng, n_rows: usize, n_cols: usize, missing_rate: f64) -> Dataset {
    let names: Vec<String> = (0..n_cols).map(|j| format!("x{j}")).collect();
    let mut cells = Vec::with_capacity(n_rows * n_cols);
    let mut y = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let row: Vec<f64> = (0..n_cols).map(|_| rng.random::<f64>()).collect();
        let signal = row.iter().enumerate().map(|(j, v)| v * (j % 3) as f64).sum::<f64>()
            + (6.0 * row[0]).sin();
        y.push(signal + 0.1 * rng.random::<f64>());
        for v in row {
            cells.push(if rng.random::<f64>() < missing_rate { None } else { Some(v) });
        }
    }
    let lc = (0..n_rows)
        .map(|r| if r % 3 == 0 { Landcover::Grassland } else { Landcover::Cropland })
        .collect();
    Dataset::new(
        FeatureTable::new(names, cells).unwrap(),
        TargetVector::transformed(y),
        lc,
        None,
    )
    .unwrap()
}

/// Cover-weighted expectation of one tree given that only the features in
/// `known` (a bitmask over model columns) are observed.
fn conditional_expectation(tree: &RegressionTree, node: usize, row: &[f64], known: u64) -> f64 {
    match tree.nodes[node] {
        TreeNode::Leaf { value } => value,
        TreeNode::Internal {
            feature,
            threshold,
            default_left,
            left,
            right,
        } => {
            if known >> feature & 1 == 1 {
                let x = row[feature];
                let go_left = if x.is_nan() { default_left } else { x < threshold };
                conditional_expectation(tree, if go_left { left } else { right }, row, known)
            } else {
                let c = tree.covers.as_ref().unwrap();
                let (cl, cr) = (c[left], c[right]);
                if cl + cr == 0.0 {
                    return 0.0;
                }
                (cl * conditional_expectation(tree, left, row, known)
                    + cr * conditional_expectation(tree, right, row, known))
                    / (cl + cr)
            }
        }
    }
}

/// Exact Shapley values by enumerating every subset of the features the
/// ensemble splits on. Returns `(base_value, phi)` in model column order.
pub fn brute_force_shap(model: &Ensemble, row: &[f64]) -> (f64, Vec<f64>) {
    let mut used: Vec<usize> = model.trees.iter().flat_map(|t| t.split_features()).collect();
    used.sort_unstable();
    used.dedup();
    let m = used.len();
    assert!(m <= 16, "oracle limited to 16 features, got {m}");
    let w = model.tree_weight();
    let value = |mask: usize| -> f64 {
        let mut known = 0u64;
        for (b, &f) in used.iter().enumerate() {
            if mask >> b & 1 == 1 {
                known |= 1 << f;
            }
        }
        model.base_score
            + w * model
                .trees
                .iter()
                .map(|t| conditional_expectation(t, t.root, row, known))
                .sum::<f64>()
    };
    let v: Vec<f64> = (0..1usize << m).map(value).collect();
    let mut fact = vec![1.0f64; m + 1];
    for i in 1..=m {
        fact[i] = fact[i - 1] * i as f64;
    }
    let mut phi = vec![0.0; model.feature_names.len()];
    for (b, &f) in used.iter().enumerate() {
        let mut acc = 0.0;
        for mask in 0..1usize << m {
            if mask >> b & 1 == 1 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let weight = fact[s] * fact[m - s - 1] / fact[m];
            acc += weight * (v[mask | 1 << b] - v[mask]);
        }
        phi[f] = acc;
    }
    (v[0], phi)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Row of `ft` laid out in the model's column order.
pub fn model_row(model: &Ensemble, ft: &FeatureTable, r: usize) -> Vec<f64> {
    let cols = ft.column_indices(&model.feature_names).unwrap();
    cols.iter().map(|&c| ft.row(r)[c]).collect()
}
