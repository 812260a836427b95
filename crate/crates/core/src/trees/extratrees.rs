//! Extremely randomized trees: no bootstrap, one uniform cut per candidate
//! feature, best cut by variance reduction, leaves predict the node mean.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ensemble::{Ensemble, EnsembleMode, RegressionTree, TrainingMeta, TreeNode};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::params::ExtraTreesParams;

struct Cut {
    feature: usize,
    threshold: f64,
    missing_left: bool,
    score: f64,
}

/// Mean of `y` over `rows`, exact for constant targets and clamped to the
/// observed range.
fn node_mean(y: &[f64], rows: &[usize]) -> f64 {
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for &r in rows {
        lo = lo.min(y[r]);
        hi = hi.max(y[r]);
        sum += y[r];
    }
    if lo == hi {
        return lo;
    }
    (sum / rows.len() as f64).clamp(lo, hi)
}

/// Variance reduction expressed through sums of targets centered on the
/// node mean: `S_L²/n_L + S_R²/n_R − S²/n`.
#[inline]
fn reduction(sl: f64, nl: usize, sr: f64, nr: usize) -> f64 {
    let n = (nl + nr) as f64;
    sl * sl / nl as f64 + sr * sr / nr as f64 - (sl + sr) * (sl + sr) / n
}

struct TreeGrower<'a> {
    /// Column-major copy of the features, `NaN` where missing.
    cols: &'a [Vec<f64>],
    y: &'a [f64],
    params: &'a ExtraTreesParams,
    n_candidates: usize,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    centered: Vec<f64>,
    values: Vec<f64>,
}

impl TreeGrower<'_> {
    fn best_cut(&mut self, rows: &[usize]) -> Option<Cut> {
        let mean = node_mean(self.y, rows);
        let min_leaf = self.params.min_samples_leaf;
        self.order.shuffle(&mut self.rng);
        // centered targets and one gathered column, both contiguous
        self.centered.clear();
        self.centered.extend(rows.iter().map(|&r| self.y[r] - mean));
        let mut best: Option<Cut> = None;
        let mut tried = 0;
        for k in 0..self.order.len() {
            if tried == self.n_candidates {
                break;
            }
            let f = self.order[k];
            let col = &self.cols[f];
            self.values.clear();
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &r in rows {
                let v = col[r];
                // min/max skip NaN
                lo = lo.min(v);
                hi = hi.max(v);
                self.values.push(v);
            }
            if !(lo < hi) {
                continue;
            }
            tried += 1;
            let threshold = lo + self.rng.random::<f64>() * (hi - lo);
            if threshold <= lo {
                continue;
            }
            // branch-free: the side of a random cut is unpredictable
            let (mut sl, mut nl, mut sr, mut nr, mut sm, mut nm) = (0.0, 0, 0.0, 0, 0.0, 0);
            for (&v, &d) in self.values.iter().zip(&self.centered) {
                let left = v < threshold;
                let right = v >= threshold;
                let missing = !(left || right);
                sl += if left { d } else { 0.0 };
                sr += if right { d } else { 0.0 };
                sm += if missing { d } else { 0.0 };
                nl += left as usize;
                nr += right as usize;
                nm += missing as usize;
            }
            for missing_left in [true, false] {
                let (a, na, b, nb) = if missing_left {
                    (sl + sm, nl + nm, sr, nr)
                } else {
                    (sl, nl, sr + sm, nr + nm)
                };
                if na < min_leaf || nb < min_leaf {
                    continue;
                }
                let score = reduction(a, na, b, nb);
                if score > 0.0 && best.as_ref().is_none_or(|c| score > c.score) {
                    best = Some(Cut {
                        feature: f,
                        threshold,
                        missing_left,
                        score,
                    });
                }
                if nm == 0 {
                    break;
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>) -> RegressionTree {
        let mut nodes = vec![TreeNode::Leaf { value: 0.0 }];
        let mut covers = vec![rows.len() as f64];
        let mut max_depth_reached = 0;
        let mut stack = vec![(0usize, rows, 0usize)];
        while let Some((id, rows, depth)) = stack.pop() {
            max_depth_reached = max_depth_reached.max(depth);
            let depth_ok = self.params.max_depth == 0 || depth < self.params.max_depth;
            let constant = rows.iter().all(|&r| self.y[r] == self.y[rows[0]]);
            let cut = if depth_ok && !constant && rows.len() >= 2 * self.params.min_samples_leaf {
                self.best_cut(&rows)
            } else {
                None
            };
            let Some(cut) = cut else {
                nodes[id] = TreeNode::Leaf {
                    value: node_mean(self.y, &rows),
                };
                continue;
            };
            let col = &self.cols[cut.feature];
            let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| {
                let v = col[r];
                if v.is_nan() {
                    cut.missing_left
                } else {
                    v < cut.threshold
                }
            });
            let left_id = nodes.len();
            nodes.push(TreeNode::Leaf { value: 0.0 });
            nodes.push(TreeNode::Leaf { value: 0.0 });
            covers.push(left.len() as f64);
            covers.push(right.len() as f64);
            nodes[id] = TreeNode::Internal {
                feature: cut.feature,
                threshold: cut.threshold,
                default_left: cut.missing_left,
                left: left_id,
                right: left_id + 1,
            };
            stack.push((left_id + 1, right, depth + 1));
            stack.push((left_id, left, depth + 1));
        }
        RegressionTree {
            nodes,
            root: 0,
            max_depth_reached,
            covers: Some(covers),
        }
    }
}

/// Fit an ExtraTrees ensemble on the dataset's features and (transformed)
/// target. Tree `t` draws from its own stream keyed by `(seed, t)`, so the
/// result does not depend on scheduling.
pub fn train_extratrees(ds: &Dataset, params: &ExtraTreesParams) -> Result<Ensemble> {
    let n = ds.n_rows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let n_cols = ds.features.n_cols();
    params.validate(n_cols)?;
    if let Some(i) = ds.target.values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidParams(format!("target on row {i} is not finite")));
    }
    let n_candidates = if params.n_candidate_features == 0 {
        n_cols
    } else {
        params.n_candidate_features
    };
    let cols: Vec<Vec<f64>> = (0..n_cols)
        .map(|f| ds.features.column(f).map(|v| v.unwrap_or(f64::NAN)).collect())
        .collect();
    let trees: Vec<RegressionTree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64);
            let mut grower = TreeGrower {
                cols: &cols,
                y: &ds.target.values,
                params,
                n_candidates,
                rng,
                order: (0..n_cols).collect(),
                centered: Vec::new(),
                values: Vec::new(),
            };
            grower.grow((0..n).collect())
        })
        .collect();
    Ok(Ensemble {
        trees,
        base_score: 0.0,
        learning_rate: 1.0,
        mode: EnsembleMode::ExtraTrees,
        feature_names: ds.features.names().to_vec(),
        target_scale: ds.target.scale,
        meta: TrainingMeta {
            params: params.to_map(),
            seed: params.seed,
            n_rows: n,
        },
    })
}
