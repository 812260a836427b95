//! Exact path-dependent TreeSHAP attributions, global feature ranking and
//! top-k selection.
//!
//! The background distribution is the training data as summarized by each
//! node's cover count; no background sample is needed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FeatureTable;
use crate::error::{Error, Result};
use crate::trees::{Ensemble, RegressionTree, TreeNode};

/// Per-row, per-feature attributions. `base_value + Σ_j values[row][j]`
/// reproduces the model prediction for that row.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapMatrix {
    values: Vec<f64>,
    n_rows: usize,
    pub base_value: f64,
    pub feature_names: Vec<String>,
}

impl ShapMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let k = self.n_features();
        &self.values[row * k..(row + 1) * k]
    }

    pub fn get(&self, row: usize, feature: usize) -> f64 {
        self.values[row * self.n_features() + feature]
    }

    /// Build from explicit values (row-major).
    pub fn from_values(values: Vec<f64>, feature_names: Vec<String>, base_value: f64) -> Result<Self> {
        let k = feature_names.len();
        if k == 0 || values.len() % k != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} features",
                values.len(),
                k
            )));
        }
        Ok(Self {
            n_rows: values.len() / k,
            values,
            base_value,
            feature_names,
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct PathElement {
    feature: usize,
    zero_fraction: f64,
    one_fraction: f64,
    weight: f64,
}

/// Sentinel feature for the root path element.
const NO_FEATURE: usize = usize::MAX;

fn extend_path(path: &mut [PathElement], depth: usize, zero_fraction: f64, one_fraction: f64, feature: usize) {
    path[depth] = PathElement {
        feature,
        zero_fraction,
        one_fraction,
        weight: if depth == 0 { 1.0 } else { 0.0 },
    };
    let d1 = (depth + 1) as f64;
    for i in (0..depth).rev() {
        path[i + 1].weight += one_fraction * path[i].weight * (i + 1) as f64 / d1;
        path[i].weight = zero_fraction * path[i].weight * (depth - i) as f64 / d1;
    }
}

fn unwind_path(path: &mut [PathElement], depth: usize, index: usize) {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next_one = path[depth].weight;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = path[i].weight;
            path[i].weight = next_one * d1 / ((i + 1) as f64 * one);
            next_one = tmp - path[i].weight * zero * (depth - i) as f64 / d1;
        } else {
            path[i].weight = path[i].weight * d1 / (zero * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

/// Total path weight with element `index` removed, without modifying the path.
fn unwound_sum(path: &[PathElement], depth: usize, index: usize) -> f64 {
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = (depth + 1) as f64;
    let mut next_one = path[depth].weight;
    let mut total = 0.0;
    for i in (0..depth).rev() {
        if one != 0.0 {
            let tmp = next_one * d1 / ((i + 1) as f64 * one);
            total += tmp;
            next_one = path[i].weight - tmp * zero * (depth - i) as f64 / d1;
        } else if zero != 0.0 {
            total += path[i].weight / zero / ((depth - i) as f64 / d1);
        }
    }
    total
}

struct Explainer<'a> {
    tree: &'a RegressionTree,
    covers: &'a [f64],
    row: &'a [f64],
    scale: f64,
}

impl Explainer<'_> {
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        &self,
        phi: &mut [f64],
        buf: &mut [PathElement],
        parent_offset: usize,
        node: usize,
        mut depth: usize,
        zero_fraction: f64,
        one_fraction: f64,
        feature: usize,
    ) {
        let offset = parent_offset + depth + 1;
        buf.copy_within(parent_offset..parent_offset + depth + 1, offset);
        let path = &mut buf[offset..];
        extend_path(path, depth, zero_fraction, one_fraction, feature);

        match self.tree.nodes[node] {
            TreeNode::Leaf { value } => {
                for i in 1..=depth {
                    let w = unwound_sum(path, depth, i);
                    let el = path[i];
                    phi[el.feature] += w * (el.one_fraction - el.zero_fraction) * value * self.scale;
                }
            }
            TreeNode::Internal {
                feature: split,
                threshold,
                default_left,
                left,
                right,
            } => {
                let x = self.row[split];
                let go_left = if x.is_nan() { default_left } else { x < threshold };
                let (hot, cold) = if go_left { (left, right) } else { (right, left) };
                let cover = self.covers[node];
                let (hot_zero, cold_zero) = if cover > 0.0 {
                    (self.covers[hot] / cover, self.covers[cold] / cover)
                } else {
                    (0.0, 0.0)
                };
                let (mut in_zero, mut in_one) = (1.0, 1.0);
                if let Some(k) = (1..=depth).find(|&i| path[i].feature == split) {
                    in_zero = path[k].zero_fraction;
                    in_one = path[k].one_fraction;
                    unwind_path(path, depth, k);
                    depth -= 1;
                }
                self.recurse(phi, buf, offset, hot, depth + 1, hot_zero * in_zero, in_one, split);
                self.recurse(phi, buf, offset, cold, depth + 1, cold_zero * in_zero, 0.0, split);
            }
        }
    }
}

/// Cover-weighted mean leaf value of a tree.
fn expected_output(tree: &RegressionTree, covers: &[f64]) -> f64 {
    let root_cover = covers[tree.root];
    if root_cover <= 0.0 {
        return 0.0;
    }
    tree.nodes
        .iter()
        .enumerate()
        .filter_map(|(i, n)| match n {
            TreeNode::Leaf { value } => Some(covers[i] / root_cover * value),
            TreeNode::Internal { .. } => None,
        })
        .sum()
}

/// Path buffer length for a tree of the given depth.
fn buffer_len(max_depth: usize) -> usize {
    (max_depth + 2) * (max_depth + 3) / 2 + 1
}

/// Add one tree's attributions for `row` (model-feature order) into `phi`.
fn tree_shap_row(tree: &RegressionTree, covers: &[f64], row: &[f64], scale: f64, phi: &mut [f64], buf: &mut Vec<PathElement>) {
    let need = buffer_len(tree.max_depth_reached);
    if buf.len() < need {
        buf.resize(need, PathElement::default());
    }
    let ex = Explainer {
        tree,
        covers,
        row,
        scale,
    };
    ex.recurse(phi, buf, 0, tree.root, 0, 1.0, 1.0, NO_FEATURE);
}

/// Exact path-dependent TreeSHAP for every row of `ft` (columns matched by
/// name), summed across trees and scaled by the ensemble combination rule.
pub fn tree_shap(model: &Ensemble, ft: &FeatureTable) -> Result<ShapMatrix> {
    let covers: Vec<&[f64]> = model
        .trees
        .iter()
        .map(|t| t.covers.as_deref().ok_or(Error::MissingCoverCounts))
        .collect::<Result<_>>()?;
    let cols = ft.column_indices(&model.feature_names)?;
    let k = cols.len();
    let scale = model.tree_weight();
    let base_value = model.base_score
        + scale
            * model
                .trees
                .iter()
                .zip(&covers)
                .map(|(t, c)| expected_output(t, c))
                .sum::<f64>();

    let rows: Vec<Vec<f64>> = (0..ft.n_rows())
        .into_par_iter()
        .map_init(
            || (vec![0.0; k], Vec::new()),
            |(x, buf), r| {
                let src = ft.row(r);
                for (dst, &c) in x.iter_mut().zip(&cols) {
                    *dst = src[c];
                }
                let mut phi = vec![0.0; k];
                for (t, c) in model.trees.iter().zip(&covers) {
                    tree_shap_row(t, c, x, scale, &mut phi, buf);
                }
                phi
            },
        )
        .collect();

    Ok(ShapMatrix {
        values: rows.into_iter().flatten().collect(),
        n_rows: ft.n_rows(),
        base_value,
        feature_names: model.feature_names.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub name: String,
    pub importance: f64,
}

/// Features sorted by mean |attribution|, descending; equal importances
/// are ordered by name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub entries: Vec<RankedFeature>,
}

impl FeatureRanking {
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["name", "importance"])?;
        for e in &self.entries {
            w.write_record([e.name.as_str(), &e.importance.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut entries = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let importance = rec
                .get(1)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::ParseError {
                    row,
                    col: "importance".into(),
                    token: rec.get(1).unwrap_or_default().to_string(),
                })?;
            entries.push(RankedFeature {
                name: rec.get(0).unwrap_or_default().to_string(),
                importance,
            });
        }
        Ok(Self { entries })
    }
}

pub fn rank_features(shap: &ShapMatrix) -> Result<FeatureRanking> {
    if shap.n_rows() == 0 || shap.n_features() == 0 {
        return Err(Error::EmptyMatrix);
    }
    let k = shap.n_features();
    let mut sums = vec![0.0; k];
    for r in 0..shap.n_rows() {
        for (s, v) in sums.iter_mut().zip(shap.row(r)) {
            *s += v.abs();
        }
    }
    let n = shap.n_rows() as f64;
    let mut entries: Vec<RankedFeature> = shap
        .feature_names
        .iter()
        .zip(sums)
        .map(|(name, s)| RankedFeature {
            name: name.clone(),
            importance: s / n,
        })
        .collect();
    entries.sort_by(|a, b| b.importance.total_cmp(&a.importance).then_with(|| a.name.cmp(&b.name)));
    Ok(FeatureRanking { entries })
}

/// The first `min(k, n)` names of the ranking.
pub fn select_top_k(ranking: &FeatureRanking, k: usize) -> Vec<String> {
    let n = ranking.entries.len();
    if k == 0 || k > n {
        log::warn!("top-k of {k} clamped to the {n} ranked features");
    }
    ranking.entries.iter().take(k.clamp(1, n.max(1))).map(|e| e.name.clone()).collect()
}
