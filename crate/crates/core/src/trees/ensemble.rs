use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureTable, TargetScale};
use crate::error::{Error, Result};
use crate::params::ParamMap;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        default_left: bool,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

/// A regression tree stored as a flat node arena. Rows with
/// `x[feature] < threshold` go left; missing values follow `default_left`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
    pub root: usize,
    pub max_depth_reached: usize,
    /// Number of training rows that reached each node, parallel to `nodes`.
    pub covers: Option<Vec<f64>>,
}

impl RegressionTree {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { value }],
            root: 0,
            max_depth_reached: 0,
            covers: Some(vec![cover]),
        }
    }

    #[inline]
    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = self.root;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { .. } => return i,
                TreeNode::Internal {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                } => {
                    let x = row[feature];
                    let go_left = if x.is_nan() { default_left } else { x < threshold };
                    i = if go_left { left } else { right };
                }
            }
        }
    }

    /// Output for a row whose columns are in model-feature order.
    #[inline]
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            TreeNode::Leaf { value } => value,
            TreeNode::Internal { .. } => unreachable!(),
        }
    }

    pub fn cover(&self, node: usize) -> Option<f64> {
        self.covers.as_ref().map(|c| c[node])
    }

    /// Features referenced by any split, ascending and deduplicated.
    pub fn split_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Internal { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    /// Check the structural invariants: a single root, every other node
    /// with exactly one parent, everything reachable, finite values, and
    /// feature indices below `n_features`.
    pub fn validate(&self, n_features: usize) -> std::result::Result<(), String> {
        let n = self.nodes.len();
        if n == 0 {
            return Err("tree has no nodes".into());
        }
        if self.root >= n {
            return Err(format!("root index {} out of range", self.root));
        }
        if let Some(c) = &self.covers {
            if c.len() != n {
                return Err(format!("{} covers for {} nodes", c.len(), n));
            }
            if let Some(i) = c.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(format!("node {i} has invalid cover {}", c[i]));
            }
        }
        let mut parents = vec![0usize; n];
        for (i, node) in self.nodes.iter().enumerate() {
            match *node {
                TreeNode::Leaf { value } => {
                    if !value.is_finite() {
                        return Err(format!("node {i} has non-finite leaf value"));
                    }
                }
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if feature >= n_features {
                        return Err(format!(
                            "node {i} splits on feature {feature}, model has {n_features}"
                        ));
                    }
                    if !threshold.is_finite() {
                        return Err(format!("node {i} has non-finite threshold"));
                    }
                    for child in [left, right] {
                        if child >= n {
                            return Err(format!("node {i} child index {child} out of range"));
                        }
                        if child == self.root {
                            return Err(format!("node {i} points back at the root"));
                        }
                        parents[child] += 1;
                    }
                }
            }
        }
        if let Some(i) = (0..n).find(|&i| i != self.root && parents[i] != 1) {
            return Err(format!("node {i} has {} parents", parents[i]));
        }
        // With unique parents and no edge into the root, reachability from
        // the root rules out detached cycles.
        let mut seen = vec![false; n];
        let mut stack = vec![self.root];
        let mut depth = vec![0usize; n];
        let mut max_depth = 0;
        while let Some(i) = stack.pop() {
            if seen[i] {
                return Err(format!("node {i} reached twice"));
            }
            seen[i] = true;
            max_depth = max_depth.max(depth[i]);
            if let TreeNode::Internal { left, right, .. } = self.nodes[i] {
                depth[left] = depth[i] + 1;
                depth[right] = depth[i] + 1;
                stack.push(left);
                stack.push(right);
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(format!("node {i} is unreachable from the root"));
        }
        if max_depth != self.max_depth_reached {
            return Err(format!(
                "max_depth_reached is {}, actual depth {max_depth}",
                self.max_depth_reached
            ));
        }
        Ok(())
    }
}

/// How tree outputs are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleMode {
    /// `base_score + learning_rate * sum(trees)`
    Gbdt,
    /// `base_score + mean(trees)`
    #[serde(rename = "extratrees")]
    ExtraTrees,
}

impl EnsembleMode {
    pub fn trainer_kind(self) -> crate::params::TrainerKind {
        match self {
            EnsembleMode::Gbdt => crate::params::TrainerKind::Gbdt,
            EnsembleMode::ExtraTrees => crate::params::TrainerKind::ExtraTrees,
        }
    }
}

/// Provenance recorded alongside a trained model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub params: ParamMap,
    pub seed: u64,
    pub n_rows: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub trees: Vec<RegressionTree>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub mode: EnsembleMode,
    /// Training columns in the order tree feature indices refer to.
    pub feature_names: Vec<String>,
    pub target_scale: TargetScale,
    pub meta: TrainingMeta,
}

impl Ensemble {
    pub fn constant(base_score: f64, feature_names: Vec<String>, target_scale: TargetScale) -> Self {
        Self {
            trees: Vec::new(),
            base_score,
            learning_rate: 1.0,
            mode: EnsembleMode::Gbdt,
            feature_names,
            target_scale,
            meta: TrainingMeta::default(),
        }
    }

    /// Multiplier applied to each tree's output.
    pub fn tree_weight(&self) -> f64 {
        match self.mode {
            EnsembleMode::Gbdt => self.learning_rate,
            EnsembleMode::ExtraTrees => {
                if self.trees.is_empty() {
                    0.0
                } else {
                    1.0 / self.trees.len() as f64
                }
            }
        }
    }

    /// Prediction for a row already laid out in `feature_names` order.
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match self.mode {
            EnsembleMode::Gbdt => {
                let sum: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
                self.base_score + self.learning_rate * sum
            }
            EnsembleMode::ExtraTrees => {
                // Running mean stays inside [min, max] of the tree outputs and
                // is exact when they all agree.
                let mut mean = 0.0;
                for (k, t) in self.trees.iter().enumerate() {
                    let v = t.predict_row(row);
                    mean = if k == 0 { v } else { mean + (v - mean) / (k + 1) as f64 };
                }
                self.base_score + mean
            }
        }
    }

    /// Predictions (transformed-target units) for every row of `ft`, with
    /// columns matched by name.
    pub fn predict(&self, ft: &FeatureTable) -> Result<Vec<f64>> {
        let cols = ft.column_indices(&self.feature_names)?;
        Ok((0..ft.n_rows())
            .into_par_iter()
            .map_init(
                || vec![0.0; cols.len()],
                |buf, r| {
                    let row = ft.row(r);
                    for (dst, &c) in buf.iter_mut().zip(&cols) {
                        *dst = row[c];
                    }
                    self.predict_row(buf)
                },
            )
            .collect())
    }

    /// A copy keeping only the first `n` trees.
    pub fn truncated(&self, n: usize) -> Ensemble {
        Ensemble {
            trees: self.trees[..n.min(self.trees.len())].to_vec(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if !self.base_score.is_finite() {
            return Err("non-finite base score".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(format!("invalid learning rate {}", self.learning_rate));
        }
        let mut names: Vec<&String> = self.feature_names.iter().collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err("duplicate feature names".into());
        }
        for (i, t) in self.trees.iter().enumerate() {
            t.validate(self.feature_names.len())
                .map_err(|e| format!("tree {i}: {e}"))?;
        }
        Ok(())
    }

    pub(crate) fn check(&self) -> Result<()> {
        self.validate().map_err(Error::CorruptModel)
    }
}
