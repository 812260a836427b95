//! JSON model files.
//!
//! Floats are written in shortest round-trip decimal form and parsed with
//! correct rounding, so a reloaded model predicts bit-identically.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{hex_digest, TargetScale, TARGET_SCALE_FACTOR};
use crate::error::{Error, Result};
use crate::params::ParamMap;
use crate::trees::{Ensemble, EnsembleMode, RegressionTree, TrainingMeta, TreeNode};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetTransform {
    pub scale_factor: f64,
    pub log: String,
}

impl Default for TargetTransform {
    fn default() -> Self {
        Self {
            scale_factor: TARGET_SCALE_FACTOR,
            log: "natural".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Internal,
    Leaf,
}

/// One flattened tree node. Unused fields for a kind are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    pub kind: NodeKind,
    pub feature: Option<usize>,
    pub threshold: Option<f64>,
    pub default_left: Option<bool>,
    pub left: Option<usize>,
    pub right: Option<usize>,
    pub value: Option<f64>,
    pub cover: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeRecord {
    pub root: usize,
    pub max_depth_reached: usize,
    pub nodes: Vec<NodeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFingerprint {
    pub n_rows: usize,
    /// SHA-256 of the feature names joined by `\n`.
    pub feature_names_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingMetaRecord {
    pub params: ParamMap,
    pub seed: u64,
    pub fingerprint: DataFingerprint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub format_version: u64,
    pub mode: EnsembleMode,
    pub base_score: f64,
    pub learning_rate: f64,
    pub target_transform: TargetTransform,
    pub target_scale: TargetScale,
    pub selected_features: Vec<String>,
    pub trees: Vec<TreeRecord>,
    pub training_meta: TrainingMetaRecord,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u64,
}

pub fn feature_names_digest(names: &[String]) -> String {
    hex_digest(names.join("\n").as_bytes())
}

fn tree_record(t: &RegressionTree) -> TreeRecord {
    let nodes = t
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let cover = t.cover(i);
            match *n {
                TreeNode::Internal {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                } => NodeRecord {
                    kind: NodeKind::Internal,
                    feature: Some(feature),
                    threshold: Some(threshold),
                    default_left: Some(default_left),
                    left: Some(left),
                    right: Some(right),
                    value: None,
                    cover,
                },
                TreeNode::Leaf { value } => NodeRecord {
                    kind: NodeKind::Leaf,
                    feature: None,
                    threshold: None,
                    default_left: None,
                    left: None,
                    right: None,
                    value: Some(value),
                    cover,
                },
            }
        })
        .collect();
    TreeRecord {
        root: t.root,
        max_depth_reached: t.max_depth_reached,
        nodes,
    }
}

fn tree_from_record(i: usize, rec: &TreeRecord) -> Result<RegressionTree> {
    let corrupt = |j: usize, what: &str| Error::CorruptModel(format!("tree {i} node {j}: {what}"));
    let mut nodes = Vec::with_capacity(rec.nodes.len());
    let mut covers = Vec::with_capacity(rec.nodes.len());
    let mut all_covers = true;
    for (j, n) in rec.nodes.iter().enumerate() {
        nodes.push(match n.kind {
            NodeKind::Internal => TreeNode::Internal {
                feature: n.feature.ok_or_else(|| corrupt(j, "missing feature"))?,
                threshold: n.threshold.ok_or_else(|| corrupt(j, "missing threshold"))?,
                default_left: n.default_left.ok_or_else(|| corrupt(j, "missing default_left"))?,
                left: n.left.ok_or_else(|| corrupt(j, "missing left child"))?,
                right: n.right.ok_or_else(|| corrupt(j, "missing right child"))?,
            },
            NodeKind::Leaf => TreeNode::Leaf {
                value: n.value.ok_or_else(|| corrupt(j, "missing or non-finite leaf value"))?,
            },
        });
        match n.cover {
            Some(c) => covers.push(c),
            None => all_covers = false,
        }
    }
    Ok(RegressionTree {
        nodes,
        root: rec.root,
        max_depth_reached: rec.max_depth_reached,
        covers: all_covers.then_some(covers),
    })
}

impl ModelFile {
    pub fn from_ensemble(m: &Ensemble) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            mode: m.mode,
            base_score: m.base_score,
            learning_rate: m.learning_rate,
            target_transform: TargetTransform::default(),
            target_scale: m.target_scale,
            selected_features: m.feature_names.clone(),
            trees: m.trees.iter().map(tree_record).collect(),
            training_meta: TrainingMetaRecord {
                params: m.meta.params.clone(),
                seed: m.meta.seed,
                fingerprint: DataFingerprint {
                    n_rows: m.meta.n_rows,
                    feature_names_sha256: feature_names_digest(&m.feature_names),
                },
            },
        }
    }

    /// Rebuild and validate the ensemble.
    pub fn into_ensemble(self) -> Result<Ensemble> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(self.format_version));
        }
        if self.target_transform != TargetTransform::default() {
            return Err(Error::CorruptModel(format!(
                "unsupported target transform {:?}",
                self.target_transform
            )));
        }
        let digest = feature_names_digest(&self.selected_features);
        if digest != self.training_meta.fingerprint.feature_names_sha256 {
            return Err(Error::CorruptModel(
                "feature names do not match the recorded fingerprint".into(),
            ));
        }
        let trees = self
            .trees
            .iter()
            .enumerate()
            .map(|(i, t)| tree_from_record(i, t))
            .collect::<Result<Vec<_>>>()?;
        let m = Ensemble {
            trees,
            base_score: self.base_score,
            learning_rate: self.learning_rate,
            mode: self.mode,
            feature_names: self.selected_features,
            target_scale: self.target_scale,
            meta: TrainingMeta {
                params: self.training_meta.params,
                seed: self.training_meta.seed,
                n_rows: self.training_meta.fingerprint.n_rows,
            },
        };
        m.check()?;
        Ok(m)
    }
}

pub fn to_json(m: &Ensemble) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ModelFile::from_ensemble(m))?)
}

/// Parse a model document. The version is checked before the full schema
/// so that files from other versions report `UnsupportedVersion`.
pub fn from_json(text: &str) -> Result<Ensemble> {
    let probe: VersionProbe =
        serde_json::from_str(text).map_err(|e| Error::CorruptModel(e.to_string()))?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(probe.format_version));
    }
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::CorruptModel(e.to_string()))?;
    file.into_ensemble()
}

pub fn save(m: &Ensemble, path: &Path) -> Result<()> {
    let mut text = to_json(m)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<Ensemble> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Ensemble {
        let mut m = Ensemble::constant(0.1 + 0.2, vec!["a".into(), "b".into()], TargetScale::TransformedLog);
        m.learning_rate = 0.07;
        m.trees.push(RegressionTree {
            nodes: vec![
                TreeNode::Internal { feature: 1, threshold: 1.0 / 3.0, default_left: true, left: 1, right: 2 },
                TreeNode::Leaf { value: -1e-300 },
                TreeNode::Leaf { value: std::f64::consts::E },
            ],
            root: 0,
            max_depth_reached: 1,
            covers: Some(vec![3.0, 1.0, 2.0]),
        });
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        let back = from_json(&to_json(&m).unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn empty_ensemble_round_trips() {
        let m = Ensemble::constant(4.2, vec!["x".into()], TargetScale::TransformedLog);
        assert_eq!(from_json(&to_json(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn rejects_out_of_range_child() {
        let mut f = ModelFile::from_ensemble(&sample());
        f.trees[0].nodes[0].right = Some(9);
        let text = serde_json::to_string(&f).unwrap();
        assert!(matches!(from_json(&text), Err(Error::CorruptModel(_))));
    }

    #[test]
    fn rejects_other_versions() {
        let mut f = ModelFile::from_ensemble(&sample());
        f.format_version = 2;
        let text = serde_json::to_string(&f).unwrap();
        assert!(matches!(from_json(&text), Err(Error::UnsupportedVersion(2))));
    }
}
