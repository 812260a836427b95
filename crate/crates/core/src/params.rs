//! Trainer hyperparameters and their name → value map form, which is what
//! the tuner proposes and what model files record.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Str(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            ParamValue::Int(v) => Some(v as f64),
            ParamValue::Float(v) => Some(v),
            ParamValue::Str(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            ParamValue::Int(v) => Some(v),
            ParamValue::Float(v) if v.fract() == 0.0 => Some(v as i64),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v}"),
            ParamValue::Str(s) => f.write_str(s),
        }
    }
}

pub type ParamMap = BTreeMap<String, ParamValue>;

fn get_f64(map: &ParamMap, key: &str) -> Result<Option<f64>> {
    map.get(key)
        .map(|v| {
            v.as_f64()
                .ok_or_else(|| Error::InvalidParams(format!("`{key}` must be numeric, got {v}")))
        })
        .transpose()
}

fn get_usize(map: &ParamMap, key: &str) -> Result<Option<usize>> {
    map.get(key)
        .map(|v| match v.as_i64() {
            Some(i) if i >= 0 => Ok(i as usize),
            _ => Err(Error::InvalidParams(format!(
                "`{key}` must be a nonnegative integer, got {v}"
            ))),
        })
        .transpose()
}

fn reject_unknown(map: &ParamMap, known: &[&str]) -> Result<()> {
    match map.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(Error::InvalidParams(format!("unknown parameter `{k}`"))),
        None => Ok(()),
    }
}

/// Second-order gradient boosting parameters (squared-error loss).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Minimum hessian sum per child; with squared error this is a row count.
    pub min_child_weight: f64,
    pub l2_lambda: f64,
    pub subsample_rows: f64,
    pub subsample_cols: f64,
    pub n_bins: usize,
    pub seed: u64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            learning_rate: 0.1,
            max_depth: 6,
            min_child_weight: 1.0,
            l2_lambda: 1.0,
            subsample_rows: 1.0,
            subsample_cols: 1.0,
            n_bins: 256,
            seed: 0,
        }
    }
}

impl GbdtParams {
    const KEYS: [&'static str; 9] = [
        "n_trees",
        "learning_rate",
        "max_depth",
        "min_child_weight",
        "l2_lambda",
        "subsample_rows",
        "subsample_cols",
        "n_bins",
        "seed",
    ];

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if self.n_trees == 0 {
            return bad("n_trees must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if !(self.min_child_weight >= 0.0 && self.min_child_weight.is_finite()) {
            return bad("min_child_weight must be >= 0");
        }
        if !(self.l2_lambda >= 0.0 && self.l2_lambda.is_finite()) {
            return bad("l2_lambda must be >= 0");
        }
        if !(self.subsample_rows > 0.0 && self.subsample_rows <= 1.0) {
            return bad("subsample_rows must lie in (0, 1]");
        }
        if !(self.subsample_cols > 0.0 && self.subsample_cols <= 1.0) {
            return bad("subsample_cols must lie in (0, 1]");
        }
        if !(2..=256).contains(&self.n_bins) {
            return bad("n_bins must lie in 2..=256");
        }
        Ok(())
    }

    pub fn to_map(&self) -> ParamMap {
        let mut m = ParamMap::new();
        m.insert("n_trees".into(), ParamValue::Int(self.n_trees as i64));
        m.insert("learning_rate".into(), ParamValue::Float(self.learning_rate));
        m.insert("max_depth".into(), ParamValue::Int(self.max_depth as i64));
        m.insert("min_child_weight".into(), ParamValue::Float(self.min_child_weight));
        m.insert("l2_lambda".into(), ParamValue::Float(self.l2_lambda));
        m.insert("subsample_rows".into(), ParamValue::Float(self.subsample_rows));
        m.insert("subsample_cols".into(), ParamValue::Float(self.subsample_cols));
        m.insert("n_bins".into(), ParamValue::Int(self.n_bins as i64));
        m.insert("seed".into(), ParamValue::Int(self.seed as i64));
        m
    }

    /// Copy with every key present in `map` overridden.
    pub fn with_overrides(&self, map: &ParamMap) -> Result<Self> {
        reject_unknown(map, &Self::KEYS)?;
        let mut p = self.clone();
        if let Some(v) = get_usize(map, "n_trees")? {
            p.n_trees = v;
        }
        if let Some(v) = get_f64(map, "learning_rate")? {
            p.learning_rate = v;
        }
        if let Some(v) = get_usize(map, "max_depth")? {
            p.max_depth = v;
        }
        if let Some(v) = get_f64(map, "min_child_weight")? {
            p.min_child_weight = v;
        }
        if let Some(v) = get_f64(map, "l2_lambda")? {
            p.l2_lambda = v;
        }
        if let Some(v) = get_f64(map, "subsample_rows")? {
            p.subsample_rows = v;
        }
        if let Some(v) = get_f64(map, "subsample_cols")? {
            p.subsample_cols = v;
        }
        if let Some(v) = get_usize(map, "n_bins")? {
            p.n_bins = v;
        }
        if let Some(v) = get_usize(map, "seed")? {
            p.seed = v as u64;
        }
        p.validate()?;
        Ok(p)
    }
}

/// Extremely randomized trees parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraTreesParams {
    pub n_trees: usize,
    /// 0 means unlimited.
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features drawn per node; 0 means all columns.
    pub n_candidate_features: usize,
    pub seed: u64,
}

impl Default for ExtraTreesParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 0,
            min_samples_leaf: 1,
            n_candidate_features: 0,
            seed: 0,
        }
    }
}

impl ExtraTreesParams {
    const KEYS: [&'static str; 6] = [
        "n_trees",
        "max_depth",
        "min_samples_leaf",
        "n_candidate_features",
        "max_features_fraction",
        "seed",
    ];

    pub fn validate(&self, n_cols: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidParams("n_trees must be positive".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::InvalidParams("min_samples_leaf must be >= 1".into()));
        }
        if self.n_candidate_features > n_cols {
            return Err(Error::InvalidParams(format!(
                "n_candidate_features {} exceeds {} columns",
                self.n_candidate_features, n_cols
            )));
        }
        Ok(())
    }

    pub fn to_map(&self) -> ParamMap {
        let mut m = ParamMap::new();
        m.insert("n_trees".into(), ParamValue::Int(self.n_trees as i64));
        m.insert("max_depth".into(), ParamValue::Int(self.max_depth as i64));
        m.insert("min_samples_leaf".into(), ParamValue::Int(self.min_samples_leaf as i64));
        m.insert(
            "n_candidate_features".into(),
            ParamValue::Int(self.n_candidate_features as i64),
        );
        m.insert("seed".into(), ParamValue::Int(self.seed as i64));
        m
    }

    /// Copy with overrides. `max_features_fraction` is resolved against
    /// `n_cols` into `n_candidate_features = ceil(fraction * n_cols)`.
    pub fn with_overrides(&self, map: &ParamMap, n_cols: usize) -> Result<Self> {
        reject_unknown(map, &Self::KEYS)?;
        let mut p = self.clone();
        if let Some(v) = get_usize(map, "n_trees")? {
            p.n_trees = v;
        }
        if let Some(v) = get_usize(map, "max_depth")? {
            p.max_depth = v;
        }
        if let Some(v) = get_usize(map, "min_samples_leaf")? {
            p.min_samples_leaf = v;
        }
        if let Some(v) = get_usize(map, "n_candidate_features")? {
            p.n_candidate_features = v;
        }
        if let Some(f) = get_f64(map, "max_features_fraction")? {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidParams(
                    "max_features_fraction must lie in (0, 1]".into(),
                ));
            }
            p.n_candidate_features = ((f * n_cols as f64).ceil() as usize).clamp(1, n_cols.max(1));
        }
        if let Some(v) = get_usize(map, "seed")? {
            p.seed = v as u64;
        }
        p.validate(n_cols)?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainerKind {
    Gbdt,
    #[serde(rename = "extratrees")]
    ExtraTrees,
}

impl fmt::Display for TrainerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainerKind::Gbdt => "gbdt",
            TrainerKind::ExtraTrees => "extratrees",
        })
    }
}

impl std::str::FromStr for TrainerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gbdt" => Ok(TrainerKind::Gbdt),
            "extratrees" | "extra_trees" | "et" => Ok(TrainerKind::ExtraTrees),
            other => Err(Error::InvalidParams(format!("unknown trainer `{other}`"))),
        }
    }
}

/// Parameters for either trainer.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Gbdt(GbdtParams),
    ExtraTrees(ExtraTreesParams),
}

impl ModelParams {
    pub fn default_for(kind: TrainerKind) -> Self {
        match kind {
            TrainerKind::Gbdt => ModelParams::Gbdt(GbdtParams::default()),
            TrainerKind::ExtraTrees => ModelParams::ExtraTrees(ExtraTreesParams::default()),
        }
    }

    pub fn kind(&self) -> TrainerKind {
        match self {
            ModelParams::Gbdt(_) => TrainerKind::Gbdt,
            ModelParams::ExtraTrees(_) => TrainerKind::ExtraTrees,
        }
    }

    pub fn with_overrides(&self, map: &ParamMap, n_cols: usize) -> Result<Self> {
        Ok(match self {
            ModelParams::Gbdt(p) => ModelParams::Gbdt(p.with_overrides(map)?),
            ModelParams::ExtraTrees(p) => ModelParams::ExtraTrees(p.with_overrides(map, n_cols)?),
        })
    }

    pub fn to_map(&self) -> ParamMap {
        match self {
            ModelParams::Gbdt(p) => p.to_map(),
            ModelParams::ExtraTrees(p) => p.to_map(),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            ModelParams::Gbdt(p) => ModelParams::Gbdt(GbdtParams { seed, ..p.clone() }),
            ModelParams::ExtraTrees(p) => {
                ModelParams::ExtraTrees(ExtraTreesParams { seed, ..p.clone() })
            }
        }
    }
}
