use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{ParamMap, ParamValue};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Dimension {
    Continuous {
        name: String,
        low: f64,
        high: f64,
        log_scale: bool,
    },
    Integer {
        name: String,
        low: i64,
        high: i64,
    },
    Categorical {
        name: String,
        choices: Vec<String>,
    },
}

impl Dimension {
    pub fn continuous(name: &str, low: f64, high: f64) -> Self {
        Dimension::Continuous {
            name: name.into(),
            low,
            high,
            log_scale: false,
        }
    }

    pub fn log(name: &str, low: f64, high: f64) -> Self {
        Dimension::Continuous {
            name: name.into(),
            low,
            high,
            log_scale: true,
        }
    }

    pub fn integer(name: &str, low: i64, high: i64) -> Self {
        Dimension::Integer {
            name: name.into(),
            low,
            high,
        }
    }

    pub fn categorical(name: &str, choices: &[&str]) -> Self {
        Dimension::Categorical {
            name: name.into(),
            choices: choices.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Dimension::Continuous { name, .. }
            | Dimension::Integer { name, .. }
            | Dimension::Categorical { name, .. } => name,
        }
    }

    /// Bounds in sampling scale (log for log dims, ±0.5 around integers).
    pub(crate) fn sampling_bounds(&self) -> (f64, f64) {
        match *self {
            Dimension::Continuous {
                low,
                high,
                log_scale: true,
                ..
            } => (low.ln(), high.ln()),
            Dimension::Continuous { low, high, .. } => (low, high),
            Dimension::Integer { low, high, .. } => (low as f64 - 0.5, high as f64 + 0.5),
            Dimension::Categorical { ref choices, .. } => (0.0, choices.len() as f64),
        }
    }

    /// Map a value to sampling scale; `None` for values outside the dim.
    pub(crate) fn to_internal(&self, v: &ParamValue) -> Option<f64> {
        match self {
            Dimension::Continuous { log_scale, .. } => {
                let x = v.as_f64()?;
                Some(if *log_scale { x.ln() } else { x })
            }
            Dimension::Integer { .. } => v.as_i64().map(|i| i as f64),
            Dimension::Categorical { choices, .. } => match v {
                ParamValue::Str(s) => choices.iter().position(|c| c == s).map(|i| i as f64),
                _ => None,
            },
        }
    }

    pub(crate) fn from_internal(&self, x: f64) -> ParamValue {
        match *self {
            Dimension::Continuous {
                low,
                high,
                log_scale,
                ..
            } => {
                let v = if log_scale { x.exp() } else { x };
                ParamValue::Float(v.clamp(low, high))
            }
            Dimension::Integer { low, high, .. } => ParamValue::Int((x.round() as i64).clamp(low, high)),
            Dimension::Categorical { ref choices, .. } => {
                ParamValue::Str(choices[(x as usize).min(choices.len() - 1)].clone())
            }
        }
    }

    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> ParamValue {
        match self {
            Dimension::Continuous { .. } => {
                let (lo, hi) = self.sampling_bounds();
                self.from_internal(lo + rng.random::<f64>() * (hi - lo))
            }
            Dimension::Integer { low, high, .. } => ParamValue::Int(rng.random_range(*low..=*high)),
            Dimension::Categorical { choices, .. } => {
                ParamValue::Str(choices[rng.random_range(0..choices.len())].clone())
            }
        }
    }

    pub fn contains(&self, v: &ParamValue) -> bool {
        match (self, v) {
            (Dimension::Continuous { low, high, .. }, ParamValue::Float(x)) => *low <= *x && *x <= *high,
            (Dimension::Integer { low, high, .. }, ParamValue::Int(x)) => *low <= *x && *x <= *high,
            (Dimension::Categorical { choices, .. }, ParamValue::Str(s)) => choices.contains(s),
            _ => false,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        match self {
            Dimension::Continuous {
                name,
                low,
                high,
                log_scale,
            } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return bad(format!("dimension `{name}` needs low < high"));
                }
                if *log_scale && *low <= 0.0 {
                    return bad(format!("log-scale dimension `{name}` needs low > 0"));
                }
            }
            Dimension::Integer { name, low, high } => {
                if low >= high {
                    return bad(format!("dimension `{name}` needs low < high"));
                }
            }
            Dimension::Categorical { name, choices } => {
                if choices.is_empty() {
                    return bad(format!("categorical dimension `{name}` has no choices"));
                }
            }
        }
        Ok(())
    }
}

/// Hyperparameter search domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub dims: Vec<Dimension>,
}

impl ParamSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        let space = Self { dims };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::EmptySpace);
        }
        let mut names = HashSet::new();
        for d in &self.dims {
            d.validate()?;
            if !names.insert(d.name()) {
                return Err(Error::InvalidParams(format!("duplicate dimension `{}`", d.name())));
            }
        }
        Ok(())
    }

    /// Default GBDT search space.
    pub fn gbdt_default() -> Self {
        Self {
            dims: vec![
                Dimension::log("learning_rate", 0.01, 0.3),
                Dimension::integer("n_trees", 100, 1000),
                Dimension::integer("max_depth", 3, 10),
                Dimension::log("min_child_weight", 0.1, 10.0),
                Dimension::log("l2_lambda", 0.1, 30.0),
                Dimension::continuous("subsample_rows", 0.6, 1.0),
                Dimension::continuous("subsample_cols", 0.5, 1.0),
            ],
        }
    }

    /// Default ExtraTrees search space.
    pub fn extratrees_default() -> Self {
        Self {
            dims: vec![
                Dimension::integer("n_trees", 50, 300),
                Dimension::integer("min_samples_leaf", 1, 20),
                Dimension::continuous("max_features_fraction", 0.2, 1.0),
            ],
        }
    }

    pub fn sample_uniform<R: Rng>(&self, rng: &mut R) -> ParamMap {
        self.dims
            .iter()
            .map(|d| (d.name().to_string(), d.sample_uniform(rng)))
            .collect()
    }

    pub fn contains(&self, params: &ParamMap) -> bool {
        params.len() == self.dims.len()
            && self
                .dims
                .iter()
                .all(|d| params.get(d.name()).is_some_and(|v| d.contains(v)))
    }
}
