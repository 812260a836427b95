use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{CsvSchema, Landcover, DEFAULT_FOLD_BINS};
use crate::error::{Error, Result};
use crate::params::{ModelParams, TrainerKind};
use crate::tuner::{ParamSpace, TunerConfig};

/// Settings for a pipeline run. Every field has a default, so a config
/// file only needs the fields it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: PathBuf,
    pub workdir: PathBuf,
    /// Extra location for the final model file, besides the workdir.
    pub model: Option<PathBuf>,
    pub target_column: String,
    pub landcover_column: String,
    pub id_column: Option<String>,
    pub test_fraction: f64,
    pub k_folds: usize,
    pub top_k_features: usize,
    pub fold_bins: usize,
    pub trainer: TrainerKind,
    pub n_trials: usize,
    pub n_startup: usize,
    pub gamma: f64,
    pub n_candidates: usize,
    /// Search space; the trainer's default space when absent.
    pub search_space: Option<ParamSpace>,
    pub split_seed: u64,
    pub fold_seed: u64,
    pub tuner_seed: u64,
    pub model_seed: u64,
    /// Restrict every stage to one landcover class.
    pub landcover: Option<Landcover>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let schema = CsvSchema::default();
        let tuner = TunerConfig::default();
        Self {
            dataset: PathBuf::new(),
            workdir: PathBuf::from("work"),
            model: None,
            target_column: schema.target_column,
            landcover_column: schema.landcover_column,
            id_column: schema.id_column,
            test_fraction: 0.15,
            k_folds: 5,
            top_k_features: 50,
            fold_bins: DEFAULT_FOLD_BINS,
            trainer: TrainerKind::Gbdt,
            n_trials: tuner.n_trials,
            n_startup: tuner.n_startup,
            gamma: tuner.gamma,
            n_candidates: tuner.n_candidates,
            search_space: None,
            split_seed: 0,
            fold_seed: 0,
            tuner_seed: 0,
            model_seed: 0,
            landcover: None,
        }
    }
}

impl PipelineConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.split_seed = seed;
        self.fold_seed = seed;
        self.tuner_seed = seed;
        self.model_seed = seed;
        self
    }

    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            target_column: self.target_column.clone(),
            landcover_column: self.landcover_column.clone(),
            id_column: self.id_column.clone(),
        }
    }

    pub fn tuner_config(&self) -> TunerConfig {
        TunerConfig {
            n_trials: self.n_trials,
            n_startup: self.n_startup,
            gamma: self.gamma,
            n_candidates: self.n_candidates,
            k_folds: self.k_folds,
            seed: self.tuner_seed,
        }
    }

    pub fn search_space_for(&self, trainer: TrainerKind) -> ParamSpace {
        match (&self.search_space, trainer) {
            (Some(s), t) if t == self.trainer => s.clone(),
            (_, TrainerKind::Gbdt) => ParamSpace::gbdt_default(),
            (_, TrainerKind::ExtraTrees) => ParamSpace::extratrees_default(),
        }
    }

    /// Default parameters of `trainer`, seeded with `model_seed`.
    pub fn base_params(&self, trainer: TrainerKind) -> ModelParams {
        ModelParams::default_for(trainer).with_seed(self.model_seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidFraction(self.test_fraction));
        }
        if self.top_k_features == 0 {
            return Err(Error::InvalidParams("top_k_features must be at least 1".into()));
        }
        if self.fold_bins == 0 {
            return Err(Error::InvalidParams("fold_bins must be at least 1".into()));
        }
        self.tuner_config().validate()?;
        if let Some(space) = &self.search_space {
            space.validate()?;
        }
        Ok(())
    }
}
