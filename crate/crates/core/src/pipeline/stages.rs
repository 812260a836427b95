//! Individual workflow stages. Each is a plain function over in-memory
//! values; [`super::run_pipeline`] chains them and the CLI exposes them
//! one by one over files.

use serde::{Deserialize, Serialize};

use super::PipelineConfig;
use crate::data::{
    load_csv, stratified_kfold, stratified_split, Dataset, FoldAssignment, SplitIndices,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::params::{GbdtParams, ModelParams, ParamMap, TrainerKind};
use crate::shap::{rank_features, select_top_k, tree_shap, FeatureRanking};
use crate::trees::{fit, Ensemble};
use crate::tuner::{tune_with, TuneOutcome};

/// Load the configured dataset in original units, restricted to the
/// configured landcover class if any.
pub fn load_dataset(cfg: &PipelineConfig) -> Result<Dataset> {
    let ds = load_csv(
        &cfg.dataset,
        &cfg.target_column,
        &cfg.landcover_column,
        cfg.id_column.as_deref(),
    )?;
    match &cfg.landcover {
        None => Ok(ds),
        Some(lc) => {
            let sub = ds.filter_class(lc);
            if sub.n_rows() == 0 {
                return Err(Error::EmptyDataset);
            }
            Ok(sub)
        }
    }
}

pub fn split(ds: &Dataset, cfg: &PipelineConfig) -> Result<SplitIndices> {
    stratified_split(ds, cfg.test_fraction, cfg.split_seed)
}

/// Rank features by mean |SHAP| of a default-parameter GBDT fitted on
/// `train`, then keep the top `cfg.top_k_features`.
pub fn select_features(train: &Dataset, cfg: &PipelineConfig) -> Result<(FeatureRanking, Vec<String>)> {
    let params = ModelParams::Gbdt(GbdtParams {
        seed: cfg.model_seed,
        ..GbdtParams::default()
    });
    let model = fit(train, &params)?;
    let shap = tree_shap(&model, &train.features)?;
    let ranking = rank_features(&shap)?;
    let selected = select_top_k(&ranking, cfg.top_k_features);
    Ok((ranking, selected))
}

/// The dataset restricted to the named feature columns.
pub fn restrict(ds: &Dataset, features: &[String]) -> Result<Dataset> {
    Dataset::new(
        ds.features.select_columns(features)?,
        ds.target.clone(),
        ds.landcover.clone(),
        ds.ids.clone(),
    )
}

pub fn assign_folds(train: &Dataset, cfg: &PipelineConfig) -> Result<FoldAssignment> {
    stratified_kfold(&train.target, cfg.k_folds, cfg.fold_bins, cfg.fold_seed)
}

pub fn tune(train: &Dataset, cfg: &PipelineConfig, folds: &FoldAssignment, trainer: TrainerKind) -> Result<TuneOutcome> {
    tune_with(
        train,
        &cfg.search_space_for(trainer),
        &cfg.tuner_config(),
        &cfg.base_params(trainer),
        folds,
    )
}

/// Outcome of tuning as stored on disk: the complete parameter set of the
/// winning trial, not only the searched dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BestParams {
    pub trainer: TrainerKind,
    pub params: ParamMap,
    pub cv_rmse: f64,
    pub trial: usize,
}

impl BestParams {
    pub fn from_outcome(outcome: &TuneOutcome, cfg: &PipelineConfig, trainer: TrainerKind, n_cols: usize) -> Result<Self> {
        let params = cfg.base_params(trainer).with_overrides(&outcome.best_params, n_cols)?;
        Ok(Self {
            trainer,
            params: params.to_map(),
            cv_rmse: outcome.best().score,
            trial: outcome.best_index,
        })
    }

    pub fn model_params(&self, n_cols: usize) -> Result<ModelParams> {
        ModelParams::default_for(self.trainer).with_overrides(&self.params, n_cols)
    }
}

pub fn train(train: &Dataset, params: &ModelParams) -> Result<Ensemble> {
    fit(train, params)
}

/// Score a model on a dataset held in original units.
pub fn evaluate_model(model: &Ensemble, test: &Dataset) -> Result<EvalReport> {
    let pred = model.predict(&test.features)?;
    evaluate(&test.target, &pred, &test.landcover)
}

/// Method name used in result tables.
pub fn method_label(kind: TrainerKind) -> &'static str {
    match kind {
        TrainerKind::Gbdt => "GBDT",
        TrainerKind::ExtraTrees => "ExtraTrees",
    }
}
