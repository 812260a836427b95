//! Hyperparameter tuning: TPE suggestions scored by stratified k-fold
//! cross-validated RMSE on the transformed target.

mod cv;
pub mod space;
mod tpe;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use cv::{cross_validate, CrossValidator};
pub use space::{Dimension, ParamSpace};
pub use tpe::suggest;

use crate::data::{stratified_kfold, Dataset, FoldAssignment, DEFAULT_FOLD_BINS};
use crate::error::{Error, Result};
use crate::params::{GbdtParams, ModelParams, ParamMap};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TunerConfig {
    pub n_trials: usize,
    /// Uniform warmup trials before the TPE model kicks in.
    pub n_startup: usize,
    pub gamma: f64,
    pub n_candidates: usize,
    pub k_folds: usize,
    pub seed: u64,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            n_trials: 50,
            n_startup: 10,
            gamma: 0.25,
            n_candidates: 24,
            k_folds: 5,
            seed: 0,
        }
    }
}

impl TunerConfig {
    /// Settings for plain seeded random search over the same budget.
    pub fn random_search(&self) -> Self {
        Self {
            n_startup: self.n_trials,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.into()));
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1");
        }
        if self.n_startup == 0 || self.n_startup > self.n_trials {
            return bad("n_startup must be in 1..=n_trials");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if self.n_candidates == 0 {
            return bad("n_candidates must be at least 1");
        }
        if self.k_folds < 2 {
            return Err(Error::InvalidK(self.k_folds));
        }
        Ok(())
    }
}

/// One evaluated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub params: ParamMap,
    /// Mean of `fold_scores`.
    pub score: f64,
    pub fold_scores: Vec<f64>,
    pub index: usize,
    pub seed: u64,
    pub folds_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    pub best_params: ParamMap,
    pub best_index: usize,
    pub trials: Vec<Trial>,
    pub folds: FoldAssignment,
}

impl TuneOutcome {
    pub fn best(&self) -> &Trial {
        &self.trials[self.best_index]
    }
}

/// Tune GBDT parameters with default values for anything outside `space`.
pub fn tune(ds: &Dataset, space: &ParamSpace, cfg: &TunerConfig) -> Result<TuneOutcome> {
    let folds = stratified_kfold(&ds.target, cfg.k_folds, DEFAULT_FOLD_BINS, cfg.seed)?;
    tune_with(ds, space, cfg, &ModelParams::Gbdt(GbdtParams::default()), &folds)
}

/// Run `cfg.n_trials` rounds of suggest + cross-validate. Suggested values
/// override `base`; every trial is scored on the same `folds`.
pub fn tune_with(
    ds: &Dataset,
    space: &ParamSpace,
    cfg: &TunerConfig,
    base: &ModelParams,
    folds: &FoldAssignment,
) -> Result<TuneOutcome> {
    cfg.validate()?;
    space.validate()?;
    let cv = CrossValidator::new(ds, folds)?;
    let n_cols = ds.features.n_cols();
    let mut trials: Vec<Trial> = Vec::with_capacity(cfg.n_trials);
    let mut best_index = 0;
    for index in 0..cfg.n_trials {
        let proposal = suggest(&trials, space, cfg)?;
        let params = base.with_overrides(&proposal, n_cols)?;
        let trial = cv.evaluate(&params, proposal, index)?;
        log::info!("trial {index}: cv rmse {:.6}", trial.score);
        if trial.score < trials.get(best_index).map_or(f64::INFINITY, |t| t.score) {
            best_index = index;
        }
        trials.push(trial);
    }
    Ok(TuneOutcome {
        best_params: trials[best_index].params.clone(),
        best_index,
        trials,
        folds: folds.clone(),
    })
}

/// Best score seen after each trial.
pub fn running_best(trials: &[Trial]) -> Vec<f64> {
    trials
        .iter()
        .scan(f64::INFINITY, |best, t| {
            *best = best.min(t.score);
            Some(*best)
        })
        .collect()
}

/// Trial history as CSV: index, one column per parameter, fold scores,
/// mean score.
pub fn write_trials_csv<W: std::io::Write>(trials: &[Trial], out: W) -> Result<()> {
    let names: BTreeSet<&str> = trials.iter().flat_map(|t| t.params.keys().map(String::as_str)).collect();
    let k = trials.iter().map(|t| t.fold_scores.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["index".to_string()];
    header.extend(names.iter().map(|s| s.to_string()));
    header.extend((0..k).map(|f| format!("fold_{f}")));
    header.push("score".into());
    w.write_record(&header)?;
    for t in trials {
        let mut rec = vec![t.index.to_string()];
        rec.extend(names.iter().map(|n| t.params.get(*n).map(|v| v.to_string()).unwrap_or_default()));
        rec.extend((0..k).map(|f| t.fold_scores.get(f).map(|s| s.to_string()).unwrap_or_default()));
        rec.push(t.score.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
