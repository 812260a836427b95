use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use super::Trial;
use crate::data::{Dataset, FoldAssignment};
use crate::error::{Error, Result};
use crate::metrics::rmse;
use crate::params::{ModelParams, ParamMap};
use crate::trees::{bin_features, train_extratrees, train_gbdt, BinnedTable};

/// Cross-validation over one fixed fold assignment. Bin edges are computed
/// once per `n_bins` over the whole dataset and shared by every fold and
/// trial; binning never looks at the target.
pub struct CrossValidator<'a> {
    ds: &'a Dataset,
    folds: &'a FoldAssignment,
    fingerprint: String,
    binned: Mutex<HashMap<usize, Arc<BinnedTable>>>,
}

impl<'a> CrossValidator<'a> {
    pub fn new(ds: &'a Dataset, folds: &'a FoldAssignment) -> Result<Self> {
        if folds.fold_of_row.len() != ds.n_rows() {
            return Err(Error::FoldMismatch(format!(
                "{} fold entries for {} rows",
                folds.fold_of_row.len(),
                ds.n_rows()
            )));
        }
        if folds.k < 2 {
            return Err(Error::InvalidK(folds.k));
        }
        if let Some(&f) = folds.fold_of_row.iter().find(|&&f| f >= folds.k) {
            return Err(Error::FoldMismatch(format!("fold id {f} outside 0..{}", folds.k)));
        }
        if let Some(f) = folds.fold_sizes().iter().position(|&s| s == 0) {
            return Err(Error::FoldMismatch(format!("fold {f} is empty")));
        }
        Ok(Self {
            ds,
            folds,
            fingerprint: folds.fingerprint(),
            binned: Mutex::new(HashMap::new()),
        })
    }

    pub fn folds_fingerprint(&self) -> &str {
        &self.fingerprint
    }

    fn binned(&self, n_bins: usize) -> Result<Arc<BinnedTable>> {
        let mut cache = self.binned.lock().expect("binning cache poisoned");
        if let Some(b) = cache.get(&n_bins) {
            return Ok(b.clone());
        }
        let b = Arc::new(bin_features(&self.ds.features, n_bins)?);
        cache.insert(n_bins, b.clone());
        Ok(b)
    }

    fn fold_rmse(&self, params: &ModelParams, binned: Option<&BinnedTable>, fold: usize) -> Result<f64> {
        let (train, held) = self.folds.fold_rows(fold);
        let model = match params {
            ModelParams::Gbdt(p) => {
                let b = binned.expect("binned table for gbdt").take_rows(&train);
                train_gbdt(&b, &self.ds.target.take(&train), p)?
            }
            ModelParams::ExtraTrees(p) => train_extratrees(&self.ds.subset(&train), p)?,
        };
        let pred: Vec<f64> = held
            .iter()
            .map(|&r| model.predict_row(self.ds.features.row(r)))
            .collect();
        let obs: Vec<f64> = held.iter().map(|&r| self.ds.target.values[r]).collect();
        rmse(&obs, &pred)
    }

    /// Train on k-1 folds, score RMSE on the held-out fold, for every fold.
    /// Folds run in parallel; scores are stored in fold order.
    pub fn evaluate(&self, params: &ModelParams, search_params: ParamMap, index: usize) -> Result<Trial> {
        let binned = match params {
            ModelParams::Gbdt(p) => {
                p.validate()?;
                Some(self.binned(p.n_bins)?)
            }
            ModelParams::ExtraTrees(p) => {
                p.validate(self.ds.features.n_cols())?;
                None
            }
        };
        let fold_scores = (0..self.folds.k)
            .into_par_iter()
            .map(|f| self.fold_rmse(params, binned.as_deref(), f))
            .collect::<Result<Vec<f64>>>()?;
        let score = fold_scores.iter().sum::<f64>() / fold_scores.len() as f64;
        let seed = match params {
            ModelParams::Gbdt(p) => p.seed,
            ModelParams::ExtraTrees(p) => p.seed,
        };
        Ok(Trial {
            params: search_params,
            score,
            fold_scores,
            index,
            seed,
            folds_fingerprint: self.fingerprint.clone(),
        })
    }
}

/// Mean held-out RMSE (transformed scale) over the folds of `folds`.
pub fn cross_validate(ds: &Dataset, params: &ModelParams, folds: &FoldAssignment) -> Result<Trial> {
    CrossValidator::new(ds, folds)?.evaluate(params, params.to_map(), 0)
}
