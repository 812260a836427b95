//! Tree-ensemble regressors: a histogram GBDT trainer, an ExtraTrees
//! trainer, and the shared [`Ensemble`] representation both produce.

pub mod binning;
pub mod ensemble;
pub mod extratrees;
pub mod gbdt;
pub mod hist;

pub use binning::{bin_features, BinnedTable, MISSING_CODE};
pub use ensemble::{Ensemble, EnsembleMode, RegressionTree, TrainingMeta, TreeNode};
pub use extratrees::train_extratrees;
pub use gbdt::train_gbdt;

use crate::data::Dataset;
use crate::error::Result;
use crate::params::ModelParams;

/// Train either model family on a dataset (binning first for GBDT).
pub fn fit(ds: &Dataset, params: &ModelParams) -> Result<Ensemble> {
    match params {
        ModelParams::Gbdt(p) => {
            p.validate()?;
            let binned = bin_features(&ds.features, p.n_bins)?;
            train_gbdt(&binned, &ds.target, p)
        }
        ModelParams::ExtraTrees(p) => train_extratrees(ds, p),
    }
}
