//! Soil-nitrogen style tabular regression toolkit.
//!
//! The pieces compose into one workflow: load a [`data::Dataset`],
//! log-transform the target, split by landcover, fit a GBDT
//! ([`trees`]), rank features with exact TreeSHAP ([`shap`]), tune on the
//! selected features with TPE and stratified k-fold CV ([`tuner`]), then
//! retrain and report per-class errors in original units ([`metrics`]).
//! [`pipeline`] wires the stages together with file artifacts and
//! [`synth`] produces datasets with a known signal for checking all of it.

pub mod data;
pub mod error;
pub mod metrics;
pub mod params;
pub mod persist;
pub mod pipeline;
pub mod shap;
pub mod synth;
pub mod trees;
pub mod tuner;

pub use error::{Error, Result};
