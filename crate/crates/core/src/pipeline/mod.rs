//! The end-to-end workflow with on-disk artifacts: load, transform, split by
//! landcover, SHAP-based feature selection, stratified folds, tuning,
//! final training and evaluation.

mod config;
pub mod files;
pub mod stages;
mod workdir;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::PipelineConfig;
pub use stages::BestParams;
pub use workdir::{file_digest, read_json, Staging};

use crate::data::{inverse_transform_value, read_columns, Landcover, SplitIndices, TargetScale, TargetVector};
use crate::error::{Error, Result, StageExt};
use crate::metrics::{write_table, EvalReport, TableRow};
use crate::params::TrainerKind;
use crate::persist;
use crate::shap::FeatureRanking;
use crate::trees::Ensemble;
use crate::tuner::{write_trials_csv, TuneOutcome};

pub const SPLIT_FILE: &str = "split.json";
pub const RANKING_FILE: &str = "ranking.csv";
pub const SELECTED_FILE: &str = "selected_features.json";
pub const FOLDS_FILE: &str = "folds.json";
pub const TRIALS_FILE: &str = "trials.csv";
pub const BEST_PARAMS_FILE: &str = "best_params.json";
pub const MODEL_FILE: &str = "model.json";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_TABLE_FILE: &str = "report.csv";
pub const COMPARE_FILE: &str = "compare.csv";

/// Record of one command: what went in and the hash of everything that
/// came out. Contains no timestamps or absolute output locations, so equal
/// inputs give an equal manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub inputs: BTreeMap<String, InputFile>,
    pub settings: serde_json::Value,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

impl Manifest {
    pub fn new(command: &str, settings: serde_json::Value) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            inputs: BTreeMap::new(),
            settings,
            outputs: BTreeMap::new(),
        }
    }

    pub fn input(mut self, role: &str, path: &Path) -> Result<Self> {
        self.inputs.insert(
            role.into(),
            InputFile {
                path: path.display().to_string(),
                sha256: file_digest(path)?,
            },
        );
        Ok(self)
    }

    pub fn file_name(command: &str) -> String {
        format!("manifest-{command}.json")
    }

    /// Stage the manifest alongside the outputs already staged.
    pub fn finish(mut self, staging: &mut Staging) -> Result<()> {
        self.outputs = staging.outputs().clone();
        staging.write_json(&Self::file_name(&self.command), &self)?;
        Ok(())
    }
}

/// Config as recorded in manifests: output locations are left out.
fn settings_of(cfg: &PipelineConfig) -> Result<serde_json::Value> {
    let mut v = serde_json::to_value(cfg)?;
    if let Some(obj) = v.as_object_mut() {
        obj.remove("workdir");
        obj.remove("model");
    }
    Ok(v)
}

/// In-memory results of [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub split: SplitIndices,
    pub ranking: FeatureRanking,
    pub selected: Vec<String>,
    pub tuning: TuneOutcome,
    pub best: BestParams,
    pub model: Ensemble,
    pub report: EvalReport,
    /// Artifact name → SHA-256.
    pub outputs: BTreeMap<String, String>,
}

/// Run every stage and write the artifacts into `cfg.workdir`. Nothing is
/// written there unless all stages succeed.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutcome> {
    cfg.validate()?;
    let mut staging = Staging::open(&cfg.workdir)?;
    let manifest = Manifest::new("run", settings_of(cfg)?).input("dataset", &cfg.dataset)?;

    let raw = stages::load_dataset(cfg).stage("load")?;
    let ds = raw.with_transformed_target().stage("transform")?;
    let split = stages::split(&ds, cfg).stage("split")?;
    staging.write_json(SPLIT_FILE, &split)?;
    let train_all = ds.subset(&split.train);
    let test_raw = raw.subset(&split.test);

    let (ranking, selected) = stages::select_features(&train_all, cfg).stage("select")?;
    staging.write_with(RANKING_FILE, |b| ranking.write_csv(b))?;
    staging.write_json(SELECTED_FILE, &selected)?;
    let train = stages::restrict(&train_all, &selected).stage("select")?;

    let folds = stages::assign_folds(&train, cfg).stage("folds")?;
    staging.write_json(FOLDS_FILE, &folds)?;
    let tuning = stages::tune(&train, cfg, &folds, cfg.trainer).stage("tune")?;
    staging.write_with(TRIALS_FILE, |b| write_trials_csv(&tuning.trials, b))?;
    let n_cols = train.features.n_cols();
    let best = BestParams::from_outcome(&tuning, cfg, cfg.trainer, n_cols).stage("tune")?;
    staging.write_json(BEST_PARAMS_FILE, &best)?;

    let params = best.model_params(n_cols).stage("train")?;
    let model = stages::train(&train, &params).stage("train")?;
    let model_json = persist::to_json(&model)?;
    staging.write(MODEL_FILE, format!("{model_json}\n").as_bytes())?;

    let report = stages::evaluate_model(&model, &test_raw).stage("evaluate")?;
    staging.write_json(REPORT_FILE, &report)?;
    let row = TableRow {
        method: stages::method_label(cfg.trainer).into(),
        report: report.clone(),
        features: "selected".into(),
        parameters: "optimized".into(),
    };
    staging.write_with(REPORT_TABLE_FILE, |b| write_table(&[row], b))?;

    manifest.finish(&mut staging)?;
    let outputs = staging.commit()?;
    if let Some(extra) = &cfg.model {
        std::fs::write(extra, format!("{model_json}\n"))
            .map_err(|e| Error::Io(format!("{}: {e}", extra.display())))?;
    }
    Ok(PipelineOutcome {
        split,
        ranking,
        selected,
        tuning,
        best,
        model,
        report,
        outputs,
    })
}

/// Both trainers under three regimes (all features with default
/// parameters, selected features with default parameters, selected
/// features with tuned parameters), scored on the same test split.
/// Writes `compare.csv` into the workdir and returns its rows.
pub fn run_compare(cfg: &PipelineConfig) -> Result<Vec<TableRow>> {
    cfg.validate()?;
    let mut staging = Staging::open(&cfg.workdir)?;
    let manifest = Manifest::new("compare", settings_of(cfg)?).input("dataset", &cfg.dataset)?;

    let raw = stages::load_dataset(cfg).stage("load")?;
    let ds = raw.with_transformed_target().stage("transform")?;
    let split = stages::split(&ds, cfg).stage("split")?;
    let train_all = ds.subset(&split.train);
    let test_raw = raw.subset(&split.test);
    let (_, selected) = stages::select_features(&train_all, cfg).stage("select")?;
    let train_sel = stages::restrict(&train_all, &selected).stage("select")?;
    let folds = stages::assign_folds(&train_sel, cfg).stage("folds")?;

    let trainers = [TrainerKind::Gbdt, TrainerKind::ExtraTrees];
    let mut rows = Vec::new();
    for (features, parameters) in [("all", "default"), ("selected", "default"), ("selected", "optimized")] {
        for trainer in trainers {
            log::info!("compare: {trainer} with {features} features, {parameters} parameters");
            let train = if features == "all" { &train_all } else { &train_sel };
            let n_cols = train.features.n_cols();
            let params = if parameters == "default" {
                cfg.base_params(trainer)
            } else {
                let outcome = stages::tune(train, cfg, &folds, trainer).stage("tune")?;
                BestParams::from_outcome(&outcome, cfg, trainer, n_cols)?.model_params(n_cols)?
            };
            let model = stages::train(train, &params).stage("train")?;
            let report = stages::evaluate_model(&model, &test_raw).stage("evaluate")?;
            rows.push(TableRow {
                method: stages::method_label(trainer).into(),
                report,
                features: features.into(),
                parameters: parameters.into(),
            });
        }
    }
    staging.write_with(COMPARE_FILE, |b| write_table(&rows, b))?;
    manifest.finish(&mut staging)?;
    staging.commit()?;
    Ok(rows)
}

fn schema_error(e: Error) -> Error {
    match e {
        Error::MissingColumn(c) | Error::MissingFeature(c) => {
            Error::SchemaMismatch(format!("dataset has no column `{c}` required by the model"))
        }
        other => other,
    }
}

fn model_units(model: &Ensemble, z: f64) -> f64 {
    match model.target_scale {
        TargetScale::TransformedLog => inverse_transform_value(z),
        TargetScale::Original => z,
    }
}

/// Predictions in original units for the rows of a CSV file. Columns are
/// matched to the model by name; other columns are ignored.
pub fn predict_file(model: &Ensemble, dataset: &Path, id_column: Option<&str>) -> Result<(Vec<String>, Vec<f64>)> {
    let file = std::fs::File::open(dataset).map_err(|e| Error::Io(format!("{}: {e}", dataset.display())))?;
    let text_cols: Vec<&str> = id_column.into_iter().collect();
    let (ft, text) = read_columns(file, &model.feature_names, &text_cols).map_err(schema_error)?;
    let pred: Vec<f64> = model.predict(&ft).map_err(schema_error)?.into_iter().map(|z| model_units(model, z)).collect();
    let ids = id_column
        .and_then(|c| text.get(c).cloned())
        .unwrap_or_else(|| (0..ft.n_rows()).map(|r| r.to_string()).collect());
    Ok((ids, pred))
}

/// Write `id,predicted` for every row of `dataset` to `out`.
pub fn predict_to_csv(model_path: &Path, dataset: &Path, id_column: Option<&str>, out: &Path) -> Result<Vec<f64>> {
    let model = persist::load(model_path).stage("load model")?;
    let (ids, pred) = predict_file(&model, dataset, id_column).stage("predict")?;
    let mut staging = Staging::open(parent_dir(out))?;
    let name = file_name(out)?;
    let manifest = Manifest::new("predict", serde_json::json!({ "id_column": id_column }))
        .input("model", model_path)?
        .input("dataset", dataset)?;
    staging.write_with(&name, |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["id", "predicted"])?;
        for (id, p) in ids.iter().zip(&pred) {
            w.write_record([id.as_str(), &p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    manifest.finish(&mut staging)?;
    staging.commit()?;
    Ok(pred)
}

/// One row per sample: id, landcover, observed and predicted values in
/// original units.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterRow {
    pub id: String,
    pub landcover: Landcover,
    pub observed: f64,
    pub predicted: f64,
}

pub fn scatter_rows(model: &Ensemble, dataset: &Path, cfg: &PipelineConfig) -> Result<Vec<ScatterRow>> {
    let file = std::fs::File::open(dataset).map_err(|e| Error::Io(format!("{}: {e}", dataset.display())))?;
    let mut numeric = model.feature_names.clone();
    numeric.push(cfg.target_column.clone());
    let mut text_cols = vec![cfg.landcover_column.as_str()];
    if let Some(id) = &cfg.id_column {
        text_cols.push(id);
    }
    let (ft, text) = read_columns(file, &numeric, &text_cols).map_err(schema_error)?;
    let lc_text = text
        .get(&cfg.landcover_column)
        .ok_or_else(|| Error::SchemaMismatch(format!("dataset has no column `{}`", cfg.landcover_column)))?;
    let target_col = numeric.len() - 1;
    let observed: Vec<f64> = (0..ft.n_rows())
        .map(|r| ft.get(r, target_col).ok_or(Error::NonPositiveTarget(r)))
        .collect::<Result<_>>()?;
    let observed = TargetVector::original(observed)?.values;
    let pred = model.predict(&ft).map_err(schema_error)?;
    let ids = cfg.id_column.as_ref().and_then(|c| text.get(c));
    (0..ft.n_rows())
        .map(|r| {
            Ok(ScatterRow {
                id: ids.map_or_else(|| r.to_string(), |v| v[r].clone()),
                landcover: lc_text[r].parse().map_err(|_| Error::ParseError {
                    row: r,
                    col: cfg.landcover_column.clone(),
                    token: lc_text[r].clone(),
                })?,
                observed: observed[r],
                predicted: model_units(model, pred[r]),
            })
        })
        .collect()
}

/// Write observed-versus-predicted data for plotting. With a split, only
/// its test rows are written; row indices refer to the dataset after the
/// config's landcover filter.
pub fn export_scatter(
    model_path: &Path,
    dataset: &Path,
    cfg: &PipelineConfig,
    split: Option<&SplitIndices>,
    out: &Path,
) -> Result<Vec<ScatterRow>> {
    let model = persist::load(model_path).stage("load model")?;
    let mut rows = scatter_rows(&model, dataset, cfg).stage("export-scatter")?;
    if let Some(lc) = &cfg.landcover {
        rows.retain(|r| &r.landcover == lc);
    }
    if let Some(split) = split {
        let n = split.train.len() + split.test.len();
        if n != rows.len() {
            return Err(Error::DimensionMismatch(format!("split covers {n} rows, dataset has {}", rows.len())));
        }
        rows = split.test.iter().map(|&i| rows[i].clone()).collect();
    }
    let mut staging = Staging::open(parent_dir(out))?;
    let name = file_name(out)?;
    let manifest = Manifest::new("export-scatter", settings_of(cfg)?)
        .input("model", model_path)?
        .input("dataset", dataset)?;
    staging.write_with(&name, |b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["id", "landcover", "observed", "predicted"])?;
        for r in &rows {
            w.write_record([r.id.clone(), r.landcover.to_string(), r.observed.to_string(), r.predicted.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;
    manifest.finish(&mut staging)?;
    staging.commit()?;
    Ok(rows)
}

pub(crate) fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

pub(crate) fn file_name(path: &Path) -> Result<String> {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .ok_or_else(|| Error::Io(format!("{} is not a file path", path.display())))
}

/// Ground truth stored next to a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub informative_features: Vec<String>,
    pub noise_sd: f64,
    pub r2_ceiling: f64,
    pub seed: u64,
    pub n_rows: usize,
}

/// Generate a synthetic dataset as CSV at `out`, with its ground truth in
/// `<stem>.truth.json` beside it.
pub fn synth_command(spec: &crate::synth::SynthSpec, out: &Path) -> Result<SynthTruth> {
    use crate::synth;
    let ds = synth::generate(spec).stage("synth")?;
    let truth = SynthTruth {
        informative_features: synth::informative_features(spec),
        noise_sd: spec.noise_sd,
        r2_ceiling: synth::oracle_r2_ceiling(spec)?,
        seed: spec.seed,
        n_rows: spec.n_rows,
    };
    let name = file_name(out)?;
    let stem = out.file_stem().map_or_else(|| name.clone(), |s| s.to_string_lossy().into_owned());
    let mut staging = Staging::open(parent_dir(out))?;
    let settings = serde_json::json!({
        "n_rows": spec.n_rows,
        "n_informative": spec.n_informative,
        "n_noise": spec.n_noise,
        "noise_sd": spec.noise_sd,
        "class_mix": spec.class_mix,
        "missing_rate": spec.missing_rate,
        "seed": spec.seed,
    });
    staging.write_with(&name, |b| crate::data::write_csv(&ds, &crate::data::CsvSchema::default(), b))?;
    staging.write_json(&format!("{stem}.truth.json"), &truth)?;
    Manifest::new("synth", settings).finish(&mut staging)?;
    staging.commit()?;
    Ok(truth)
}
