//! Stages run one at a time over workdir files, so any step can be rerun
//! from the artifacts of the steps before it.

use std::path::{Path, PathBuf};

use super::stages::{self, BestParams};
use super::{
    read_json, settings_of, Manifest, PipelineConfig, Staging, BEST_PARAMS_FILE, FOLDS_FILE,
    MODEL_FILE, RANKING_FILE, REPORT_FILE, REPORT_TABLE_FILE, SELECTED_FILE, SPLIT_FILE, TRIALS_FILE,
};
use crate::data::{Dataset, SplitIndices};
use crate::error::{Error, Result, StageExt};
use crate::metrics::{write_table, EvalReport, TableRow};
use crate::persist;
use crate::trees::Ensemble;
use crate::tuner::{write_trials_csv, TuneOutcome};

/// Raw (original units) and transformed datasets plus the split, read
/// from `split.json` in the workdir.
struct Prepared {
    raw: Dataset,
    ds: Dataset,
    split: SplitIndices,
}

fn prepare(cfg: &PipelineConfig) -> Result<Prepared> {
    let raw = stages::load_dataset(cfg).stage("load")?;
    let ds = raw.with_transformed_target().stage("transform")?;
    let split: SplitIndices = read_json(&cfg.workdir.join(SPLIT_FILE)).stage("split")?;
    let n = split.train.len() + split.test.len();
    if n != ds.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "{SPLIT_FILE} covers {n} rows but the dataset has {}",
            ds.n_rows()
        )));
    }
    Ok(Prepared { raw, ds, split })
}

fn selected_features(workdir: &Path) -> Result<Option<Vec<String>>> {
    let path = workdir.join(SELECTED_FILE);
    if path.exists() {
        read_json(&path).map(Some)
    } else {
        Ok(None)
    }
}

fn training_set(p: &Prepared, workdir: &Path) -> Result<Dataset> {
    let train = p.ds.subset(&p.split.train);
    match selected_features(workdir)? {
        Some(sel) => stages::restrict(&train, &sel).stage("select"),
        None => Ok(train),
    }
}

pub fn split_command(cfg: &PipelineConfig) -> Result<SplitIndices> {
    cfg.validate()?;
    let mut staging = Staging::open(&cfg.workdir)?;
    let manifest = Manifest::new("split", settings_of(cfg)?).input("dataset", &cfg.dataset)?;
    let raw = stages::load_dataset(cfg).stage("load")?;
    let split = stages::split(&raw, cfg).stage("split")?;
    staging.write_json(SPLIT_FILE, &split)?;
    manifest.finish(&mut staging)?;
    staging.commit()?;
    Ok(split)
}

pub fn select_command(cfg: &PipelineConfig) -> Result<Vec<String>> {
    cfg.validate()?;
    let p = prepare(cfg)?;
    let mut staging = Staging::open(&cfg.workdir)?;
    let manifest = Manifest::new("select", settings_of(cfg)?)
        .input("dataset", &cfg.dataset)?
        .input("split", &cfg.workdir.join(SPLIT_FILE))?;
    let train = p.ds.subset(&p.split.train);
    let (ranking, selected) = stages::select_features(&train, cfg).stage("select")?;
    staging.write_with(RANKING_FILE, |b| ranking.write_csv(b))?;
    staging.write_json(SELECTED_FILE, &selected)?;
    manifest.finish(&mut staging)?;
    staging.commit()?;
    Ok(selected)
}

pub fn tune_command(cfg: &PipelineConfig) -> Result<(TuneOutcome, BestParams)> {
    cfg.validate()?;
    let p = prepare(cfg)?;
    let train = training_set(&p, &cfg.workdir)?;
    let mut staging = Staging::open(&cfg.workdir)?;
    let mut manifest = Manifest::new("tune", settings_of(cfg)?)
        .input("dataset", &cfg.dataset)?
        .input("split", &cfg.workdir.join(SPLIT_FILE))?;
    if cfg.workdir.join(SELECTED_FILE).exists() {
        manifest = manifest.input("selected", &cfg.workdir.join(SELECTED_FILE))?;
    }
    let folds = stages::assign_folds(&train, cfg).stage("folds")?;
    staging.write_json(FOLDS_FILE, &folds)?;
    let outcome = stages::tune(&train, cfg, &folds, cfg.trainer).stage("tune")?;
    staging.write_with(TRIALS_FILE, |b| write_trials_csv(&outcome.trials, b))?;
    let best = BestParams::from_outcome(&outcome, cfg, cfg.trainer, train.features.n_cols())?;
    staging.write_json(BEST_PARAMS_FILE, &best)?;
    manifest.finish(&mut staging)?;
    staging.commit()?;
    Ok((outcome, best))
}

pub fn train_command(cfg: &PipelineConfig) -> Result<Ensemble> {
    cfg.validate()?;
    let p = prepare(cfg)?;
    let train = training_set(&p, &cfg.workdir)?;
    let best_path = cfg.workdir.join(BEST_PARAMS_FILE);
    let mut staging = Staging::open(&cfg.workdir)?;
    let mut manifest = Manifest::new("train", settings_of(cfg)?)
        .input("dataset", &cfg.dataset)?
        .input("split", &cfg.workdir.join(SPLIT_FILE))?;
    let params = if best_path.exists() {
        manifest = manifest.input("best_params", &best_path)?;
        read_json::<BestParams>(&best_path)?.model_params(train.features.n_cols())?
    } else {
        cfg.base_params(cfg.trainer)
    };
    let model = stages::train(&train, &params).stage("train")?;
    let text = format!("{}\n", persist::to_json(&model)?);
    staging.write(MODEL_FILE, text.as_bytes())?;
    manifest.finish(&mut staging)?;
    staging.commit()?;
    if let Some(extra) = &cfg.model {
        std::fs::write(extra, text).map_err(|e| Error::Io(format!("{}: {e}", extra.display())))?;
    }
    Ok(model)
}

/// Model used by `evaluate`: `cfg.model` when set, else the workdir's.
pub fn model_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.model.clone().unwrap_or_else(|| cfg.workdir.join(MODEL_FILE))
}

pub fn evaluate_command(cfg: &PipelineConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let p = prepare(cfg)?;
    let path = model_path(cfg);
    let model = persist::load(&path).stage("load model")?;
    let mut staging = Staging::open(&cfg.workdir)?;
    let manifest = Manifest::new("evaluate", settings_of(cfg)?)
        .input("dataset", &cfg.dataset)?
        .input("split", &cfg.workdir.join(SPLIT_FILE))?
        .input("model", &path)?;
    let test = p.raw.subset(&p.split.test);
    let report = stages::evaluate_model(&model, &test).stage("evaluate")?;
    staging.write_json(REPORT_FILE, &report)?;
    let features = if model.feature_names.len() < p.raw.features.n_cols() {
        "selected"
    } else {
        "all"
    };
    let parameters = if cfg.workdir.join(BEST_PARAMS_FILE).exists() {
        "optimized"
    } else {
        "default"
    };
    let kind = model.mode.trainer_kind();
    let row = TableRow {
        method: stages::method_label(kind).into(),
        report: report.clone(),
        features: features.into(),
        parameters: parameters.into(),
    };
    staging.write_with(REPORT_TABLE_FILE, |b| write_table(&[row], b))?;
    manifest.finish(&mut staging)?;
    staging.commit()?;
    Ok(report)
}
