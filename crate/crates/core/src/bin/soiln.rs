use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use soiln::data::Landcover;
use soiln::params::TrainerKind;
use soiln::pipeline::{self, files, read_json, PipelineConfig};
use soiln::synth::SynthSpec;
use soiln::tuner::ParamSpace;
use soiln::Result;

#[derive(Parser)]
#[command(name = "soiln", version, about = "Landcover-stratified tree-ensemble regression pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with known informative features.
    Synth(SynthArgs),
    /// Landcover-stratified train/test split.
    Split(PipelineArgs),
    /// Rank features by mean |SHAP| and keep the top k.
    Select(PipelineArgs),
    /// Tune hyperparameters with TPE and stratified k-fold CV.
    Tune(PipelineArgs),
    /// Train the final model on the training split.
    Train(PipelineArgs),
    /// Score the model on the test split.
    Evaluate(PipelineArgs),
    /// Predict (original units) for every row of a CSV file.
    Predict(PredictArgs),
    /// Write observed and predicted values for plotting.
    ExportScatter(ScatterArgs),
    /// Run every stage end to end.
    Run(PipelineArgs),
    /// Both trainers under the three feature/parameter regimes.
    Compare(PipelineArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    informative: Option<usize>,
    #[arg(long)]
    noise_features: Option<usize>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    missing_rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Flags mirror the fields of the pipeline config; a `--config` JSON file
/// supplies the rest.
#[derive(Args, Clone)]
struct PipelineArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    workdir: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    target_column: Option<String>,
    #[arg(long)]
    landcover_column: Option<String>,
    #[arg(long)]
    id_column: Option<String>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    k_folds: Option<usize>,
    #[arg(long)]
    top_k_features: Option<usize>,
    #[arg(long)]
    fold_bins: Option<usize>,
    #[arg(long)]
    trainer: Option<TrainerKind>,
    #[arg(long)]
    n_trials: Option<usize>,
    #[arg(long)]
    n_startup: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n_candidates: Option<usize>,
    /// JSON file holding a search space.
    #[arg(long)]
    search_space: Option<PathBuf>,
    /// Sets every seed below at once.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    fold_seed: Option<u64>,
    #[arg(long)]
    tuner_seed: Option<u64>,
    #[arg(long)]
    model_seed: Option<u64>,
    #[arg(long)]
    landcover: Option<Landcover>,
}

impl PipelineArgs {
    fn config(self) -> Result<PipelineConfig> {
        let mut c: PipelineConfig = match &self.config {
            Some(p) => read_json(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            c = c.with_seed(seed);
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(dataset, workdir, target_column, landcover_column, test_fraction, k_folds, top_k_features, fold_bins);
        set!(trainer, n_trials, n_startup, gamma, n_candidates, split_seed, fold_seed, tuner_seed, model_seed);
        if self.model.is_some() {
            c.model = self.model;
        }
        if self.id_column.is_some() {
            c.id_column = self.id_column;
        }
        if self.landcover.is_some() {
            c.landcover = self.landcover;
        }
        if let Some(p) = &self.search_space {
            c.search_space = Some(read_json::<ParamSpace>(p)?);
        }
        Ok(c)
    }
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "id")]
    id_column: String,
}

#[derive(Args)]
struct ScatterArgs {
    #[arg(long)]
    out: PathBuf,
    /// Restrict to the test rows of this split file.
    #[arg(long)]
    split: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => {
            let d = SynthSpec::default();
            let spec = SynthSpec {
                n_rows: a.rows.unwrap_or(d.n_rows),
                n_informative: a.informative.unwrap_or(d.n_informative),
                n_noise: a.noise_features.unwrap_or(d.n_noise),
                noise_sd: a.noise_sd.unwrap_or(d.noise_sd),
                missing_rate: a.missing_rate.unwrap_or(d.missing_rate),
                seed: a.seed,
                ..d
            };
            let truth = pipeline::synth_command(&spec, &a.out)?;
            println!("{}", serde_json::to_string_pretty(&truth)?);
        }
        Command::Split(a) => {
            let s = files::split_command(&a.config()?)?;
            println!("train {} rows, test {} rows", s.train.len(), s.test.len());
        }
        Command::Select(a) => {
            let sel = files::select_command(&a.config()?)?;
            println!("selected {} features", sel.len());
        }
        Command::Tune(a) => {
            let (outcome, best) = files::tune_command(&a.config()?)?;
            println!("best trial {} of {}: cv rmse {}", best.trial, outcome.trials.len(), best.cv_rmse);
        }
        Command::Train(a) => {
            let m = files::train_command(&a.config()?)?;
            println!("trained {} trees on {} features", m.trees.len(), m.feature_names.len());
        }
        Command::Evaluate(a) => {
            let r = files::evaluate_command(&a.config()?)?;
            println!("{}", serde_json::to_string_pretty(&r)?);
        }
        Command::Predict(a) => {
            let p = pipeline::predict_to_csv(&a.model, &a.dataset, Some(&a.id_column), &a.out)?;
            println!("wrote {} predictions", p.len());
        }
        Command::ExportScatter(a) => {
            let cfg = a.pipeline.config()?;
            let split = match &a.split {
                Some(p) => Some(read_json(p)?),
                None => None,
            };
            let model = files::model_path(&cfg);
            let rows = pipeline::export_scatter(&model, &cfg.dataset, &cfg, split.as_ref(), &a.out)?;
            println!("wrote {} rows", rows.len());
        }
        Command::Run(a) => {
            let out = pipeline::run_pipeline(&a.config()?)?;
            println!("{}", serde_json::to_string_pretty(&out.report)?);
        }
        Command::Compare(a) => {
            let cfg = a.config()?;
            pipeline::run_compare(&cfg)?;
            print!("{}", std::fs::read_to_string(cfg.workdir.join(pipeline::COMPARE_FILE))?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
