//! The whole workflow on a small synthetic table: split, SHAP selection,
//! TPE tuning, final fit and evaluation, with artifacts in a workdir.

use soiln::data::{write_csv, CsvSchema};
use soiln::pipeline::{self, PipelineConfig};
use soiln::synth::{self, SynthSpec};

fn main() -> soiln::Result<()> {
    let root = std::env::temp_dir().join("soiln-pipeline-example");
    let _ = std::fs::remove_dir_all(&root);
    std::fs::create_dir_all(&root)?;
    let data = root.join("synth.csv");
    let spec = SynthSpec { n_rows: 3000, seed: 9, ..SynthSpec::default() };
    write_csv(&synth::generate(&spec)?, &CsvSchema::default(), std::fs::File::create(&data)?)?;

    let cfg = PipelineConfig {
        dataset: data,
        workdir: root.join("work"),
        top_k_features: 20,
        n_trials: 8,
        n_startup: 4,
        ..PipelineConfig::default()
    }
    .with_seed(3);
    let out = pipeline::run_pipeline(&cfg)?;

    let informative = synth::informative_features(&spec);
    let kept = informative.iter().filter(|f| out.selected.contains(f)).count();
    println!("selected {} features ({kept}/{} informative)", out.selected.len(), informative.len());
    println!("best cv rmse {:.4} from trial {}", out.best.cv_rmse, out.best.trial);
    for (lc, m) in &out.report.per_class {
        println!("  {lc:<10} n={:<4} mae {:.3}  mape {:.2}%", m.n, m.mae, m.mape_percent);
    }
    println!("artifacts in {}:", cfg.workdir.display());
    for (name, sha) in &out.outputs {
        println!("  {name:<28} {}", &sha[..12]);
    }
    Ok(())
}
