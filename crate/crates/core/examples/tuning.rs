//! TPE against random search over the same budget and folds.

use soiln::data::stratified_kfold;
use soiln::params::{GbdtParams, ModelParams};
use soiln::synth::{self, SynthSpec};
use soiln::tuner::{running_best, tune_with, Dimension, ParamSpace, TunerConfig};

fn main() -> soiln::Result<()> {
    let spec = SynthSpec { n_rows: 600, n_noise: 10, seed: 4, ..SynthSpec::default() };
    let ds = synth::generate(&spec)?.with_transformed_target()?;
    let folds = stratified_kfold(&ds.target, 5, 10, 0)?;
    let space = ParamSpace::new(vec![
        Dimension::log("learning_rate", 0.01, 0.5),
        Dimension::integer("n_trees", 20, 200),
        Dimension::integer("max_depth", 2, 6),
        Dimension::log("l2_lambda", 0.1, 30.0),
    ])?;
    let base = ModelParams::Gbdt(GbdtParams::default());
    let cfg = TunerConfig { n_trials: 25, n_startup: 8, seed: 11, ..TunerConfig::default() };

    for (name, cfg) in [("tpe", cfg.clone()), ("random", cfg.random_search())] {
        let out = tune_with(&ds, &space, &cfg, &base, &folds)?;
        let curve: Vec<String> = running_best(&out.trials).iter().step_by(4).map(|s| format!("{s:.4}")).collect();
        println!("{name:>6}: best cv rmse {:.4} at trial {}", out.best().score, out.best_index);
        println!("        running best {}", curve.join(" "));
        println!("        params {:?}", out.best_params);
    }
    Ok(())
}
