//! Fit the histogram GBDT on a landcover-stratified split and score it.

use soiln::data::stratified_split;
use soiln::metrics::{evaluate, r2};
use soiln::params::{GbdtParams, ModelParams};
use soiln::synth::{self, SynthSpec};
use soiln::trees;

fn main() -> soiln::Result<()> {
    let raw = synth::generate(&SynthSpec { n_rows: 6000, seed: 1, ..SynthSpec::default() })?;
    let ds = raw.with_transformed_target()?;
    let split = stratified_split(&ds, 0.15, 0)?;
    let (train, test) = (ds.subset(&split.train), ds.subset(&split.test));

    let params = GbdtParams {
        n_trees: 300,
        learning_rate: 0.05,
        max_depth: 5,
        subsample_rows: 0.8,
        ..GbdtParams::default()
    };
    let model = trees::fit(&train, &ModelParams::Gbdt(params))?;
    let z = model.predict(&test.features)?;
    println!("{} trees, test R² (log scale) {:.4}", model.trees.len(), r2(&test.target.values, &z)?);

    let report = evaluate(&raw.target.take(&split.test), &z, &test.landcover)?;
    println!(
        "original units: rmse {:.3}  mae {:.3}  mape {:.2}%",
        report.overall.rmse, report.overall.mae, report.overall.mape_percent
    );
    Ok(())
}
