//! ExtraTrees next to GBDT on the same split.

use soiln::data::stratified_split;
use soiln::metrics::r2;
use soiln::params::{ExtraTreesParams, GbdtParams, ModelParams};
use soiln::synth::{self, SynthSpec};
use soiln::trees;

fn main() -> soiln::Result<()> {
    let spec = SynthSpec { n_rows: 4000, n_noise: 20, seed: 3, ..SynthSpec::default() };
    let ds = synth::generate(&spec)?.with_transformed_target()?;
    let split = stratified_split(&ds, 0.15, 0)?;
    let (train, test) = (ds.subset(&split.train), ds.subset(&split.test));

    let candidates = [
        ("gbdt", ModelParams::Gbdt(GbdtParams::default())),
        (
            "extratrees",
            ModelParams::ExtraTrees(ExtraTreesParams {
                n_trees: 60,
                min_samples_leaf: 3,
                n_candidate_features: 10,
                ..ExtraTreesParams::default()
            }),
        ),
    ];
    for (name, params) in candidates {
        let t = std::time::Instant::now();
        let model = trees::fit(&train, &params)?;
        let z = model.predict(&test.features)?;
        let depth = model.trees.iter().map(|t| t.max_depth_reached).max().unwrap_or(0);
        println!(
            "{name:>10}: R² {:.4}, deepest tree {depth}, {:.1}s",
            r2(&test.target.values, &z)?,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
