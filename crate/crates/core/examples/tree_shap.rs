//! Exact TreeSHAP attributions, the local-accuracy identity, and top-k
//! feature selection.

use soiln::params::{GbdtParams, ModelParams};
use soiln::shap::{rank_features, select_top_k, tree_shap};
use soiln::synth::{self, SynthSpec};
use soiln::trees;

fn main() -> soiln::Result<()> {
    let spec = SynthSpec { n_rows: 3000, seed: 2, ..SynthSpec::default() };
    let ds = synth::generate(&spec)?.with_transformed_target()?;
    let model = trees::fit(&ds, &ModelParams::Gbdt(GbdtParams::default()))?;

    let shap = tree_shap(&model, &ds.features)?;
    let pred = model.predict(&ds.features)?;
    let worst = (0..ds.n_rows())
        .map(|r| (shap.base_value + shap.row(r).iter().sum::<f64>() - pred[r]).abs())
        .fold(0.0, f64::max);
    println!("base value {:.4}, max |base + sum(phi) - prediction| = {worst:.1e}", shap.base_value);

    let ranking = rank_features(&shap)?;
    for e in ranking.entries.iter().take(12) {
        println!("  {:<14} {:.5}", e.name, e.importance);
    }
    let top = select_top_k(&ranking, 20);
    let found = synth::informative_features(&spec).iter().filter(|f| top.contains(f)).count();
    println!("{found}/{} informative features in the top 20", spec.n_informative);
    Ok(())
}
