//! Save a model, reload it, and confirm predictions match bit for bit.

use soiln::params::{GbdtParams, ModelParams};
use soiln::persist;
use soiln::synth::{self, SynthSpec};
use soiln::trees;

fn main() -> soiln::Result<()> {
    let spec = SynthSpec { n_rows: 1000, n_noise: 4, seed: 5, ..SynthSpec::default() };
    let ds = synth::generate(&spec)?.with_transformed_target()?;
    let model = trees::fit(&ds, &ModelParams::Gbdt(GbdtParams { n_trees: 3, max_depth: 2, ..GbdtParams::default() }))?;

    let dir = std::env::temp_dir().join("soiln-model-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.json");
    persist::save(&model, &path)?;
    let back = persist::load(&path)?;

    let a = model.predict(&ds.features)?;
    let b = back.predict(&ds.features)?;
    let same = a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits());
    println!("{} predictions identical after reload: {same}", a.len());

    let text = std::fs::read_to_string(&path)?;
    let doc: serde_json::Value = serde_json::from_str(&text)?;
    println!("{} ({} bytes)", path.display(), text.len());
    println!("root of tree 0: {}", doc["trees"][0]["nodes"][0]);
    println!("a leaf:         {}", doc["trees"][0]["nodes"][3]);
    println!("training_meta:  {}", serde_json::to_string_pretty(&doc["training_meta"])?);

    // any damage is refused rather than repaired
    let damaged = text.replacen("\"format_version\": 1", "\"format_version\": 9", 1);
    println!("version 9: {:?}", persist::from_json(&damaged).unwrap_err());
    Ok(())
}
