//! Generate a synthetic soil table with a known signal and write it as CSV.
//!
//! `cargo run --release --example synth_data -- out.csv`

use soiln::data::{write_csv, CsvSchema};
use soiln::synth::{self, SynthSpec};

fn main() -> soiln::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synth.csv".into());
    let spec = SynthSpec {
        n_rows: 5000,
        seed: 7,
        ..SynthSpec::default()
    };
    let ds = synth::generate(&spec)?;
    println!("{} rows x {} features", ds.n_rows(), ds.features.n_cols());
    for (lc, n) in ds.class_counts() {
        println!("  {lc}: {n}");
    }
    println!("informative: {}", synth::informative_features(&spec).join(", "));
    // the best R² any model can reach on the log scale
    println!("R² ceiling: {:.4}", synth::oracle_r2_ceiling(&spec)?);

    write_csv(&ds, &CsvSchema::default(), std::fs::File::create(&out)?)?;
    println!("wrote {out}");
    Ok(())
}
