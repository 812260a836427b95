//! Per-landcover errors in original units and the results-table layout.

use soiln::data::{Landcover, TargetVector};
use soiln::metrics::{evaluate, mae, rmse, write_table, TableRow};

fn main() -> soiln::Result<()> {
    // observed nitrogen (g/kg) and model output on the log scale
    let y = vec![1.2, 2.5, 0.8, 3.1, 1.9, 4.4];
    let z: Vec<f64> = [1.0, 2.9, 0.9, 2.6, 2.0, 4.0].iter().map(|v: &f64| (100.0 * v).ln()).collect();
    let labels = vec![
        Landcover::Cropland,
        Landcover::Cropland,
        Landcover::Cropland,
        Landcover::Grassland,
        Landcover::Grassland,
        Landcover::Grassland,
    ];
    let report = evaluate(&TargetVector::original(y)?, &z, &labels)?;
    println!("{}", serde_json::to_string_pretty(&report)?);

    println!("rmse >= mae: {} >= {}", rmse(&[0.0, 0.0], &[3.0, 4.0])?, mae(&[0.0, 0.0], &[3.0, 4.0])?);

    let row = TableRow {
        method: "GBDT".into(),
        report,
        features: "selected".into(),
        parameters: "optimized".into(),
    };
    write_table(&[row], std::io::stdout())?;
    Ok(())
}
