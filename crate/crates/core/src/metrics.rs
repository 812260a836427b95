//! Regression metrics and per-landcover evaluation reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{inverse_transform_value, Landcover, TargetScale, TargetVector};
use crate::error::{Error, Result};

fn check(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::LengthMismatch(y.len(), yhat.len()));
    }
    if y.is_empty() {
        return Err(Error::Empty);
    }
    Ok(())
}

pub fn rmse(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / y.len() as f64).sqrt())
}

pub fn mae(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    let sae: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b).abs()).sum();
    Ok(sae / y.len() as f64)
}

/// Mean absolute percentage error, in percent.
pub fn mape(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    let mut sum = 0.0;
    for (i, (a, b)) in y.iter().zip(yhat).enumerate() {
        if *a <= 0.0 {
            return Err(Error::ZeroTarget(i));
        }
        sum += (a - b).abs() / a.abs();
    }
    Ok(100.0 * sum / y.len() as f64)
}

pub fn r2(y: &[f64], yhat: &[f64]) -> Result<f64> {
    check(y, yhat)?;
    if y.len() < 2 {
        return Err(Error::ZeroVariance);
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
    if sst <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let sse: f64 = y.iter().zip(yhat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(1.0 - sse / sst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub rmse: f64,
    pub mae: f64,
    pub mape_percent: f64,
    /// Absent when fewer than two rows or zero variance.
    pub r2: Option<f64>,
    pub n: usize,
}

impl MetricSet {
    pub fn compute(y: &[f64], yhat: &[f64]) -> Result<Self> {
        Ok(Self {
            rmse: rmse(y, yhat)?,
            mae: mae(y, yhat)?,
            mape_percent: mape(y, yhat)?,
            r2: match r2(y, yhat) {
                Ok(v) => Some(v),
                Err(Error::ZeroVariance) => None,
                Err(e) => return Err(e),
            },
            n: y.len(),
        })
    }
}

/// Errors in original target units, overall and per landcover class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: MetricSet,
    pub per_class: BTreeMap<Landcover, MetricSet>,
    pub n_total: usize,
    pub scale: TargetScale,
}

/// Inverse-transform `y_pred_transformed` and score it against the
/// original-scale truth.
pub fn evaluate(
    y_true: &TargetVector,
    y_pred_transformed: &[f64],
    labels: &[Landcover],
) -> Result<EvalReport> {
    if y_true.scale != TargetScale::Original {
        return Err(Error::AlreadyTransformed);
    }
    let n = y_true.len();
    if y_pred_transformed.len() != n {
        return Err(Error::LengthMismatch(n, y_pred_transformed.len()));
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!("{} labels for {n} rows", labels.len())));
    }
    let pred: Vec<f64> = y_pred_transformed.iter().map(|&z| inverse_transform_value(z)).collect();
    let overall = MetricSet::compute(&y_true.values, &pred)?;

    let mut groups: BTreeMap<Landcover, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((y, p), lc) in y_true.values.iter().zip(&pred).zip(labels) {
        let g = groups.entry(lc.clone()).or_default();
        g.0.push(*y);
        g.1.push(*p);
    }
    let per_class = groups
        .into_iter()
        .map(|(lc, (y, p))| MetricSet::compute(&y, &p).map(|m| (lc, m)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let report = EvalReport {
        overall,
        per_class,
        n_total: n,
        scale: TargetScale::Original,
    };
    debug_assert_eq!(report.per_class.values().map(|m| m.n).sum::<usize>(), report.n_total);
    debug_assert!(report.overall.rmse >= report.overall.mae * (1.0 - 1e-12));
    Ok(report)
}

impl EvalReport {
    /// Fields of a results-table row:
    /// `mape_total, mape_crop, mape_grass, mae_total, mae_crop, mae_grass`.
    /// Classes absent from the report render as empty strings.
    pub fn table_fields(&self) -> [String; 6] {
        let class = |lc: &Landcover, f: fn(&MetricSet) -> f64| {
            self.per_class.get(lc).map(|m| fmt_metric(f(m))).unwrap_or_default()
        };
        [
            fmt_metric(self.overall.mape_percent),
            class(&Landcover::Cropland, |m| m.mape_percent),
            class(&Landcover::Grassland, |m| m.mape_percent),
            fmt_metric(self.overall.mae),
            class(&Landcover::Cropland, |m| m.mae),
            class(&Landcover::Grassland, |m| m.mae),
        ]
    }
}

/// Column header of a results-table CSV.
pub const TABLE_HEADER: [&str; 9] = [
    "method",
    "mape_total",
    "mape_crop",
    "mape_grass",
    "mae_total",
    "mae_crop",
    "mae_grass",
    "features",
    "parameters",
];

/// One results-table row.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub method: String,
    pub report: EvalReport,
    pub features: String,
    pub parameters: String,
}

pub fn write_table<W: std::io::Write>(rows: &[TableRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TABLE_HEADER)?;
    for row in rows {
        let f = row.report.table_fields();
        let mut rec = vec![row.method.clone()];
        rec.extend(f);
        rec.push(row.features.clone());
        rec.push(row.parameters.clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn fmt_metric(v: f64) -> String {
    format!("{v:.3}")
}
