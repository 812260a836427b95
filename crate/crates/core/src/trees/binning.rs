use crate::data::FeatureTable;
use crate::error::{Error, Result};

/// Code reserved for missing cells.
pub const MISSING_CODE: u16 = u16::MAX;

/// Quantized feature table. A value `x` gets code `#{edges e : e <= x}`,
/// so code `b` covers the half-open interval `[edges[b-1], edges[b])` and
/// "code <= b" is the same predicate as "x < edges[b]".
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedTable {
    codes: Vec<u16>,
    bin_edges: Vec<Vec<f64>>,
    names: Vec<String>,
    n_rows: usize,
    n_cols: usize,
    n_bins: usize,
}

impl BinnedTable {
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn missing_code(&self) -> u16 {
        MISSING_CODE
    }

    pub fn edges(&self, feature: usize) -> &[f64] {
        &self.bin_edges[feature]
    }

    /// Bins actually used by a feature (edges + 1).
    pub fn feature_bins(&self, feature: usize) -> usize {
        self.bin_edges[feature].len() + 1
    }

    #[inline]
    pub fn code(&self, row: usize, feature: usize) -> u16 {
        self.codes[row * self.n_cols + feature]
    }

    #[inline]
    pub fn row_codes(&self, row: usize) -> &[u16] {
        &self.codes[row * self.n_cols..(row + 1) * self.n_cols]
    }

    /// Value range `[lo, hi)` represented by a code (`None` for missing).
    pub fn decode(&self, feature: usize, code: u16) -> Option<(f64, f64)> {
        if code == MISSING_CODE {
            return None;
        }
        let edges = &self.bin_edges[feature];
        let b = code as usize;
        let lo = if b == 0 { f64::NEG_INFINITY } else { edges[b - 1] };
        let hi = if b == edges.len() { f64::INFINITY } else { edges[b] };
        Some((lo, hi))
    }

    pub fn take_rows(&self, rows: &[usize]) -> BinnedTable {
        let mut codes = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            codes.extend_from_slice(self.row_codes(r));
        }
        BinnedTable {
            codes,
            bin_edges: self.bin_edges.clone(),
            names: self.names.clone(),
            n_rows: rows.len(),
            n_cols: self.n_cols,
            n_bins: self.n_bins,
        }
    }
}

/// Quantile edges for one feature's non-missing values. When the column
/// has at most `n_bins` distinct values the edges are the midpoints between
/// consecutive distinct values; otherwise they are the interpolated
/// `i / n_bins` quantiles, deduplicated.
pub fn quantile_edges(values: &mut [f64], n_bins: usize) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.dedup();
    if distinct.len() <= 1 {
        return Vec::new();
    }
    let mut edges = Vec::with_capacity(n_bins);
    if distinct.len() <= n_bins {
        for w in distinct.windows(2) {
            edges.push(w[0] + (w[1] - w[0]) / 2.0);
        }
        return edges;
    }
    let n = values.len();
    let lo = distinct[0];
    for i in 1..n_bins {
        let pos = (n - 1) as f64 * i as f64 / n_bins as f64;
        let k = pos.floor() as usize;
        let frac = pos - k as f64;
        let q = if k + 1 < n {
            values[k] + (values[k + 1] - values[k]) * frac
        } else {
            values[n - 1]
        };
        // An edge at the minimum would leave bin 0 empty.
        if q > lo && edges.last().is_none_or(|&e| q > e) {
            edges.push(q);
        }
    }
    edges
}

/// Quantize every column into at most `n_bins` quantile bins.
pub fn bin_features(ft: &FeatureTable, n_bins: usize) -> Result<BinnedTable> {
    if !(2..=256).contains(&n_bins) {
        return Err(Error::InvalidParams(format!(
            "n_bins must lie in 2..=256, got {n_bins}"
        )));
    }
    let (n_rows, n_cols) = (ft.n_rows(), ft.n_cols());
    let mut bin_edges = Vec::with_capacity(n_cols);
    for c in 0..n_cols {
        let mut vals: Vec<f64> = ft.column(c).flatten().collect();
        if vals.is_empty() && n_rows > 0 {
            log::warn!("feature `{}` is entirely missing and cannot be split", ft.names()[c]);
        }
        bin_edges.push(quantile_edges(&mut vals, n_bins));
    }
    let mut codes = Vec::with_capacity(n_rows * n_cols);
    for r in 0..n_rows {
        for (c, &x) in ft.row(r).iter().enumerate() {
            codes.push(if x.is_nan() {
                MISSING_CODE
            } else {
                bin_edges[c].partition_point(|&e| e <= x) as u16
            });
        }
    }
    Ok(BinnedTable {
        codes,
        bin_edges,
        names: ft.names().to_vec(),
        n_rows,
        n_cols,
        n_bins,
    })
}
