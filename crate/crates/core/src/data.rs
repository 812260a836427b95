//! Tabular datasets, the log target transform, and the two stratified
//! splitting procedures (landcover-stratified train/test and
//! target-quantile-stratified k-fold).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Multiplier applied to original-scale targets before taking the log.
pub const TARGET_SCALE_FACTOR: f64 = 100.0;

/// Default number of target-quantile bins used to stratify CV folds.
pub const DEFAULT_FOLD_BINS: usize = 10;

const MISSING_TOKENS: [&str; 3] = ["", "NA", "NaN"];

/// Dense row-major feature matrix with an explicit missing-value mask.
///
/// Missing cells hold `NaN` in `values` so that row slices can be walked
/// without consulting the mask; the mask remains the source of truth.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    values: Vec<f64>,
    missing: Vec<bool>,
    names: Vec<String>,
    n_rows: usize,
    n_cols: usize,
}

impl PartialEq for FeatureTable {
    /// Cell-wise equality where two missing cells compare equal.
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names
            && self.n_rows == other.n_rows
            && self.missing == other.missing
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.missing)
                .all(|((a, b), &m)| m || a == b)
    }
}

impl FeatureTable {
    /// Build from row-major cells, `None` marking a missing value.
    pub fn new(names: Vec<String>, cells: Vec<Option<f64>>) -> Result<Self> {
        let n_cols = names.len();
        if n_cols == 0 {
            if !cells.is_empty() {
                return Err(Error::DimensionMismatch(
                    "cells given for a table with no columns".into(),
                ));
            }
        } else if cells.len() % n_cols != 0 {
            return Err(Error::DimensionMismatch(format!(
                "{} cells is not a multiple of {} columns",
                cells.len(),
                n_cols
            )));
        }
        let mut seen = HashSet::with_capacity(n_cols);
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::DimensionMismatch(format!(
                    "duplicate feature name `{name}`"
                )));
            }
        }
        let n_rows = if n_cols == 0 { 0 } else { cells.len() / n_cols };
        let mut values = Vec::with_capacity(cells.len());
        let mut missing = Vec::with_capacity(cells.len());
        for (i, cell) in cells.into_iter().enumerate() {
            match cell {
                Some(v) if v.is_finite() => {
                    values.push(v);
                    missing.push(false);
                }
                Some(v) => {
                    return Err(Error::ParseError {
                        row: i / n_cols,
                        col: names[i % n_cols].clone(),
                        token: v.to_string(),
                    })
                }
                None => {
                    values.push(f64::NAN);
                    missing.push(true);
                }
            }
        }
        Ok(Self {
            values,
            missing,
            names,
            n_rows,
            n_cols,
        })
    }

    /// Build from fully observed rows.
    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let mut cells = Vec::with_capacity(rows.len() * names.len());
        for (r, row) in rows.iter().enumerate() {
            if row.len() != names.len() {
                return Err(Error::DimensionMismatch(format!(
                    "row {r} has {} values, expected {}",
                    row.len(),
                    names.len()
                )));
            }
            cells.extend(row.iter().map(|&v| if v.is_nan() { None } else { Some(v) }));
        }
        Self::new(names, cells)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let i = row * self.n_cols + col;
        if self.missing[i] {
            None
        } else {
            Some(self.values[i])
        }
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.missing[row * self.n_cols + col]
    }

    /// Raw row slice; missing cells read as `NaN`.
    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.n_cols..(row + 1) * self.n_cols]
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        (0..self.n_rows).map(move |r| self.get(r, col))
    }

    pub fn take_rows(&self, rows: &[usize]) -> FeatureTable {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols);
        let mut missing = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            values.extend_from_slice(self.row(r));
            missing.extend_from_slice(&self.missing[r * self.n_cols..(r + 1) * self.n_cols]);
        }
        FeatureTable {
            values,
            missing,
            names: self.names.clone(),
            n_rows: rows.len(),
            n_cols: self.n_cols,
        }
    }

    /// Project onto the named columns, in the given order.
    pub fn select_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<FeatureTable> {
        let idx = self.column_indices(names)?;
        let mut values = Vec::with_capacity(self.n_rows * idx.len());
        let mut missing = Vec::with_capacity(self.n_rows * idx.len());
        for r in 0..self.n_rows {
            for &c in &idx {
                let i = r * self.n_cols + c;
                values.push(self.values[i]);
                missing.push(self.missing[i]);
            }
        }
        Ok(FeatureTable {
            values,
            missing,
            names: names.iter().map(|s| s.as_ref().to_string()).collect(),
            n_rows: self.n_rows,
            n_cols: idx.len(),
        })
    }

    /// Column positions of `names`, or `MissingFeature` for the first absent one.
    pub fn column_indices<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.column_index(n.as_ref())
                    .ok_or_else(|| Error::MissingFeature(n.as_ref().to_string()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetScale {
    Original,
    TransformedLog,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector {
    pub values: Vec<f64>,
    pub scale: TargetScale,
}

impl TargetVector {
    /// Original-scale targets; every value must be finite and strictly positive.
    pub fn original(values: Vec<f64>) -> Result<Self> {
        if let Some(row) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::NonPositiveTarget(row));
        }
        Ok(Self {
            values,
            scale: TargetScale::Original,
        })
    }

    pub fn transformed(values: Vec<f64>) -> Self {
        Self {
            values,
            scale: TargetScale::TransformedLog,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn take(&self, rows: &[usize]) -> TargetVector {
        TargetVector {
            values: rows.iter().map(|&r| self.values[r]).collect(),
            scale: self.scale,
        }
    }
}

/// `ln(100 * y)` elementwise.
pub fn transform_target(y: &TargetVector) -> Result<TargetVector> {
    if y.scale != TargetScale::Original {
        return Err(Error::AlreadyTransformed);
    }
    let values = y
        .values
        .iter()
        .enumerate()
        .map(|(row, &v)| {
            if v.is_finite() && v > 0.0 {
                Ok(transform_value(v))
            } else {
                Err(Error::NonPositiveTarget(row))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TargetVector::transformed(values))
}

/// `exp(z) / 100` elementwise.
pub fn inverse_transform_target(z: &TargetVector) -> Result<TargetVector> {
    if z.scale != TargetScale::TransformedLog {
        return Err(Error::AlreadyOriginal);
    }
    Ok(TargetVector {
        values: z.values.iter().map(|&v| inverse_transform_value(v)).collect(),
        scale: TargetScale::Original,
    })
}

#[inline]
pub fn transform_value(y: f64) -> f64 {
    (TARGET_SCALE_FACTOR * y).ln()
}

#[inline]
pub fn inverse_transform_value(z: f64) -> f64 {
    z.exp() / TARGET_SCALE_FACTOR
}

/// Landcover category of a sample.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Landcover {
    Cropland,
    Grassland,
    Other(String),
}

impl Landcover {
    pub fn as_str(&self) -> &str {
        match self {
            Landcover::Cropland => "cropland",
            Landcover::Grassland => "grassland",
            Landcover::Other(s) => s,
        }
    }
}

impl fmt::Display for Landcover {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Landcover {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if t.is_empty() {
            return Err(Error::ParseError {
                row: 0,
                col: "landcover".into(),
                token: s.to_string(),
            });
        }
        Ok(match t.to_ascii_lowercase().as_str() {
            "cropland" => Landcover::Cropland,
            "grassland" => Landcover::Grassland,
            _ => Landcover::Other(t.to_string()),
        })
    }
}

impl Serialize for Landcover {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Landcover {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: FeatureTable,
    pub target: TargetVector,
    pub landcover: Vec<Landcover>,
    pub ids: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(
        features: FeatureTable,
        target: TargetVector,
        landcover: Vec<Landcover>,
        ids: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = features.n_rows();
        if target.len() != n || landcover.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows, {} targets, {} landcover labels",
                n,
                target.len(),
                landcover.len()
            )));
        }
        if let Some(ids) = &ids {
            if ids.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} ids for {} rows",
                    ids.len(),
                    n
                )));
            }
            let mut seen = HashSet::with_capacity(n);
            if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
                return Err(Error::DimensionMismatch(format!("duplicate row id `{dup}`")));
            }
        }
        Ok(Self {
            features,
            target,
            landcover,
            ids,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.n_rows()
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.take_rows(rows),
            target: self.target.take(rows),
            landcover: rows.iter().map(|&r| self.landcover[r].clone()).collect(),
            ids: self
                .ids
                .as_ref()
                .map(|ids| rows.iter().map(|&r| ids[r].clone()).collect()),
        }
    }

    /// Rows belonging to a single landcover class.
    pub fn filter_class(&self, class: &Landcover) -> Dataset {
        let rows: Vec<usize> = (0..self.n_rows())
            .filter(|&r| &self.landcover[r] == class)
            .collect();
        self.subset(&rows)
    }

    pub fn with_transformed_target(&self) -> Result<Dataset> {
        Ok(Dataset {
            target: transform_target(&self.target)?,
            ..self.clone()
        })
    }

    /// Row identifier, falling back to the row index.
    pub fn row_id(&self, row: usize) -> String {
        match &self.ids {
            Some(ids) => ids[row].clone(),
            None => row.to_string(),
        }
    }

    pub fn class_counts(&self) -> BTreeMap<Landcover, usize> {
        let mut counts = BTreeMap::new();
        for lc in &self.landcover {
            *counts.entry(lc.clone()).or_insert(0) += 1;
        }
        counts
    }
}

/// Column layout of a dataset CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub target_column: String,
    pub landcover_column: String,
    pub id_column: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            target_column: "nitrogen".into(),
            landcover_column: "landcover".into(),
            id_column: Some("id".into()),
        }
    }
}

/// Load a comma-separated dataset. Every column other than target,
/// landcover and id becomes a feature. An `id_column` that is absent from
/// the header is ignored.
pub fn load_csv(
    path: &Path,
    target_column: &str,
    landcover_column: &str,
    id_column: Option<&str>,
) -> Result<Dataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_csv(file, target_column, landcover_column, id_column)
}

pub fn read_csv<R: std::io::Read>(
    reader: R,
    target_column: &str,
    landcover_column: &str,
    id_column: Option<&str>,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let target_idx = find(target_column)?;
    let lc_idx = find(landcover_column)?;
    let id_idx = id_column.and_then(|name| header.iter().position(|h| h == name));

    let feature_cols: Vec<usize> = (0..header.len())
        .filter(|&c| c != target_idx && c != lc_idx && Some(c) != id_idx)
        .collect();
    let names: Vec<String> = feature_cols.iter().map(|&c| header[c].clone()).collect();

    let mut cells = Vec::new();
    let mut target = Vec::new();
    let mut landcover = Vec::new();
    let mut ids = id_idx.map(|_| Vec::new());

    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::DimensionMismatch(format!(
                "row {row} has {} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        for &c in &feature_cols {
            let token = &record[c];
            cells.push(parse_cell(token).ok_or_else(|| Error::ParseError {
                row,
                col: header[c].clone(),
                token: token.to_string(),
            })?);
        }
        let token = &record[target_idx];
        let y: f64 = token.trim().parse().map_err(|_| Error::ParseError {
            row,
            col: target_column.to_string(),
            token: token.to_string(),
        })?;
        if !(y.is_finite() && y > 0.0) {
            return Err(Error::NonPositiveTarget(row));
        }
        target.push(y);
        landcover.push(
            record[lc_idx]
                .parse::<Landcover>()
                .map_err(|_| Error::ParseError {
                    row,
                    col: landcover_column.to_string(),
                    token: record[lc_idx].to_string(),
                })?,
        );
        if let (Some(ids), Some(i)) = (ids.as_mut(), id_idx) {
            ids.push(record[i].to_string());
        }
    }

    let features = FeatureTable::new(names, cells)?;
    Dataset::new(features, TargetVector::original(target)?, landcover, ids)
}

/// Read the named numeric columns, in the order given, plus the raw text of
/// whichever `text_columns` appear in the header. Other columns are
/// ignored, so the input may carry extra fields of any type.
pub fn read_columns<R: std::io::Read>(
    reader: R,
    numeric: &[String],
    text_columns: &[&str],
) -> Result<(FeatureTable, BTreeMap<String, Vec<String>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let cols = numeric
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.clone()))
        })
        .collect::<Result<Vec<usize>>>()?;
    let text_idx: Vec<(String, usize)> = text_columns
        .iter()
        .filter_map(|t| header.iter().position(|h| h == t).map(|i| (t.to_string(), i)))
        .collect();
    let mut cells = Vec::new();
    let mut text: BTreeMap<String, Vec<String>> =
        text_idx.iter().map(|(t, _)| (t.clone(), Vec::new())).collect();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::DimensionMismatch(format!(
                "row {row} has {} fields, header has {}",
                record.len(),
                header.len()
            )));
        }
        for &c in &cols {
            cells.push(parse_cell(&record[c]).ok_or_else(|| Error::ParseError {
                row,
                col: header[c].clone(),
                token: record[c].to_string(),
            })?);
        }
        for (t, i) in &text_idx {
            text.get_mut(t).expect("text column").push(record[*i].to_string());
        }
    }
    Ok((FeatureTable::new(numeric.to_vec(), cells)?, text))
}

/// `Some(None)` for a missing token, `None` for an unparseable one.
fn parse_cell(token: &str) -> Option<Option<f64>> {
    if MISSING_TOKENS.contains(&token) {
        return Some(None);
    }
    match token.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Some(Some(v)),
        _ => None,
    }
}

/// Write a dataset in the loader's dialect: id (when present), landcover,
/// target, then features. Missing cells are written as `NA`. Targets on the
/// transformed scale are written back in original units.
pub fn write_csv<W: std::io::Write>(ds: &Dataset, schema: &CsvSchema, out: W) -> Result<()> {
    let target = match ds.target.scale {
        TargetScale::Original => ds.target.clone(),
        TargetScale::TransformedLog => inverse_transform_target(&ds.target)?,
    };
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = Vec::new();
    let id_col = schema.id_column.as_deref().filter(|_| ds.ids.is_some());
    if let Some(id) = id_col {
        header.push(id);
    }
    header.push(&schema.landcover_column);
    header.push(&schema.target_column);
    header.extend(ds.features.names().iter().map(String::as_str));
    w.write_record(&header)?;
    let mut record: Vec<String> = Vec::with_capacity(header.len());
    for r in 0..ds.n_rows() {
        record.clear();
        if id_col.is_some() {
            record.push(ds.row_id(r));
        }
        record.push(ds.landcover[r].to_string());
        record.push(target.values[r].to_string());
        for c in 0..ds.features.n_cols() {
            record.push(match ds.features.get(r, c) {
                Some(v) => v.to_string(),
                None => "NA".to_string(),
            });
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Per-landcover train/test split. Each class contributes
/// `round_half_even(class_size * test_fraction)` test rows, chosen by a
/// seeded shuffle within the class. A class whose rounded test count is 0
/// (or equals its size) gives up one row to the empty side.
pub fn stratified_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<SplitIndices> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidFraction(test_fraction));
    }
    let mut by_class: BTreeMap<&Landcover, Vec<usize>> = BTreeMap::new();
    for (r, lc) in ds.landcover.iter().enumerate() {
        by_class.entry(lc).or_default().push(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(ds.n_rows());
    let mut test = Vec::new();
    for (class, mut rows) in by_class {
        let n = rows.len();
        if n < 2 {
            return Err(Error::ClassTooSmall(class.to_string()));
        }
        let n_test = ((n as f64 * test_fraction).round_ties_even() as usize).clamp(1, n - 1);
        rows.shuffle(&mut rng);
        test.extend_from_slice(&rows[..n_test]);
        train.extend_from_slice(&rows[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { seed, train, test })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub seed: u64,
    pub k: usize,
    pub n_bins: usize,
    pub fold_of_row: Vec<usize>,
}

impl FoldAssignment {
    pub fn fold_rows(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut held = Vec::new();
        for (r, &f) in self.fold_of_row.iter().enumerate() {
            if f == fold {
                held.push(r);
            } else {
                train.push(r);
            }
        }
        (train, held)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of_row {
            sizes[f] += 1;
        }
        sizes
    }

    /// SHA-256 of the canonical JSON rendering.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("fold assignment serializes");
        hex_digest(&json)
    }
}

/// Quantile bin of each value: rank `i` of `n` (ties broken by index) lands
/// in bin `i * n_bins / n`.
pub fn quantile_bins(values: &[f64], n_bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut bin = vec![0; n];
    for (rank, &r) in order.iter().enumerate() {
        bin[r] = rank * n_bins / n;
    }
    bin
}

/// Target-stratified k-fold assignment. Rows are bucketed into `n_bins`
/// target-quantile bins; each bin is shuffled and dealt round-robin across
/// folds, with the dealing position carried from one bin to the next so
/// global fold sizes stay within one of each other.
pub fn stratified_kfold(y: &TargetVector, k: usize, n_bins: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidK(k));
    }
    let n_bins = n_bins.max(1);
    let n = y.len();
    if n < k * n_bins {
        log::warn!(
            "{n} rows is fewer than k * n_bins = {}; folds may be thinly stratified",
            k * n_bins
        );
    }
    let bins = quantile_bins(&y.values, n_bins);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (r, &b) in bins.iter().enumerate() {
        members[b].push(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of_row = vec![0; n];
    let mut next = 0;
    for rows in &mut members {
        rows.shuffle(&mut rng);
        for &r in rows.iter() {
            fold_of_row[r] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment {
        seed,
        k,
        n_bins,
        fold_of_row,
    })
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
