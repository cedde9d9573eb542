//! Dataset representation, CSV ingestion, stratified splitting and z-scoring.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::determinism::{derive_seed, permute};
use crate::error::{Error, Result};

/// Samples × features matrix with dense class ids.
///
/// `class_names[c]` is the original label text of class id `c`. Row subsets
/// keep the full class list, so a subset may not contain every class.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub matrix: Array2<f64>,
    pub labels: Vec<usize>,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        matrix: Array2<f64>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            matrix,
            labels,
            feature_names,
            class_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let (n, p) = self.matrix.dim();
        if n != self.labels.len() {
            return Err(Error::Shape(format!("{n} rows but {} labels", self.labels.len())));
        }
        if p != self.feature_names.len() {
            return Err(Error::Shape(format!(
                "{p} columns but {} feature names",
                self.feature_names.len()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.class_names.len()) {
            return Err(Error::InvalidDataset(format!(
                "label id {bad} outside {} classes",
                self.class_names.len()
            )));
        }
        if let Some(((r, c), _)) = self.matrix.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite value at row {r}, column {c}"
            )));
        }
        let mut seen = HashSet::new();
        for f in &self.feature_names {
            if !seen.insert(f.as_str()) {
                return Err(Error::InvalidDataset(format!("duplicate feature name '{f}'")));
            }
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            matrix: self.matrix.select(Axis(0), rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    pub fn select_features(&self, cols: &[usize]) -> Dataset {
        Dataset {
            name: self.name.clone(),
            matrix: self.matrix.select(Axis(1), cols),
            labels: self.labels.clone(),
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            class_names: self.class_names.clone(),
        }
    }

    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            name: self.name.clone(),
            samples: self.n_samples(),
            dimensions: self.n_features(),
            classes: self.n_classes(),
            class_names: self.class_names.clone(),
        }
    }
}

/// Summary row: name, #Datapoints, #Dimensions, #Classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub samples: usize,
    pub dimensions: usize,
    pub classes: usize,
    pub class_names: Vec<String>,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Reads a comma-separated file with a header row. Every column except
/// `label_column` must hold finite reals. Labels become dense ids in order of
/// first appearance. Rows are numbered from 1 for the first data row.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::MissingLabelColumn(label_column.to_string()))?;
    let feature_names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let p = feature_names.len();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut class_ids: HashMap<String, usize> = HashMap::new();
    let mut n = 0usize;
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let row = r + 1;
        if record.len() != header.len() {
            return Err(Error::Csv {
                path: path.to_path_buf(),
                message: format!("row {row} has {} fields, expected {}", record.len(), header.len()),
            });
        }
        for (i, cell) in record.iter().enumerate() {
            if i == label_idx {
                let key = cell.trim().to_string();
                let next = class_names.len();
                let id = *class_ids.entry(key.clone()).or_insert_with(|| {
                    class_names.push(key);
                    next
                });
                labels.push(id);
                continue;
            }
            let v: f64 = cell.trim().parse().map_err(|_| bad_cell(row, &header[i], cell))?;
            if !v.is_finite() {
                return Err(bad_cell(row, &header[i], cell));
            }
            values.push(v);
        }
        n += 1;
    }
    if class_names.len() < 2 {
        return Err(Error::SingleClass);
    }
    let matrix = Array2::from_shape_vec((n, p), values).map_err(|e| Error::Shape(e.to_string()))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, matrix, labels, feature_names, class_names)
}

fn bad_cell(row: usize, column: &str, value: &str) -> Error {
    Error::BadCell {
        row,
        column: column.to_string(),
        value: value.to_string(),
    }
}

/// Writes features at full round-trip precision followed by the label column.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>, label_column: &str) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header: Vec<&str> = ds.feature_names.iter().map(String::as_str).collect();
    header.push(label_column);
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for (row, &label) in ds.matrix.outer_iter().zip(&ds.labels) {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(ds.class_names[label].clone());
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Train/test partition by sample index. Index lists are ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: Dataset,
    pub test: Dataset,
    pub indices: SplitIndices,
}

// guards n * fraction against representation error, e.g. 100 * 0.3
const ROUND_EPS: f64 = 1e-9;

/// Per-class test counts: floor of each class's share, then the remainder up
/// to ceil(n * fraction) goes to the largest fractional parts, ties to the
/// lower class id.
pub fn stratified_test_counts(class_counts: &[usize], test_fraction: f64) -> Vec<usize> {
    let n: usize = class_counts.iter().sum();
    let total = ((n as f64 * test_fraction) - ROUND_EPS).ceil().max(0.0) as usize;
    let shares: Vec<f64> = class_counts.iter().map(|&c| c as f64 * test_fraction).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| (s + ROUND_EPS).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..class_counts.len()).collect();
    let frac = |c: usize| shares[c] - counts[c] as f64;
    order.sort_by(|&a, &b| frac(b).total_cmp(&frac(a)).then(a.cmp(&b)));
    for &c in order.iter().take(total.saturating_sub(assigned)) {
        counts[c] += 1;
    }
    counts
}

fn class_members(labels: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    members
}

pub fn stratified_split_indices(
    labels: &[usize],
    n_classes: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<SplitIndices> {
    if !(test_fraction > 0.0 && test_fraction < 0.5) {
        return Err(Error::param(format!(
            "test fraction must lie in (0, 0.5), got {test_fraction}"
        )));
    }
    let members = class_members(labels, n_classes);
    if let Some((c, m)) = members.iter().enumerate().find(|(_, m)| m.len() == 1) {
        return Err(Error::InvalidDataset(format!(
            "class {c} has {} sample; stratified splitting needs at least 2",
            m.len()
        )));
    }
    let counts: Vec<usize> = members.iter().map(Vec::len).collect();
    let test_counts = stratified_test_counts(&counts, test_fraction);
    let mut test = Vec::new();
    for (c, m) in members.iter().enumerate() {
        let shuffled = permute(m, derive_seed(seed, &format!("split/class={c}")));
        test.extend_from_slice(&shuffled[..test_counts[c]]);
    }
    test.sort_unstable();
    let in_test: HashSet<usize> = test.iter().copied().collect();
    let train = (0..labels.len()).filter(|i| !in_test.contains(i)).collect();
    Ok(SplitIndices { train, test, seed })
}

pub fn stratified_split(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<SplitPair> {
    let indices = stratified_split_indices(&ds.labels, ds.n_classes(), test_fraction, seed)?;
    Ok(SplitPair {
        train: ds.select_rows(&indices.train),
        test: ds.select_rows(&indices.test),
        indices,
    })
}

/// Stratified k-fold: each class is shuffled and dealt round-robin to folds.
/// Returns one split per fold with that fold as the test part.
pub fn stratified_kfold_indices(
    labels: &[usize],
    n_classes: usize,
    folds: usize,
    seed: u64,
) -> Result<Vec<SplitIndices>> {
    if folds < 2 || folds > labels.len() {
        return Err(Error::param(format!(
            "fold count must lie in [2, {}], got {folds}",
            labels.len()
        )));
    }
    let mut fold_of = vec![0usize; labels.len()];
    let mut next = 0usize;
    for (c, m) in class_members(labels, n_classes).iter().enumerate() {
        for i in permute(m, derive_seed(seed, &format!("kfold/class={c}"))) {
            fold_of[i] = next % folds;
            next += 1;
        }
    }
    Ok((0..folds)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..labels.len()).partition(|&i| fold_of[i] == f);
            SplitIndices { train, test, seed }
        })
        .collect())
}

/// Column statistics from a training matrix (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns with zero variance in the training data; they map to 0.
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(train: ArrayView2<f64>) -> Self {
        let n = train.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(train.ncols());
        let mut std = Vec::with_capacity(train.ncols());
        let mut constant = Vec::with_capacity(train.ncols());
        for col in train.columns() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = var.sqrt();
            let is_const = col.iter().all(|&v| v == col[0]) || s == 0.0;
            mean.push(m);
            std.push(if is_const { 0.0 } else { s });
            constant.push(is_const);
        }
        Self { mean, std, constant }
    }

    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(x.ncols())?;
        let mut out = x.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            if self.constant[j] {
                col.fill(0.0);
            } else {
                col.mapv_inplace(|v| (v - self.mean[j]) / self.std[j]);
            }
        }
        Ok(out)
    }

    /// Maps standardized values back to the original scale; constant columns
    /// return their training value.
    pub fn inverse_transform(&self, z: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(z.ncols())?;
        let mut out = z.to_owned();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.mean[j], self.std[j]);
            col.mapv_inplace(|v| m + s * v);
        }
        Ok(out)
    }

    fn check(&self, cols: usize) -> Result<()> {
        if cols != self.n_features() {
            return Err(Error::Shape(format!(
                "standardizer fitted on {} features, got {cols}",
                self.n_features()
            )));
        }
        Ok(())
    }
}

/// Standardizes `apply_to` with statistics of `train`.
pub fn zscore(train: ArrayView2<f64>, apply_to: ArrayView2<f64>) -> Result<(Array2<f64>, Standardizer)> {
    let st = Standardizer::fit(train);
    let out = st.transform(apply_to)?;
    Ok((out, st))
}
