//! Dataset ingestion, preprocessing and deterministic stratified splitting.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tokens treated as missing values; rows containing them are rejected.
const MISSING_TOKENS: &[&str] = &["", "?", "na", "nan", "null", "none"];

/// A labelled classification dataset.
///
/// `features` is `n_points × p_features`. Labels are dense class indices
/// `0..n_classes`, and every class has at least one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    /// Build a dataset from already-numeric features, validating the label
    /// invariants.
    pub fn new(
        name: impl Into<String>,
        features: DMatrix<f64>,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        let name = name.into();
        if features.nrows() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        let mut seen = vec![false; n_classes];
        for &l in &labels {
            if l >= n_classes {
                return Err(Error::InvalidArgument(format!("label {l} out of range 0..{n_classes}")));
            }
            seen[l] = true;
        }
        if n_classes < 2 {
            return Err(Error::UnusableDataset {
                name,
                reason: "fewer than two classes".into(),
            });
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::UnusableDataset {
                name,
                reason: "a declared class has no points".into(),
            });
        }
        let feature_names = (0..features.ncols()).map(|j| format!("x{j}")).collect();
        Ok(Self {
            name,
            features,
            labels,
            class_names: (0..n_classes).map(|c| c.to_string()).collect(),
            feature_names,
        })
    }

    pub fn n_points(&self) -> usize {
        self.features.nrows()
    }

    pub fn p_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Rows `indices` as a new dataset. Class indices are kept as-is, so a
    /// subset may have empty classes; consumers that need every class
    /// present check `class_counts`.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let p = self.p_features();
        let features = DMatrix::from_fn(indices.len(), p, |i, j| self.features[(indices[i], j)]);
        Dataset {
            name: self.name.clone(),
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_names: self.class_names.clone(),
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Most frequent class, ties to the lowest index.
    pub fn majority_class(&self) -> usize {
        majority_label(&self.labels, self.n_classes())
    }

    /// Standardize every column with statistics of the whole dataset.
    pub fn standardized(mut self) -> Dataset {
        let all: Vec<usize> = (0..self.n_points()).collect();
        Standardizer::fit(&self.features, &all).apply(&mut self.features);
        self
    }
}

pub(crate) fn majority_label(labels: &[usize], n_classes: usize) -> usize {
    let mut counts = vec![0usize; n_classes.max(1)];
    for &l in labels {
        counts[l] += 1;
    }
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

/// Per-column z-scoring. Constant columns map to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Population standard deviations; zero marks a constant column.
    pub stds: Vec<f64>,
}

impl Standardizer {
    /// Fit on the given rows only.
    pub fn fit(x: &DMatrix<f64>, rows: &[usize]) -> Self {
        let p = x.ncols();
        let n = rows.len().max(1) as f64;
        let mut means = vec![0.0; p];
        let mut stds = vec![0.0; p];
        for j in 0..p {
            let mean = rows.iter().map(|&i| x[(i, j)]).sum::<f64>() / n;
            let var = rows.iter().map(|&i| (x[(i, j)] - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            means[j] = mean;
            stds[j] = if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 0.0 };
        }
        Self { means, stds }
    }

    pub fn apply(&self, x: &mut DMatrix<f64>) {
        for j in 0..x.ncols() {
            let (m, s) = (self.means[j], self.stds[j]);
            for v in x.column_mut(j).iter_mut() {
                *v = if s > 0.0 { (*v - m) / s } else { 0.0 };
            }
        }
    }
}

/// CSV ingestion options.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvOptions {
    pub has_header: bool,
    /// Zero-based label column; `None` selects the last column.
    pub label_col: Option<usize>,
}

/// Load a CSV file, one-hot encode categorical columns and standardize all
/// columns with whole-dataset statistics.
pub fn load_dataset(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    Ok(load_encoded(path, opts)?.standardized())
}

/// Load and one-hot encode, without standardization.
pub fn load_encoded(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_csv(&name, &text, opts)
}

/// Parse CSV text into an encoded (not yet standardized) dataset.
///
/// Reported row and column numbers are 1-based positions in the file.
pub fn parse_csv(name: &str, text: &str, opts: &CsvOptions) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut width = None;
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::MalformedInput {
            row: line + 1,
            column: 0,
            message: e.to_string(),
        })?;
        let fields: Vec<String> = rec.iter().map(str::to_owned).collect();
        if fields.len() == 1 && fields[0].is_empty() {
            continue;
        }
        if opts.has_header && header.is_none() {
            header = Some(fields);
            continue;
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::MalformedInput {
                    row: line + 1,
                    column: fields.len().min(w) + 1,
                    message: format!("expected {w} fields, found {}", fields.len()),
                })
            }
            _ => {}
        }
        for (c, f) in fields.iter().enumerate() {
            if MISSING_TOKENS.contains(&f.to_ascii_lowercase().as_str()) {
                return Err(Error::MalformedInput {
                    row: line + 1,
                    column: c + 1,
                    message: format!("missing value `{f}`"),
                });
            }
        }
        rows.push(fields);
    }

    let width = width.ok_or_else(|| Error::UnusableDataset {
        name: name.into(),
        reason: "no data rows".into(),
    })?;
    if width < 2 {
        return Err(Error::MalformedInput {
            row: 1,
            column: 1,
            message: "need at least one feature column and a label column".into(),
        });
    }
    let label_col = opts.label_col.unwrap_or(width - 1);
    if label_col >= width {
        return Err(Error::InvalidArgument(format!(
            "label column {label_col} out of range for {width} columns"
        )));
    }

    // labels
    let raw_labels: Vec<&str> = rows.iter().map(|r| r[label_col].as_str()).collect();
    let mut class_names: Vec<String> = raw_labels.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>().into_iter().collect();
    if class_names.iter().all(|s| s.parse::<f64>().is_ok()) {
        class_names.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse::<f64>().unwrap()));
    }
    if class_names.len() < 2 {
        return Err(Error::UnusableDataset {
            name: name.into(),
            reason: format!("only {} class present", class_names.len()),
        });
    }
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|l| class_names.iter().position(|c| c == l).unwrap())
        .collect();

    // features
    let n = rows.len();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut feature_names = Vec::new();
    for c in (0..width).filter(|&c| c != label_col) {
        let col_name = header
            .as_ref()
            .map(|h| h[c].clone())
            .unwrap_or_else(|| format!("x{c}"));
        let parsed: Vec<Option<f64>> = rows.iter().map(|r| r[c].parse::<f64>().ok().filter(|v| v.is_finite())).collect();
        if parsed.iter().all(Option::is_some) {
            columns.push(parsed.into_iter().map(Option::unwrap).collect());
            feature_names.push(col_name);
        } else {
            // categorical: any non-numeric token marks the whole column
            let levels: Vec<&str> = rows.iter().map(|r| r[c].as_str()).collect::<BTreeSet<_>>().into_iter().collect();
            for level in &levels {
                columns.push(rows.iter().map(|r| f64::from(u8::from(r[c] == *level))).collect());
                feature_names.push(format!("{col_name}={level}"));
            }
        }
    }
    let features = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
    Ok(Dataset {
        name: name.into(),
        features,
        labels,
        class_names,
        feature_names,
    })
}

/// Fold assignment for stratified k-fold cross-validation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvSplit {
    pub n_folds: usize,
    /// Fold index of every data point.
    pub folds: Vec<usize>,
    pub seed: u64,
}

impl CvSplit {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] != fold).collect()
    }
}

/// Stratified fold assignment.
///
/// Each class is shuffled with a generator seeded by `seed` and dealt
/// round-robin; the dealing position carries over from one class to the
/// next so fold sizes stay balanced overall. Per-class fold counts differ
/// by at most one.
pub fn make_splits(labels: &[usize], n_classes: usize, n_folds: usize, seed: u64) -> Result<CvSplit> {
    if n_folds < 2 {
        return Err(Error::InvalidArgument(format!("n_folds must be >= 2, got {n_folds}")));
    }
    if n_folds > labels.len() {
        return Err(Error::InvalidArgument(format!(
            "n_folds {n_folds} exceeds {} data points",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; labels.len()];
    let mut cursor = 0;
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[i] = cursor % n_folds;
            cursor += 1;
        }
    }
    Ok(CvSplit { n_folds, folds, seed })
}

/// Train / validation / test partition of one dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoldoutSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified 60/20/20 holdout split. Every class with at least one point
/// keeps at least one point in the training part.
pub fn holdout_split(labels: &[usize], n_classes: usize, seed: u64) -> HoldoutSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut split = HoldoutSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for class in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let c = members.len();
        let n_train = ((0.6 * c as f64).round() as usize).clamp(1, c);
        let n_val = ((0.2 * c as f64).round() as usize).min(c - n_train);
        split.train.extend_from_slice(&members[..n_train]);
        split.validation.extend_from_slice(&members[n_train..n_train + n_val]);
        split.test.extend_from_slice(&members[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    split.test.sort_unstable();
    split
}

/// One record of a corpus manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub path: PathBuf,
}

/// Read a corpus manifest (JSON array of `{name, path}`). Relative paths are
/// resolved against the manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for e in &mut entries {
        if e.path.is_relative() {
            e.path = base.join(&e.path);
        }
    }
    Ok(entries)
}
