//! Native base learners, the model grid, cross-validation and ensembles.

mod cv;
mod ensemble;
mod knn;
mod linear;
pub(crate) mod metric;
mod naive_bayes;
mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cv::{cross_validate, FitReport};
pub use ensemble::{ensemble_selection, ensemble_selection_with_cap, Ensemble, EnsembleMember, DEFAULT_MEMBER_CAP};
pub use metric::balanced_error_rate;

/// Algorithm families in the native grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Knn,
    GaussianNb,
    LogisticRegression,
    Perceptron,
    DecisionTree,
    RandomForestLite,
    AdaboostLite,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Knn,
        Algorithm::GaussianNb,
        Algorithm::LogisticRegression,
        Algorithm::Perceptron,
        Algorithm::DecisionTree,
        Algorithm::RandomForestLite,
        Algorithm::AdaboostLite,
    ];

    /// Human-readable family name used in reports.
    pub fn family(self) -> &'static str {
        match self {
            Algorithm::Knn => "kNN",
            Algorithm::GaussianNb => "Gaussian naive Bayes",
            Algorithm::LogisticRegression => "Logistic regression",
            Algorithm::Perceptron => "Perceptron",
            Algorithm::DecisionTree => "Decision tree",
            Algorithm::RandomForestLite => "Random forest",
            Algorithm::AdaboostLite => "Adaboost",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.family())
    }
}

/// A hyperparameter value. Integers and reals are kept distinct so that
/// `min_samples_split = 2` (a count) and `0.01` (a fraction) round-trip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Int(i64),
    Float(f64),
    Text(String),
}

impl fmt::Display for HyperValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperValue::Int(v) => write!(f, "{v}"),
            HyperValue::Float(v) => write!(f, "{v}"),
            HyperValue::Text(v) => f.write_str(v),
        }
    }
}

impl From<i64> for HyperValue {
    fn from(v: i64) -> Self {
        HyperValue::Int(v)
    }
}

impl From<f64> for HyperValue {
    fn from(v: f64) -> Self {
        HyperValue::Float(v)
    }
}

impl From<&str> for HyperValue {
    fn from(v: &str) -> Self {
        HyperValue::Text(v.to_owned())
    }
}

/// An algorithm together with a concrete hyperparameter setting. `index`
/// is the model's column in the error matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub algorithm: Algorithm,
    pub hyperparameters: BTreeMap<String, HyperValue>,
    pub index: usize,
}

impl ModelSpec {
    pub fn new(algorithm: Algorithm, index: usize) -> Self {
        Self {
            algorithm,
            hyperparameters: BTreeMap::new(),
            index,
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<HyperValue>) -> Self {
        self.hyperparameters.insert(key.to_owned(), value.into());
        self
    }

    fn get(&self, key: &str) -> Result<&HyperValue> {
        self.hyperparameters
            .get(key)
            .ok_or_else(|| Error::InvalidArgument(format!("{} model {} lacks `{key}`", self.algorithm, self.index)))
    }

    fn int(&self, key: &str) -> Result<i64> {
        match self.get(key)? {
            HyperValue::Int(v) => Ok(*v),
            other => Err(Error::InvalidArgument(format!("`{key}` must be an integer, got {other}"))),
        }
    }

    fn real(&self, key: &str) -> Result<f64> {
        match self.get(key)? {
            HyperValue::Int(v) => Ok(*v as f64),
            HyperValue::Float(v) => Ok(*v),
            other => Err(Error::InvalidArgument(format!("`{key}` must be numeric, got {other}"))),
        }
    }

    fn text_or(&self, key: &str, default: &str) -> Result<String> {
        match self.hyperparameters.get(key) {
            None => Ok(default.to_owned()),
            Some(HyperValue::Text(s)) => Ok(s.clone()),
            Some(other) => Err(Error::InvalidArgument(format!("`{key}` must be text, got {other}"))),
        }
    }

    /// Compact label such as `kNN(n_neighbors=3,p=2)`.
    pub fn label(&self) -> String {
        let params: Vec<String> = self.hyperparameters.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}({})", self.algorithm, params.join(","))
    }
}

/// Size of the enumerated model grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectionSize {
    Small,
    Full,
}

/// Enumerate the model grid. Declaration order defines `index`.
///
/// `Small` has 40 models over all seven families; `Full` has 78.
pub fn default_collection(size: CollectionSize) -> Vec<ModelSpec> {
    let mut out: Vec<ModelSpec> = Vec::new();
    let mut push = |m: ModelSpec| {
        let idx = out.len();
        out.push(ModelSpec { index: idx, ..m });
    };
    let full = size == CollectionSize::Full;

    let ks: &[i64] = if full { &[1, 3, 5, 7, 9, 11, 13, 15] } else { &[1, 3, 5, 7] };
    for &k in ks {
        for p in [1, 2] {
            push(ModelSpec::new(Algorithm::Knn, 0).with("n_neighbors", k).with("p", p as i64));
        }
    }

    push(ModelSpec::new(Algorithm::GaussianNb, 0));

    let cs: &[f64] = if full {
        &[0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0]
    } else {
        &[0.1, 0.25, 0.5, 1.0, 2.0, 4.0]
    };
    for &c in cs {
        push(ModelSpec::new(Algorithm::LogisticRegression, 0).with("C", c));
    }

    push(ModelSpec::new(Algorithm::Perceptron, 0));

    let splits: Vec<HyperValue> = if full {
        [2, 4, 8, 16, 32, 64, 128, 256, 512, 1024]
            .into_iter()
            .map(HyperValue::Int)
            .chain([0.01, 0.001, 0.0001, 1e-5].into_iter().map(HyperValue::Float))
            .collect()
    } else {
        [2, 4, 8, 16, 32, 64, 128, 256].into_iter().map(HyperValue::Int).collect()
    };
    for s in &splits {
        push(ModelSpec::new(Algorithm::DecisionTree, 0).with("min_samples_split", s.clone()));
    }

    let forest_splits: Vec<HyperValue> = if full {
        splits.clone()
    } else {
        [2, 4, 8, 16, 32, 64].into_iter().map(HyperValue::Int).collect()
    };
    let criteria: &[&str] = if full { &["gini", "entropy"] } else { &["gini"] };
    for s in &forest_splits {
        for &crit in criteria {
            push(
                ModelSpec::new(Algorithm::RandomForestLite, 0)
                    .with("min_samples_split", s.clone())
                    .with("criterion", crit),
            );
        }
    }

    let estimators: &[i64] = if full { &[50, 100] } else { &[25, 50] };
    for &n in estimators {
        for lr in [1.0, 1.5, 2.0, 2.5, 3.0] {
            push(
                ModelSpec::new(Algorithm::AdaboostLite, 0)
                    .with("n_estimators", n)
                    .with("learning_rate", lr),
            );
        }
    }
    out
}

pub fn save_collection(path: &Path, models: &[ModelSpec]) -> Result<()> {
    let text = serde_json::to_string_pretty(models).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Load a collection and check that indices are `0..n` in order.
pub fn load_collection(path: &Path) -> Result<Vec<ModelSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let models: Vec<ModelSpec> = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    for (i, m) in models.iter().enumerate() {
        if m.index != i {
            return Err(Error::InvalidArgument(format!(
                "{}: model at position {i} has index {}",
                path.display(),
                m.index
            )));
        }
    }
    Ok(models)
}

/// A fitted model.
pub trait Classifier: Send + Sync {
    fn predict(&self, x: &DMatrix<f64>) -> Vec<usize>;
}

/// Row-major copy of a feature matrix; learners scan rows far more often
/// than columns.
#[derive(Debug, Clone)]
pub(crate) struct Rows {
    data: Vec<f64>,
    pub p: usize,
    pub n: usize,
}

impl Rows {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let (n, p) = x.shape();
        let mut data = Vec::with_capacity(n * p);
        for i in 0..n {
            for j in 0..p {
                data.push(x[(i, j)]);
            }
        }
        Self { data, p, n }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.p..(i + 1) * self.p]
    }
}

/// Train `spec` on `(x, y)`.
pub fn fit_model(
    spec: &ModelSpec,
    x: &DMatrix<f64>,
    y: &[usize],
    n_classes: usize,
    seed: u64,
) -> Result<Box<dyn Classifier>> {
    if x.nrows() == 0 || x.nrows() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot fit on {} rows with {} labels",
            x.nrows(),
            y.len()
        )));
    }
    let rows = Rows::new(x);
    Ok(match spec.algorithm {
        Algorithm::Knn => {
            let k = spec.int("n_neighbors")?;
            let p = spec.int("p")?;
            if k < 1 || !(1..=2).contains(&p) {
                return Err(Error::InvalidArgument(format!("bad kNN setting k={k} p={p}")));
            }
            Box::new(knn::Knn::fit(rows, y, n_classes, k as usize, p as u32))
        }
        Algorithm::GaussianNb => Box::new(naive_bayes::GaussianNb::fit(&rows, y, n_classes)),
        Algorithm::LogisticRegression => {
            let c = spec.real("C")?;
            if c <= 0.0 {
                return Err(Error::InvalidArgument(format!("C must be positive, got {c}")));
            }
            Box::new(linear::LogisticRegression::fit(&rows, y, n_classes, c)?)
        }
        Algorithm::Perceptron => Box::new(linear::Perceptron::fit(&rows, y, n_classes, seed)),
        Algorithm::DecisionTree => {
            let params = tree::TreeParams {
                criterion: tree::Criterion::parse(&spec.text_or("criterion", "gini")?)?,
                min_samples_split: tree::MinSplit::from_hyper(spec.get("min_samples_split")?)?,
                max_depth: None,
                max_features: None,
            };
            Box::new(tree::DecisionTree::fit(&rows, y, n_classes, &params, seed))
        }
        Algorithm::RandomForestLite => {
            let params = tree::TreeParams {
                criterion: tree::Criterion::parse(&spec.text_or("criterion", "gini")?)?,
                min_samples_split: tree::MinSplit::from_hyper(spec.get("min_samples_split")?)?,
                max_depth: None,
                max_features: Some(((rows.p as f64).sqrt().round() as usize).max(1)),
            };
            Box::new(tree::RandomForest::fit(&rows, y, n_classes, &params, tree::FOREST_SIZE, seed))
        }
        Algorithm::AdaboostLite => {
            let n_estimators = spec.int("n_estimators")?;
            let lr = spec.real("learning_rate")?;
            if n_estimators < 1 || lr <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "bad Adaboost setting n_estimators={n_estimators} learning_rate={lr}"
                )));
            }
            Box::new(tree::AdaBoost::fit(&rows, y, n_classes, n_estimators as usize, lr))
        }
    })
}

/// Index of the largest score; ties go to the lowest index.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_shape() {
        let c = default_collection(CollectionSize::Small);
        assert_eq!(c.len(), 40);
        let families: std::collections::BTreeSet<_> = c.iter().map(|m| m.algorithm).collect();
        assert_eq!(families.len(), 7);
        for (i, m) in c.iter().enumerate() {
            assert_eq!(m.index, i);
        }
        assert_eq!(c.iter().filter(|m| m.algorithm == Algorithm::GaussianNb).count(), 1);
        let gnb = c.iter().find(|m| m.algorithm == Algorithm::GaussianNb).unwrap();
        assert!(gnb.hyperparameters.is_empty());
        for k in [1, 3, 5, 7] {
            for p in [1, 2] {
                assert!(c.iter().any(|m| m.algorithm == Algorithm::Knn
                    && m.hyperparameters["n_neighbors"] == HyperValue::Int(k)
                    && m.hyperparameters["p"] == HyperValue::Int(p)));
            }
        }
    }

    #[test]
    fn full_grid_shape_and_determinism() {
        let a = default_collection(CollectionSize::Full);
        assert_eq!(a.len(), 78);
        assert_eq!(a, default_collection(CollectionSize::Full));
    }

    #[test]
    fn collection_json_round_trips_exactly() {
        let c = default_collection(CollectionSize::Full);
        let text = serde_json::to_string(&c).unwrap();
        let back: Vec<ModelSpec> = serde_json::from_str(&text).unwrap();
        assert_eq!(c, back);
        // integer and fractional split sizes stay distinct
        assert!(text.contains("\"min_samples_split\":2}") || text.contains("\"min_samples_split\":2,"));
        assert!(text.contains("0.0001"));
    }

    #[test]
    fn fit_rejects_bad_hyperparameters() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let spec = ModelSpec::new(Algorithm::Knn, 0).with("n_neighbors", 0i64).with("p", 2i64);
        assert!(fit_model(&spec, &x, &[0, 1], 2, 0).is_err());
        let spec = ModelSpec::new(Algorithm::LogisticRegression, 0);
        assert!(fit_model(&spec, &x, &[0, 1], 2, 0).is_err());
    }
}
