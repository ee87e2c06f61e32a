//! Offline stage: cross-validate every model on every corpus dataset and
//! fit per-model runtime predictors.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{make_splits, Dataset};
use crate::error::{Error, Result};
use crate::learners::{cross_validate, load_collection, save_collection, ModelSpec};
use crate::linalg::{lstsq_min_norm, numerical_rank};
use crate::tables::{fmt_f64, read_matrix_csv, write_matrix_csv, write_rows};

/// Dataset-by-model balanced error rates.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMatrix {
    pub values: DMatrix<f64>,
    pub dataset_ids: Vec<String>,
    pub model_ids: Vec<usize>,
    /// Cells whose learner failed on every fold; they hold the row mean of
    /// the unmasked cells.
    pub failure_mask: DMatrix<bool>,
}

impl ErrorMatrix {
    pub fn shape(&self) -> (usize, usize) {
        self.values.shape()
    }

    pub fn failures(&self) -> usize {
        self.failure_mask.iter().filter(|&&b| b).count()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// Frobenius norm of the residual over unmasked cells only.
    pub fn masked_residual(&self, approx: &DMatrix<f64>) -> f64 {
        let mut s = 0.0;
        for ((e, a), m) in self.values.iter().zip(approx.iter()).zip(self.failure_mask.iter()) {
            if !m {
                s += (e - a).powi(2);
            }
        }
        s.sqrt()
    }
}

/// Seconds spent cross-validating each cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeMatrix {
    pub values: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSize {
    pub n: usize,
    pub p: usize,
}

impl DatasetSize {
    pub fn of(d: &Dataset) -> Self {
        Self {
            n: d.n_points(),
            p: d.p_features(),
        }
    }
}

/// Cross-validate every (dataset, model) pair, in parallel over cells on the
/// current rayon pool.
///
/// Each dataset is split with the same seed, so identical datasets give
/// identical error rows.
pub fn build_matrices(
    corpus: &[Dataset],
    collection: &[ModelSpec],
    n_folds: usize,
    seed: u64,
) -> Result<(ErrorMatrix, RuntimeMatrix)> {
    if corpus.is_empty() || collection.is_empty() {
        return Err(Error::InvalidArgument("corpus and collection must be nonempty".into()));
    }
    let splits = corpus
        .iter()
        .map(|d| make_splits(&d.labels, d.n_classes(), n_folds, seed))
        .collect::<Result<Vec<_>>>()?;
    let (m, n) = (corpus.len(), collection.len());
    let cells: Vec<(f64, f64, bool)> = (0..m * n)
        .into_par_iter()
        .map(|c| {
            let (i, j) = (c / n, c % n);
            let r = cross_validate(&collection[j], &corpus[i], &splits[i])?;
            Ok((r.cv_error, r.wall_time, r.all_failed(splits[i].n_folds)))
        })
        .collect::<Result<_>>()?;

    let mut values = DMatrix::from_fn(m, n, |i, j| cells[i * n + j].0);
    let times = DMatrix::from_fn(m, n, |i, j| cells[i * n + j].1);
    let mask = DMatrix::from_fn(m, n, |i, j| cells[i * n + j].2);
    for i in 0..m {
        let ok: Vec<f64> = (0..n).filter(|&j| !mask[(i, j)]).map(|j| values[(i, j)]).collect();
        if ok.is_empty() {
            return Err(Error::UnusableDataset {
                name: corpus[i].name.clone(),
                reason: "every model failed on every fold".into(),
            });
        }
        let mean = ok.iter().sum::<f64>() / ok.len() as f64;
        for j in 0..n {
            if mask[(i, j)] {
                values[(i, j)] = mean;
            }
        }
    }
    Ok((
        ErrorMatrix {
            values,
            dataset_ids: corpus.iter().map(|d| d.name.clone()).collect(),
            model_ids: collection.iter().map(|s| s.index).collect(),
            failure_mask: mask,
        },
        RuntimeMatrix { values: times },
    ))
}

pub const BASIS_NAME: &str = "deg3-n-p-logn";
pub const BASIS_DIM: usize = 20;
/// Times are floored here before taking logs or ratios.
pub const MIN_TIME: f64 = 1e-6;

/// Exponents `(a, b, c)` of `n^a p^b (log n)^c` with `a + b + c ≤ 3`,
/// by total degree, then lexicographically descending.
fn exponents() -> Vec<(i32, i32, i32)> {
    let mut out = Vec::with_capacity(BASIS_DIM);
    for deg in 0..=3 {
        for a in (0..=deg).rev() {
            for b in (0..=deg - a).rev() {
                out.push((a, b, deg - a - b));
            }
        }
    }
    out
}

/// Per-model runtime regression on a cubic polynomial in `(n, p, log n)`.
///
/// Each variable is divided by its largest value in the training sample,
/// which leaves the span of the basis unchanged and keeps the design matrix
/// well conditioned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimePredictor {
    pub index: usize,
    pub basis: String,
    pub coefficients: Vec<f64>,
    /// Regress `log t` (default) or `t` itself.
    pub log_space: bool,
    /// Divisors for `(n, p, log n)`.
    pub scales: [f64; 3],
}

impl RuntimePredictor {
    fn features(&self, n: f64, p: f64) -> Vec<f64> {
        basis_row(n, p, &self.scales)
    }

    pub fn predict(&self, n: usize, p: usize) -> f64 {
        let raw: f64 = self
            .features(n.max(1) as f64, p.max(1) as f64)
            .iter()
            .zip(&self.coefficients)
            .map(|(a, b)| a * b)
            .sum();
        if self.log_space {
            raw.min(700.0).exp().max(MIN_TIME)
        } else {
            raw.max(MIN_TIME)
        }
    }
}

fn basis_row(n: f64, p: f64, scales: &[f64; 3]) -> Vec<f64> {
    let z = [n / scales[0], p / scales[1], n.ln() / scales[2]];
    exponents()
        .into_iter()
        .map(|(a, b, c)| z[0].powi(a) * z[1].powi(b) * z[2].powi(c))
        .collect()
}

/// Least-squares fit of one model's runtimes.
///
/// When the design matrix is rank deficient (few or repeated sizes) a ridge
/// penalty `λ = 1e-6 · trace(AᵀA) / d` is applied to the non-constant terms
/// of a centred design, so a constant target still yields a constant
/// predictor.
pub fn fit_runtime(
    sizes: &[DatasetSize],
    times: &[f64],
    index: usize,
    log_space: bool,
) -> Result<RuntimePredictor> {
    assert_eq!(sizes.len(), times.len());
    if sizes.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "runtime predictor for model {index} needs at least 2 samples, got {}",
            sizes.len()
        )));
    }
    let maxed = |f: &dyn Fn(&DatasetSize) -> f64| sizes.iter().map(f).fold(0.0, f64::max).max(1.0);
    let scales = [
        maxed(&|s| s.n.max(1) as f64),
        maxed(&|s| s.p.max(1) as f64),
        maxed(&|s| (s.n.max(1) as f64).ln()),
    ];
    let rows: Vec<Vec<f64>> = sizes
        .iter()
        .map(|s| basis_row(s.n.max(1) as f64, s.p.max(1) as f64, &scales))
        .collect();
    let a = DMatrix::from_fn(rows.len(), BASIS_DIM, |i, j| rows[i][j]);
    let y = DVector::from_iterator(
        times.len(),
        times.iter().map(|&t| if log_space { t.max(MIN_TIME).ln() } else { t }),
    );

    let coefficients: Vec<f64> = if numerical_rank(&a, 1e-10) == BASIS_DIM {
        lstsq_min_norm(&a, &y).iter().copied().collect()
    } else {
        ridge_fit(&a, &y)
    };
    Ok(RuntimePredictor {
        index,
        basis: BASIS_NAME.into(),
        coefficients,
        log_space,
        scales,
    })
}

/// Ridge on the non-constant columns (column 0 is the constant) after
/// centring; the intercept is recovered from the means.
fn ridge_fit(a: &DMatrix<f64>, y: &DVector<f64>) -> Vec<f64> {
    let (s, d) = a.shape();
    let means: Vec<f64> = (1..d).map(|j| a.column(j).mean()).collect();
    let ybar = y.mean();
    let ac = DMatrix::from_fn(s, d - 1, |i, j| a[(i, j + 1)] - means[j]);
    let yc = y.map(|v| v - ybar);
    let mut g = ac.transpose() * &ac;
    let lambda = 1e-6 * g.trace() / (d - 1) as f64;
    if lambda > 0.0 {
        for j in 0..d - 1 {
            g[(j, j)] += lambda;
        }
    }
    let rhs = ac.transpose() * yc;
    let beta = match g.clone().cholesky() {
        Some(c) => c.solve(&rhs),
        None => lstsq_min_norm(&g, &rhs),
    };
    let intercept = ybar - means.iter().zip(beta.iter()).map(|(m, b)| m * b).sum::<f64>();
    std::iter::once(intercept).chain(beta.iter().copied()).collect()
}

pub fn predict_runtime(pred: &RuntimePredictor, n: usize, p: usize) -> f64 {
    pred.predict(n, p)
}

/// Fit one predictor per column of `t`, optionally leaving out one row.
pub fn fit_all_runtime(
    t: &RuntimeMatrix,
    sizes: &[DatasetSize],
    model_ids: &[usize],
    exclude_row: Option<usize>,
    log_space: bool,
) -> Result<Vec<RuntimePredictor>> {
    let rows: Vec<usize> = (0..t.values.nrows()).filter(|&i| Some(i) != exclude_row).collect();
    let sz: Vec<DatasetSize> = rows.iter().map(|&i| sizes[i]).collect();
    (0..t.values.ncols())
        .map(|j| {
            let times: Vec<f64> = rows.iter().map(|&i| t.values[(i, j)]).collect();
            fit_runtime(&sz, &times, model_ids[j], log_space)
        })
        .collect()
}

/// `max(t̂/t, t/t̂)` with both floored at [`MIN_TIME`].
pub fn ratio_error(predicted: f64, actual: f64) -> f64 {
    let (a, b) = (predicted.max(MIN_TIME), actual.max(MIN_TIME));
    (a / b).max(b / a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyAccuracy {
    pub family: String,
    pub count: usize,
    pub within_2: f64,
    pub within_4: f64,
}

/// Leave-one-dataset-out runtime accuracy per algorithm family, as
/// percentages of (dataset, model) cells predicted within a factor of 2 and 4.
pub fn runtime_accuracy_report(
    collection: &[ModelSpec],
    t: &RuntimeMatrix,
    sizes: &[DatasetSize],
    log_space: bool,
) -> Result<Vec<FamilyAccuracy>> {
    let (m, n) = t.values.shape();
    assert_eq!(collection.len(), n);
    let ratios: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            (0..m)
                .map(|i| {
                    let rows: Vec<usize> = (0..m).filter(|&r| r != i).collect();
                    let sz: Vec<DatasetSize> = rows.iter().map(|&r| sizes[r]).collect();
                    let times: Vec<f64> = rows.iter().map(|&r| t.values[(r, j)]).collect();
                    let f = fit_runtime(&sz, &times, collection[j].index, log_space)?;
                    Ok(ratio_error(f.predict(sizes[i].n, sizes[i].p), t.values[(i, j)]))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let mut families: Vec<&'static str> = Vec::new();
    for s in collection {
        if !families.contains(&s.algorithm.family()) {
            families.push(s.algorithm.family());
        }
    }
    Ok(families
        .into_iter()
        .map(|fam| {
            let r: Vec<f64> = (0..n)
                .filter(|&j| collection[j].algorithm.family() == fam)
                .flat_map(|j| ratios[j].iter().copied())
                .collect();
            let pct = |lim: f64| 100.0 * r.iter().filter(|&&x| x <= lim).count() as f64 / r.len().max(1) as f64;
            FamilyAccuracy {
                family: fam.to_owned(),
                count: r.len(),
                within_2: pct(2.0),
                within_4: pct(4.0),
            }
        })
        .collect())
}

pub fn write_accuracy_csv(path: &Path, rows: &[FamilyAccuracy]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.family.clone(), r.count.to_string(), fmt_f64(r.within_2), fmt_f64(r.within_4)])
        .collect();
    write_rows(path, &["family", "cells", "within_factor_2_pct", "within_factor_4_pct"], &body)
}

/// Everything the offline stage produces, stored under one directory.
#[derive(Debug, Clone)]
pub struct OfflineArtifacts {
    pub collection: Vec<ModelSpec>,
    pub errors: ErrorMatrix,
    pub runtimes: RuntimeMatrix,
    pub sizes: Vec<DatasetSize>,
    pub predictors: Vec<RuntimePredictor>,
}

pub const ERRORS_FILE: &str = "errors.csv";
pub const RUNTIMES_FILE: &str = "runtimes.csv";
pub const MASK_FILE: &str = "failure_mask.csv";
pub const DATASETS_FILE: &str = "datasets.csv";
pub const PREDICTORS_FILE: &str = "runtime_predictors.json";
pub const COLLECTION_FILE: &str = "collection.json";

impl OfflineArtifacts {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let cols: Vec<String> = self.errors.model_ids.iter().map(|j| j.to_string()).collect();
        let rows = &self.errors.dataset_ids;
        write_matrix_csv(&dir.join(ERRORS_FILE), "dataset", rows, &cols, &self.errors.values)?;
        write_matrix_csv(&dir.join(RUNTIMES_FILE), "dataset", rows, &cols, &self.runtimes.values)?;
        let mask = self.errors.failure_mask.map(|b| f64::from(u8::from(b)));
        write_matrix_csv(&dir.join(MASK_FILE), "dataset", rows, &cols, &mask)?;
        let sizes: Vec<Vec<String>> = rows
            .iter()
            .zip(&self.sizes)
            .map(|(name, s)| vec![name.clone(), s.n.to_string(), s.p.to_string()])
            .collect();
        write_rows(&dir.join(DATASETS_FILE), &["dataset", "n", "p"], &sizes)?;
        save_collection(&dir.join(COLLECTION_FILE), &self.collection)?;
        let path = dir.join(PREDICTORS_FILE);
        let json = serde_json::to_string_pretty(&self.predictors).map_err(|e| Error::json(&path, e))?;
        fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let e = read_matrix_csv(&dir.join(ERRORS_FILE))?;
        let t = read_matrix_csv(&dir.join(RUNTIMES_FILE))?;
        let model_ids = e
            .col_names
            .iter()
            .map(|c| c.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::MalformedInput {
                row: 1,
                column: 2,
                message: format!("{}: model ids must be integers", dir.join(ERRORS_FILE).display()),
            })?;
        if t.values.shape() != e.values.shape() || t.row_names != e.row_names {
            return Err(Error::InvalidArgument("error and runtime matrices are not aligned".into()));
        }
        let mask_path = dir.join(MASK_FILE);
        let failure_mask = if mask_path.exists() {
            read_matrix_csv(&mask_path)?.values.map(|v| v != 0.0)
        } else {
            DMatrix::from_element(e.values.nrows(), e.values.ncols(), false)
        };
        let sizes = read_sizes(&dir.join(DATASETS_FILE), &e.row_names)?;
        let collection = load_collection(&dir.join(COLLECTION_FILE))?;
        if collection.iter().map(|s| s.index).collect::<Vec<_>>() != model_ids {
            return Err(Error::InvalidArgument("collection does not match matrix columns".into()));
        }
        let path = dir.join(PREDICTORS_FILE);
        let text = fs::read_to_string(&path).map_err(|err| Error::io(&path, err))?;
        let predictors: Vec<RuntimePredictor> = serde_json::from_str(&text).map_err(|err| Error::json(&path, err))?;
        Ok(Self {
            collection,
            errors: ErrorMatrix {
                values: e.values,
                dataset_ids: e.row_names,
                model_ids,
                failure_mask,
            },
            runtimes: RuntimeMatrix { values: t.values },
            sizes,
            predictors,
        })
    }
}

fn read_sizes(path: &Path, names: &[String]) -> Result<Vec<DatasetSize>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |column| Error::MalformedInput {
            row: i + 2,
            column,
            message: format!("{}: bad size record", path.display()),
        };
        if rec.len() != 3 || names.get(i).map(String::as_str) != Some(&rec[0]) {
            return Err(bad(1));
        }
        out.push(DatasetSize {
            n: rec[1].parse().map_err(|_| bad(2))?,
            p: rec[2].parse().map_err(|_| bad(3))?,
        });
    }
    if out.len() != names.len() {
        return Err(Error::InvalidArgument(format!("{}: expected {} rows", path.display(), names.len())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{default_collection, Algorithm, CollectionSize};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(name: &str, n: usize, sep: f64, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let x = DMatrix::from_fn(n, 2, |i, _| labels[i] as f64 * sep + rng.random::<f64>());
        Dataset::new(name, x, labels, 2).unwrap()
    }

    fn sizes_grid() -> Vec<DatasetSize> {
        let mut out = Vec::new();
        for n in [50, 70, 95, 130, 170, 220, 300, 390, 500, 650, 800, 1000] {
            for p in [2, 4, 7, 10, 14] {
                out.push(DatasetSize { n, p });
            }
        }
        out
    }

    #[test]
    fn basis_has_twenty_monomials() {
        let e = exponents();
        assert_eq!(e.len(), BASIS_DIM);
        assert_eq!(e[0], (0, 0, 0));
        assert!(e.iter().all(|&(a, b, c)| a + b + c <= 3));
        let mut dedup = e.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), BASIS_DIM);
    }

    #[test]
    fn one_by_one_matrix_holds_fit_report() {
        let d = blobs("a", 20, 5.0, 1);
        let spec = ModelSpec::new(Algorithm::GaussianNb, 0);
        let (e, t) = build_matrices(std::slice::from_ref(&d), std::slice::from_ref(&spec), 5, 3).unwrap();
        let split = make_splits(&d.labels, 2, 5, 3).unwrap();
        let r = cross_validate(&spec, &d, &split).unwrap();
        assert_eq!(e.values.shape(), (1, 1));
        assert_eq!(e.values[(0, 0)], r.cv_error);
        assert!(t.values[(0, 0)] >= 0.0);
        assert_eq!(e.failures(), 0);
    }

    #[test]
    fn duplicated_dataset_gives_identical_rows() {
        let d = blobs("a", 30, 1.0, 2);
        let coll: Vec<ModelSpec> = default_collection(CollectionSize::Small).into_iter().take(10).collect();
        let (e, _) = build_matrices(&[d.clone(), d], &coll, 5, 9).unwrap();
        assert_eq!(e.row(0), e.row(1));
    }

    #[test]
    fn naive_bayes_beats_constant_tree_on_separable_blobs() {
        let corpus: Vec<Dataset> = (0..4).map(|i| blobs(&format!("b{i}"), 40, 4.0, i)).collect();
        let coll = vec![
            ModelSpec::new(Algorithm::GaussianNb, 0),
            ModelSpec::new(Algorithm::DecisionTree, 1).with("min_samples_split", 1000i64),
        ];
        let (e, _) = build_matrices(&corpus, &coll, 5, 0).unwrap();
        assert!(e.values.iter().all(|v| (0.0..=1.0).contains(v)));
        for i in 0..4 {
            assert!(e.values[(i, 0)] < e.values[(i, 1)]);
        }
    }

    #[test]
    fn linear_mode_is_exact_in_span() {
        let sizes = sizes_grid();
        let times: Vec<f64> = sizes.iter().map(|s| 2.0 + (s.n * s.p) as f64).collect();
        let f = fit_runtime(&sizes, &times, 0, false).unwrap();
        for (s, t) in sizes.iter().zip(&times) {
            assert!((f.predict(s.n, s.p) - t).abs() <= 1e-6 * t);
        }
        let g = fit_runtime(&sizes, &sizes.iter().map(|s| (s.n * s.p) as f64).collect::<Vec<_>>(), 0, false).unwrap();
        assert!((g.predict(10, 10) - 100.0).abs() <= 1e-6 * 100.0);
    }

    #[test]
    fn log_mode_is_exact_when_log_time_is_in_span() {
        let sizes = sizes_grid();
        // log t = 0.5·log n − 3 is a linear function of the log n monomial
        let times: Vec<f64> = sizes.iter().map(|s| (s.n as f64).sqrt() * (-3.0f64).exp()).collect();
        let f = fit_runtime(&sizes, &times, 0, true).unwrap();
        for (s, t) in sizes.iter().zip(&times) {
            assert!((f.predict(s.n, s.p) - t).abs() <= 1e-9 * t);
        }
    }

    #[test]
    fn constant_times_give_constant_predictor() {
        for sizes in [sizes_grid(), sizes_grid()[..5].to_vec()] {
            let f = fit_runtime(&sizes, &vec![0.7; sizes.len()], 3, true).unwrap();
            for (n, p) in [(10, 1), (1000, 40), (77, 3)] {
                assert!((f.predict(n, p) - 0.7).abs() < 1e-9, "{}", f.predict(n, p));
            }
        }
    }

    #[test]
    fn cubic_in_n_generalizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sizes: Vec<DatasetSize> = (0..30)
            .map(|_| DatasetSize {
                n: rng.random_range(50..2000),
                p: rng.random_range(2..20),
            })
            .collect();
        let times: Vec<f64> = sizes.iter().map(|s| 0.001 * (s.n as f64).powi(3)).collect();
        let f = fit_runtime(&sizes, &times, 0, true).unwrap();
        for n in [75, 333, 1500] {
            let ratio = f.predict(n, 7) / (0.001 * (n as f64).powi(3));
            assert!((0.5..=2.0).contains(&ratio), "n={n} ratio={ratio}");
        }
    }

    #[test]
    fn quadratic_predictor_is_monotone() {
        let sizes = sizes_grid();
        let times: Vec<f64> = sizes.iter().map(|s| (s.n as f64).powi(2)).collect();
        let f = fit_runtime(&sizes, &times, 0, true).unwrap();
        assert!(f.predict(200, 5) > f.predict(100, 5));
    }

    #[test]
    fn single_sample_is_rejected() {
        let r = fit_runtime(&[DatasetSize { n: 10, p: 2 }], &[1.0], 0, true);
        assert!(matches!(r, Err(Error::InsufficientData(_))));
    }

    #[test]
    fn accuracy_report_on_exact_times_is_perfect() {
        let sizes = sizes_grid();
        let coll: Vec<ModelSpec> = vec![
            ModelSpec::new(Algorithm::Knn, 0),
            ModelSpec::new(Algorithm::GaussianNb, 1),
        ];
        let t = RuntimeMatrix {
            values: DMatrix::from_fn(sizes.len(), 2, |i, j| {
                let s = sizes[i];
                1e-4 * (s.n as f64).powi(1 + j as i32) * s.p as f64
            }),
        };
        let rep = runtime_accuracy_report(&coll, &t, &sizes, true).unwrap();
        assert_eq!(rep.len(), 2);
        for r in rep {
            assert_eq!(r.within_2, 100.0);
            assert_eq!(r.within_4, 100.0);
        }
    }

    #[test]
    fn accuracy_report_on_random_times_is_imperfect() {
        let sizes = sizes_grid();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let coll = vec![ModelSpec::new(Algorithm::Knn, 0)];
        let t = RuntimeMatrix {
            values: DMatrix::from_fn(sizes.len(), 1, |_, _| 10f64.powf(rng.random_range(-3.0..1.0))),
        };
        let rep = runtime_accuracy_report(&coll, &t, &sizes, true).unwrap();
        // oracle: the same leave-one-out loop, written out directly
        let mut hits = 0;
        for i in 0..sizes.len() {
            let rows: Vec<usize> = (0..sizes.len()).filter(|&r| r != i).collect();
            let sz: Vec<DatasetSize> = rows.iter().map(|&r| sizes[r]).collect();
            let tt: Vec<f64> = rows.iter().map(|&r| t.values[(r, 0)]).collect();
            let f = fit_runtime(&sz, &tt, 0, true).unwrap();
            let (a, b) = (f.predict(sizes[i].n, sizes[i].p), t.values[(i, 0)]);
            if a / b <= 2.0 && b / a <= 2.0 {
                hits += 1;
            }
        }
        let expected = 100.0 * hits as f64 / sizes.len() as f64;
        assert_eq!(rep[0].within_2, expected);
        assert!(rep[0].within_2 < 60.0);
        assert!(rep[0].within_2 <= rep[0].within_4);
    }

    #[test]
    fn artifacts_round_trip() {
        let corpus: Vec<Dataset> = (0..3).map(|i| blobs(&format!("b{i}"), 20, 2.0, i)).collect();
        let coll: Vec<ModelSpec> = default_collection(CollectionSize::Small).into_iter().take(4).collect();
        let (errors, runtimes) = build_matrices(&corpus, &coll, 4, 1).unwrap();
        let sizes: Vec<DatasetSize> = corpus.iter().map(DatasetSize::of).collect();
        let predictors = fit_all_runtime(&runtimes, &sizes, &errors.model_ids, None, true).unwrap();
        let art = OfflineArtifacts {
            collection: coll,
            errors,
            runtimes,
            sizes,
            predictors,
        };
        let dir = tempfile::tempdir().unwrap();
        art.save(dir.path()).unwrap();
        let back = OfflineArtifacts::load(dir.path()).unwrap();
        assert_eq!(back.errors, art.errors);
        assert_eq!(back.runtimes, art.runtimes);
        assert_eq!(back.sizes, art.sizes);
        assert_eq!(back.predictors, art.predictors);
        assert_eq!(back.collection, art.collection);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn predictions_are_positive(seed in any::<u64>(), qn in 1usize..100_000, qp in 1usize..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sizes = sizes_grid();
            let times: Vec<f64> = sizes.iter().map(|_| rng.random_range(0.0..5.0)).collect();
            let f = fit_runtime(&sizes, &times, 0, true).unwrap();
            let v = f.predict(qn, qp);
            prop_assert!(v > 0.0 && v.is_finite());
        }
    }
}
