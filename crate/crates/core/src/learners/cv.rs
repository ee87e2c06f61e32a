use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metric::ber;
use super::{fit_model, ModelSpec};
use crate::corpus::{majority_label, CvSplit, Dataset};
use crate::error::{Error, Result};

/// Outcome of cross-validating one model on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Balanced error rate over the concatenated held-out predictions.
    pub cv_error: f64,
    /// Total fit + predict time in seconds (monotonic clock).
    pub wall_time: f64,
    /// Held-out prediction for every data point.
    pub fold_predictions: Vec<usize>,
    /// Folds where the learner failed and the majority class was predicted.
    pub failed_folds: Vec<usize>,
}

impl FitReport {
    pub fn all_failed(&self, n_folds: usize) -> bool {
        n_folds > 0 && self.failed_folds.len() == n_folds
    }
}

/// Per-(model, fold) learner seed; a pure function of its inputs.
pub(crate) fn learner_seed(base: u64, model_index: usize, fold: usize) -> u64 {
    base ^ (model_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (fold as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Train on each fold complement and predict the held-out fold.
///
/// A learner error on a fold is not fatal: that fold is predicted as the
/// majority class of its training part and listed in `failed_folds`.
pub fn cross_validate(model: &ModelSpec, d: &Dataset, split: &CvSplit) -> Result<FitReport> {
    if split.folds.len() != d.n_points() {
        return Err(Error::InvalidArgument(format!(
            "split covers {} points but dataset `{}` has {}",
            split.folds.len(),
            d.name,
            d.n_points()
        )));
    }
    let start = Instant::now();
    let mut predictions = vec![usize::MAX; d.n_points()];
    let mut failed = Vec::new();
    for fold in 0..split.n_folds {
        let test = split.test_indices(fold);
        if test.is_empty() {
            continue;
        }
        let train = split.train_indices(fold);
        let tr = d.subset(&train);
        let te = d.subset(&test);
        let seed = learner_seed(split.seed, model.index, fold);
        let fold_pred = match fit_model(model, &tr.features, &tr.labels, d.n_classes(), seed) {
            Ok(m) => m.predict(&te.features),
            Err(Error::Learner(_)) => {
                failed.push(fold);
                vec![majority_label(&tr.labels, d.n_classes()); test.len()]
            }
            Err(e) => return Err(e),
        };
        for (&i, p) in test.iter().zip(fold_pred) {
            predictions[i] = p;
        }
    }
    let wall_time = start.elapsed().as_secs_f64();
    Ok(FitReport {
        cv_error: ber(&d.labels, &predictions, d.n_classes()),
        wall_time,
        fold_predictions: predictions,
        failed_folds: failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::make_splits;
    use crate::learners::Algorithm;
    use nalgebra::DMatrix;

    #[test]
    fn one_nn_on_clustered_points_is_perfect() {
        // pairs of near-identical points sharing a label
        let vals: Vec<f64> = (0..20).map(|i| (i / 2) as f64 * 10.0 + (i % 2) as f64 * 0.01).collect();
        let labels: Vec<usize> = (0..20).map(|i| (i / 2) % 2).collect();
        let d = Dataset::new("pairs", DMatrix::from_column_slice(20, 1, &vals), labels.clone(), 2).unwrap();
        // folds keep each pair apart so a held-out point always has its twin
        let split = CvSplit {
            n_folds: 2,
            folds: (0..20).map(|i| i % 2).collect(),
            seed: 0,
        };
        let spec = ModelSpec::new(Algorithm::Knn, 0).with("n_neighbors", 1i64).with("p", 2i64);
        let r = cross_validate(&spec, &d, &split).unwrap();
        assert_eq!(r.cv_error, 0.0);
        assert!(r.wall_time >= 0.0);
        assert!(r.fold_predictions.iter().all(|&p| p < 2));
    }

    #[test]
    fn single_leaf_tree_on_balanced_binary_scores_half() {
        let vals: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let d = Dataset::new("b", DMatrix::from_column_slice(20, 1, &vals), labels.clone(), 2).unwrap();
        let split = make_splits(&labels, 2, 5, 0).unwrap();
        // a split threshold larger than the dataset makes the tree constant
        let spec = ModelSpec::new(Algorithm::DecisionTree, 0).with("min_samples_split", 1000i64);
        let r = cross_validate(&spec, &d, &split).unwrap();
        assert_eq!(r.cv_error, 0.5);
    }

    #[test]
    fn cross_validation_is_deterministic() {
        let vals: Vec<f64> = (0..30).map(|i| ((i * 7) % 13) as f64).collect();
        let labels: Vec<usize> = (0..30).map(|i| usize::from(i % 3 == 0)).collect();
        let d = Dataset::new("d", DMatrix::from_column_slice(30, 1, &vals), labels.clone(), 2).unwrap();
        let split = make_splits(&labels, 2, 5, 4).unwrap();
        let spec = ModelSpec::new(Algorithm::RandomForestLite, 3)
            .with("min_samples_split", 2i64)
            .with("criterion", "gini");
        let a = cross_validate(&spec, &d, &split).unwrap();
        let b = cross_validate(&spec, &d, &split).unwrap();
        assert_eq!(a.fold_predictions, b.fold_predictions);
        assert_eq!(a.cv_error, b.cv_error);
    }

    #[test]
    fn mismatched_split_is_rejected() {
        let d = Dataset::new("d", DMatrix::zeros(4, 1), vec![0, 1, 0, 1], 2).unwrap();
        let split = CvSplit {
            n_folds: 2,
            folds: vec![0, 1],
            seed: 0,
        };
        assert!(cross_validate(&ModelSpec::new(Algorithm::GaussianNb, 0), &d, &split).is_err());
    }
}
