//! Low-rank structure of the error matrix.
//!
//! `factorize` splits `E = X Y` with `X = UΣ` (one row per dataset) and
//! `Y = Vᵀ` (one column per model). Truncating to the leading `k`
//! components gives the best rank-`k` approximation, and a new dataset is
//! placed in the latent space by least squares on a few observed entries.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lstsq_min_norm, svd};

#[derive(Debug, Clone)]
pub struct LatentFactors {
    /// `m × r`, row `i` is the latent vector of dataset `i`.
    pub x: DMatrix<f64>,
    /// `r × n`, column `j` is the latent vector of model `j`.
    pub y: DMatrix<f64>,
    /// Nonincreasing, length `r = min(m, n)`.
    pub singular_values: Vec<f64>,
}

impl LatentFactors {
    pub fn k_max(&self) -> usize {
        self.singular_values.len()
    }

    pub fn x_k(&self, k: usize) -> DMatrix<f64> {
        self.x.columns(0, k.min(self.k_max())).into_owned()
    }

    pub fn y_k(&self, k: usize) -> DMatrix<f64> {
        self.y.rows(0, k.min(self.k_max())).into_owned()
    }

    pub fn reconstruct(&self, k: usize) -> DMatrix<f64> {
        self.x_k(k) * self.y_k(k)
    }

    /// `√(Σ_{i>k} σ_i²)`, the optimal rank-`k` Frobenius error.
    pub fn tail_norm(&self, k: usize) -> f64 {
        self.singular_values.iter().skip(k).map(|s| s * s).sum::<f64>().sqrt()
    }
}

pub fn factorize(e: &DMatrix<f64>) -> LatentFactors {
    let dec = svd(e);
    let r = dec.rank();
    let mut x = dec.u.clone();
    for c in 0..r {
        x.column_mut(c).scale_mut(dec.singular_values[c]);
    }
    LatentFactors {
        x,
        y: dec.v.transpose(),
        singular_values: dec.singular_values.iter().copied().collect(),
    }
}

/// Number of singular values at least `threshold · σ₁`, clamped to `[1, cap]`.
pub fn select_rank(singular_values: &[f64], threshold: f64, cap: usize) -> usize {
    assert!(threshold > 0.0 && threshold < 1.0, "threshold must lie in (0, 1)");
    let Some(&top) = singular_values.first() else {
        return 1;
    };
    let count = singular_values.iter().filter(|&&s| s >= threshold * top).count();
    count.min(cap).max(1)
}

/// Minimum-norm least-squares `x̂` with `Y_Sᵀ x̂ ≈ e_S`.
///
/// `y_s` holds the latent vectors of the observed models as columns.
pub fn infer_latent(y_s: &DMatrix<f64>, e_s: &[f64]) -> Vec<f64> {
    assert_eq!(y_s.ncols(), e_s.len(), "one observation per selected column");
    lstsq_min_norm(&y_s.transpose(), &DVector::from_column_slice(e_s))
        .iter()
        .copied()
        .collect()
}

/// `ê_j = x̂ᵀ y_j` for every column of `y`.
pub fn impute(y: &DMatrix<f64>, x_hat: &[f64]) -> Vec<f64> {
    assert_eq!(y.nrows(), x_hat.len(), "latent dimension mismatch");
    (y.transpose() * DVector::from_column_slice(x_hat)).iter().copied().collect()
}

/// Prediction for a new dataset from observations on a subset of models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputedVector {
    pub latent: Vec<f64>,
    /// Unclamped `ê`; may leave `[0, 1]`.
    pub predicted: Vec<f64>,
    pub observed: Vec<(usize, f64)>,
}

impl ImputedVector {
    /// Infer and impute in one step; `y` is the `k × n` model factor.
    pub fn from_observations(y: &DMatrix<f64>, observed: &[(usize, f64)]) -> Self {
        let cols: Vec<usize> = observed.iter().map(|o| o.0).collect();
        let e_s: Vec<f64> = observed.iter().map(|o| o.1).collect();
        let latent = infer_latent(&y.select_columns(&cols), &e_s);
        let predicted = impute(y, &latent);
        Self {
            latent,
            predicted,
            observed: observed.to_vec(),
        }
    }

    pub fn clamped(&self) -> Vec<f64> {
        self.predicted.iter().map(|v| v.clamp(0.0, 1.0)).collect()
    }

    /// Indices whose raw prediction lies outside `[0, 1]`.
    pub fn out_of_range(&self) -> Vec<usize> {
        (0..self.predicted.len())
            .filter(|&j| !(0.0..=1.0).contains(&self.predicted[j]))
            .collect()
    }
}

const NMF_EPS: f64 = 1e-12;
const NMF_INIT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct NmfFactors {
    /// `m × k`, nonnegative.
    pub w: DMatrix<f64>,
    /// `k × n`, nonnegative.
    pub h: DMatrix<f64>,
    /// `‖E − WH‖_F` at the start and after every iteration.
    pub objective: Vec<f64>,
}

impl NmfFactors {
    /// Cluster of each model: the row holding the largest entry of its
    /// column of `H` (lowest row on ties).
    pub fn clusters(&self) -> Vec<usize> {
        (0..self.h.ncols())
            .map(|j| {
                let col: Vec<f64> = self.h.column(j).iter().copied().collect();
                crate::learners::argmax(&col)
            })
            .collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.h.nrows()];
        for c in self.clusters() {
            sizes[c] += 1;
        }
        sizes
    }
}

/// Lee–Seung multiplicative updates for `min ‖E − WH‖_F` with `W, H ≥ 0`.
///
/// Starts from the absolute values of the truncated SVD factors (singular
/// values split evenly between the two sides) floored at 1e-6, plus seeded
/// jitter below the floor. Both numerator and denominator of each update
/// carry 1e-12 so zero rows or columns stay finite; the update is still a
/// majorize-minimize step, so the objective does not increase.
pub fn nmf(e: &DMatrix<f64>, k: usize, iters: usize, seed: u64) -> Result<NmfFactors> {
    if k == 0 {
        return Err(Error::InvalidArgument("nmf rank must be at least 1".into()));
    }
    if e.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidArgument("nmf needs a finite nonnegative matrix".into()));
    }
    let (m, n) = e.shape();
    let dec = svd(e);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = (e.iter().sum::<f64>() / (m * n).max(1) as f64).max(NMF_INIT_FLOOR);
    let mut w = DMatrix::zeros(m, k);
    let mut h = DMatrix::zeros(k, n);
    for c in 0..k {
        let s = if c < dec.rank() { dec.singular_values[c].sqrt() } else { 0.0 };
        for i in 0..m {
            let base = if c < dec.rank() { (dec.u[(i, c)] * s).abs() } else { scale.sqrt() * rng.random::<f64>() };
            w[(i, c)] = base.max(NMF_INIT_FLOOR) + NMF_INIT_FLOOR * rng.random::<f64>();
        }
        for j in 0..n {
            let base = if c < dec.rank() { (dec.v[(j, c)] * s).abs() } else { scale.sqrt() * rng.random::<f64>() };
            h[(c, j)] = base.max(NMF_INIT_FLOOR) + NMF_INIT_FLOOR * rng.random::<f64>();
        }
    }

    let objective_of = |w: &DMatrix<f64>, h: &DMatrix<f64>| (e - w * h).norm();
    let mut objective = Vec::with_capacity(iters + 1);
    objective.push(objective_of(&w, &h));
    for _ in 0..iters {
        let num = w.transpose() * e;
        let den = w.transpose() * &w * &h;
        h.zip_zip_apply(&num, &den, |hv, a, b| *hv *= (a + NMF_EPS) / (b + NMF_EPS));
        let num = e * h.transpose();
        let den = &w * (&h * h.transpose());
        w.zip_zip_apply(&num, &den, |wv, a, b| *wv *= (a + NMF_EPS) / (b + NMF_EPS));
        objective.push(objective_of(&w, &h));
    }
    Ok(NmfFactors { w, h, objective })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_matrix(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, _| rng.random::<f64>())
    }

    /// Singular values from the eigenvalues of `AᵀA`.
    fn eigen_oracle(a: &DMatrix<f64>) -> Vec<f64> {
        let g = if a.nrows() >= a.ncols() { a.transpose() * a } else { a * a.transpose() };
        let mut ev: Vec<f64> = SymmetricEigen::new(g).eigenvalues.iter().map(|v| v.max(0.0).sqrt()).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    #[test]
    fn outer_product_has_rank_one() {
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let v = DVector::from_vec(vec![0.5, -1.0, 4.0, 2.0]);
        let e = &u * v.transpose();
        let f = factorize(&e);
        assert!(f.singular_values[1].abs() < 1e-12);
        assert!((f.reconstruct(1) - &e).norm() < 1e-12 * e.norm());
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let f = factorize(&DMatrix::identity(3, 3));
        for s in f.singular_values {
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_matrix_is_rank_one() {
        let f = factorize(&DMatrix::from_element(4, 3, 0.25));
        assert!(f.singular_values[0] > 0.0);
        assert!(f.singular_values[1..].iter().all(|s| s.abs() < 1e-14));
    }

    #[test]
    fn random_eight_by_six_matches_eckart_young_and_oracle() {
        let e = random_matrix(8, 6, 11);
        let f = factorize(&e);
        let oracle = eigen_oracle(&e);
        for (a, b) in f.singular_values.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8 * oracle[0]);
        }
        for k in 0..=6 {
            let err = (&e - f.reconstruct(k)).norm();
            let tail: f64 = oracle.iter().skip(k).map(|s| s * s).sum::<f64>().sqrt();
            assert!((err - tail).abs() <= 1e-6 * tail + 1e-12 * e.norm(), "k={k}");
        }
    }

    #[test]
    fn model_side_sign_convention() {
        let f = factorize(&random_matrix(5, 7, 3));
        for r in 0..f.k_max() {
            let row: Vec<f64> = f.y.row(r).iter().copied().collect();
            let big = row.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn rank_thresholds() {
        let s = [10.0, 5.0, 0.05];
        assert_eq!(select_rank(&s, 0.005, 10), 3);
        assert_eq!(select_rank(&s, 0.01, 10), 2);
        assert_eq!(select_rank(&s, 0.03, 10), 2);
        assert_eq!(select_rank(&s, 0.6, 10), 1);
        assert_eq!(select_rank(&s, 0.01, 2), 2);
        assert_eq!(select_rank(&[0.0, 0.0], 0.01, 5), 2);
        assert_eq!(select_rank(&[], 0.01, 5), 1);
    }

    #[test]
    fn scalar_inference() {
        let y = DMatrix::from_row_slice(1, 1, &[4.0]);
        assert!((infer_latent(&y, &[2.0])[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn consistent_two_by_two_is_recovered() {
        let y = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, -1.0]);
        let x = [0.3, -0.7];
        let e_s = impute(&y, &x);
        let got = infer_latent(&y, &e_s);
        for (a, b) in got.iter().zip(x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn overdetermined_residual_matches_normal_equations() {
        // Y_Sᵀ = [[1,0],[0,1],[1,1]], e = (1, 2, 4)
        // normal equations [[2,1],[1,2]] x = (5, 6) → x = (4/3, 7/3)
        let y_s = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let e = [1.0, 2.0, 4.0];
        let x = infer_latent(&y_s, &e);
        assert!((x[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((x[1] - 7.0 / 3.0).abs() < 1e-12);
        let fit = impute(&y_s, &x);
        let resid: f64 = fit.iter().zip(e).map(|(a, b)| (a - b).powi(2)).sum();
        // residual (-1/3, 1/3, -1/3)
        assert!((resid - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_latent_imputes_zero() {
        let y = random_matrix(3, 5, 1);
        assert!(impute(&y, &[0.0; 3]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rank_k_row_is_recovered_from_k_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DMatrix::from_fn(12, 2, |_, _| rng.random::<f64>());
        let b = DMatrix::from_fn(2, 9, |_, _| rng.random::<f64>());
        let e = &a * &b;
        let train = e.rows(0, 11).into_owned();
        let truth: Vec<f64> = e.row(11).iter().copied().collect();
        let f = factorize(&train);
        let y = f.y_k(2);
        let obs = vec![(1, truth[1]), (6, truth[6])];
        let imp = ImputedVector::from_observations(&y, &obs);
        for (p, t) in imp.predicted.iter().zip(&truth) {
            assert!((p - t).abs() < 1e-6 * t.abs().max(1e-3));
        }
    }

    #[test]
    fn clamped_view_keeps_raw_values() {
        let imp = ImputedVector {
            latent: vec![],
            predicted: vec![-0.2, 0.5, 1.3],
            observed: vec![],
        };
        assert_eq!(imp.clamped(), vec![0.0, 0.5, 1.0]);
        assert_eq!(imp.out_of_range(), vec![0, 2]);
        assert_eq!(imp.predicted[2], 1.3);
    }

    #[test]
    fn nmf_recovers_rank_one() {
        let w = DVector::from_vec(vec![0.2, 0.9, 0.5, 0.1]);
        let h = DVector::from_vec(vec![0.3, 0.6, 0.2, 0.8, 0.4]);
        let e = &w * h.transpose();
        let f = nmf(&e, 1, 500, 0).unwrap();
        assert!((&e - &f.w * &f.h).norm() <= 1e-3 * e.norm());
    }

    #[test]
    fn nmf_full_rank_is_close_to_svd_bound() {
        let e = random_matrix(6, 5, 9);
        let k = 5;
        let f = nmf(&e, k, 2000, 1).unwrap();
        let svd_err = factorize(&e).tail_norm(k);
        let err = *f.objective.last().unwrap();
        assert!(err <= svd_err + 0.1 * e.norm(), "{err} vs {svd_err}");
    }

    #[test]
    fn nmf_handles_zero_row_and_column() {
        let mut e = random_matrix(4, 4, 2);
        e.row_mut(1).fill(0.0);
        e.column_mut(2).fill(0.0);
        let f = nmf(&e, 2, 200, 0).unwrap();
        assert!(f.w.iter().chain(f.h.iter()).all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn nmf_rejects_negative_entries() {
        let e = DMatrix::from_row_slice(1, 2, &[0.5, -0.1]);
        assert!(nmf(&e, 1, 10, 0).is_err());
    }

    #[test]
    fn nmf_two_blocks_cluster_apart() {
        let e = DMatrix::from_fn(6, 8, |i, j| if (i < 3) == (j < 4) { 0.9 } else { 0.05 });
        let f = nmf(&e, 2, 300, 0).unwrap();
        let c = f.clusters();
        assert!(c[..4].iter().all(|&v| v == c[0]));
        assert!(c[4..].iter().all(|&v| v == c[4]));
        assert_ne!(c[0], c[4]);
        assert_eq!(f.cluster_sizes().iter().sum::<usize>(), 8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn truncation_is_nested(m in 2usize..9, n in 2usize..9, seed in any::<u64>()) {
            let e = random_matrix(m, n, seed);
            let f = factorize(&e);
            for k in 1..=f.k_max() {
                let g = factorize(&e);
                prop_assert_eq!(g.x_k(k), f.x.columns(0, k).into_owned());
                prop_assert_eq!(g.y_k(k), f.y.rows(0, k).into_owned());
            }
            prop_assert!((f.reconstruct(f.k_max()) - &e).norm() <= 1e-8 * e.norm().max(1e-300));
        }

        #[test]
        fn eckart_young_holds(m in 1usize..12, n in 1usize..12, seed in any::<u64>()) {
            let e = random_matrix(m, n, seed);
            let f = factorize(&e);
            for k in 0..=f.k_max() {
                let err2 = (&e - f.reconstruct(k)).norm_squared();
                let tail2 = f.tail_norm(k).powi(2);
                prop_assert!((err2 - tail2).abs() <= 1e-6 * tail2 + 1e-12 * e.norm_squared());
            }
        }

        #[test]
        fn nmf_objective_never_increases(m in 2usize..8, n in 2usize..8, k in 1usize..4, seed in any::<u64>()) {
            let e = random_matrix(m, n, seed);
            let f = nmf(&e, k, 100, seed).unwrap();
            for w in f.objective.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-10);
            }
            prop_assert!(f.w.iter().chain(f.h.iter()).all(|v| *v >= 0.0));
        }
    }
}
