//! Dense kernels used by the factorization and selection modules.
//!
//! Matrices here are small (at most a few hundred on a side), so everything
//! favours accuracy over speed: the SVD is a one-sided Jacobi iteration that
//! orthogonalizes columns until every pair is orthogonal to working precision.

use nalgebra::{DMatrix, DVector};

const JACOBI_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `A = U diag(s) Vᵀ`.
///
/// `u` is `m × r`, `v` is `n × r` with `r = min(m, n)`, and both have
/// orthonormal columns even where singular values vanish. Singular values
/// are sorted nonincreasing.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Reconstruct the rank-`k` truncation `U_k diag(s_k) V_kᵀ`.
    pub fn truncated(&self, k: usize) -> DMatrix<f64> {
        let k = k.min(self.rank());
        let us = self.u.columns(0, k) * DMatrix::from_diagonal(&self.singular_values.rows(0, k).into_owned());
        us * self.v.columns(0, k).transpose()
    }
}

/// One-sided Jacobi SVD.
///
/// The model-side vectors (columns of `v`) follow a fixed sign convention:
/// each is flipped so its largest-magnitude entry is positive, with the
/// matching column of `u` flipped alongside.
pub fn svd(a: &DMatrix<f64>) -> Svd {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Svd {
            u: DMatrix::zeros(m, 0),
            singular_values: DVector::zeros(0),
            v: DMatrix::zeros(n, 0),
        };
    }
    let (u, s, v) = if m >= n {
        jacobi_tall(a)
    } else {
        let (u_t, s, v_t) = jacobi_tall(&a.transpose());
        (v_t, s, u_t)
    };
    let mut out = Svd {
        u,
        singular_values: s,
        v,
    };
    orient(&mut out);
    out
}

/// Jacobi on a tall (`m >= n`) matrix; returns `(U m×n, s, V n×n)`.
fn jacobi_tall(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let (m, n) = a.shape();
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j).iter().copied().collect()).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for i in 0..m {
                        alpha += cp[i] * cp[i];
                        beta += cq[i] * cq[i];
                        gamma += cp[i] * cq[i];
                    }
                    (alpha, beta, gamma)
                };
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut cols, p, q, c, s);
                rotate_pair(&mut vcols, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));

    let smax = norms[order[0]];
    let cutoff = smax * f64::EPSILON * (m.max(n) as f64);
    let mut ucols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut s = DVector::zeros(n);
    let mut degenerate = Vec::new();
    for (rank, &j) in order.iter().enumerate() {
        s[rank] = norms[j];
        if norms[j] > cutoff && norms[j] > 0.0 {
            ucols.push(cols[j].iter().map(|x| x / norms[j]).collect());
        } else {
            ucols.push(vec![0.0; m]);
            degenerate.push(rank);
        }
    }
    complete_orthonormal(&mut ucols, &degenerate);

    let u = DMatrix::from_fn(m, n, |i, r| ucols[r][i]);
    let v = DMatrix::from_fn(n, n, |i, r| vcols[order[r]][i]);
    (u, s, v)
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (xp, xq) in cp.iter_mut().zip(cq.iter_mut()) {
        let a = *xp;
        let b = *xq;
        *xp = c * a - s * b;
        *xq = s * a + c * b;
    }
}

/// Replace the listed columns by unit vectors orthogonal to all others.
fn complete_orthonormal(cols: &mut [Vec<f64>], slots: &[usize]) {
    if slots.is_empty() {
        return;
    }
    let dim = cols[0].len();
    let mut candidate = 0;
    for &slot in slots {
        loop {
            assert!(candidate < dim, "cannot complete orthonormal basis");
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            // two passes of modified Gram-Schmidt
            for _ in 0..2 {
                for (idx, c) in cols.iter().enumerate() {
                    // not-yet-completed slots are zero and project to nothing
                    if idx == slot {
                        continue;
                    }
                    let d = dot(&e, c);
                    for (ei, ci) in e.iter_mut().zip(c) {
                        *ei -= d * ci;
                    }
                }
            }
            let nrm = norm(&e);
            if nrm > 1e-8 {
                cols[slot] = e.into_iter().map(|x| x / nrm).collect();
                break;
            }
        }
    }
}

fn orient(svd: &mut Svd) {
    for r in 0..svd.rank() {
        let col = svd.v.column(r);
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            svd.v.column_mut(r).neg_mut();
            svd.u.column_mut(r).neg_mut();
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Minimum-norm least-squares solution of `A x ≈ b` via the pseudoinverse.
pub fn lstsq_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    assert_eq!(a.nrows(), b.len(), "lstsq: dimension mismatch");
    let n = a.ncols();
    if a.nrows() == 0 || n == 0 {
        return DVector::zeros(n);
    }
    let dec = svd(a);
    let smax = dec.singular_values[0];
    let tol = smax * f64::EPSILON * (a.nrows().max(n) as f64);
    let utb = dec.u.transpose() * b;
    let mut scaled = DVector::zeros(dec.rank());
    for r in 0..dec.rank() {
        let s = dec.singular_values[r];
        if s > tol {
            scaled[r] = utb[r] / s;
        }
    }
    &dec.v * scaled
}

/// Numerical rank with relative tolerance against the largest singular value.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let dec = svd(a);
    let smax = dec.singular_values[0];
    if smax == 0.0 {
        return 0;
    }
    dec.singular_values.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Result of Householder QR with column pivoting.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// Column indices of the input in pivot order; a permutation of `0..n`.
    pub pivots: Vec<usize>,
    /// `|R_ii|` for the `min(m, n)` elimination steps.
    pub r_diag: Vec<f64>,
}

/// Businger–Golub column-pivoted QR.
///
/// Each step picks the remaining column with the largest residual norm (ties
/// to the lowest original index). Columns never reached by elimination are
/// appended in decreasing order of their original norm.
pub fn pivoted_qr(a: &DMatrix<f64>) -> PivotedQr {
    let (m, n) = a.shape();
    let mut w = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let steps = m.min(n);
    let mut r_diag = Vec::with_capacity(steps);

    for i in 0..steps {
        let mut best = i;
        let mut best_norm = -1.0;
        for j in i..n {
            let nrm = w.view((i, j), (m - i, 1)).norm();
            let better = nrm > best_norm * (1.0 + 1e-12) + 1e-300
                || ((nrm - best_norm).abs() <= 1e-12 * best_norm.max(1e-300) && perm[j] < perm[best]);
            if better {
                best = j;
                best_norm = nrm;
            }
        }
        if best != i {
            w.swap_columns(i, best);
            perm.swap(i, best);
        }
        // Householder reflector for column i, rows i..m
        let x: Vec<f64> = (i..m).map(|r| w[(r, i)]).collect();
        let alpha = norm(&x);
        r_diag.push(alpha);
        if alpha == 0.0 {
            continue;
        }
        let sign = if x[0] >= 0.0 { 1.0 } else { -1.0 };
        let mut v = x.clone();
        v[0] += sign * alpha;
        let vnorm2 = dot(&v, &v);
        if vnorm2 == 0.0 {
            continue;
        }
        for j in i..n {
            let mut d = 0.0;
            for (r, vr) in v.iter().enumerate() {
                d += vr * w[(i + r, j)];
            }
            let f = 2.0 * d / vnorm2;
            for (r, vr) in v.iter().enumerate() {
                w[(i + r, j)] -= f * vr;
            }
        }
    }

    if steps < n {
        let mut rest: Vec<usize> = perm[steps..].to_vec();
        let col_norm = |j: usize| a.column(j).norm();
        rest.sort_by(|&x, &y| col_norm(y).total_cmp(&col_norm(x)).then(x.cmp(&y)));
        perm.truncate(steps);
        perm.extend(rest);
    }

    PivotedQr {
        pivots: perm,
        r_diag,
    }
}

/// Incremental Gram–Schmidt basis used to test whether a vector adds a new
/// direction to a span.
#[derive(Debug, Clone)]
pub struct RankTracker {
    dim: usize,
    basis: Vec<Vec<f64>>,
    rel_tol: f64,
}

impl RankTracker {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            basis: Vec::new(),
            rel_tol: 1e-9,
        }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn is_full(&self) -> bool {
        self.basis.len() >= self.dim
    }

    fn residual(&self, v: &[f64]) -> Vec<f64> {
        let mut r = v.to_vec();
        for _ in 0..2 {
            for b in &self.basis {
                let d = dot(&r, b);
                for (ri, bi) in r.iter_mut().zip(b) {
                    *ri -= d * bi;
                }
            }
        }
        r
    }

    /// Would adding `v` increase the rank?
    pub fn increases(&self, v: &[f64]) -> bool {
        let n0 = norm(v);
        n0 > 0.0 && norm(&self.residual(v)) > self.rel_tol * n0
    }

    /// Add `v`; returns whether the rank increased.
    pub fn push(&mut self, v: &[f64]) -> bool {
        debug_assert_eq!(v.len(), self.dim);
        let n0 = norm(v);
        if n0 == 0.0 {
            return false;
        }
        let r = self.residual(v);
        let nr = norm(&r);
        if nr > self.rel_tol * n0 {
            self.basis.push(r.into_iter().map(|x| x / nr).collect());
            true
        } else {
            false
        }
    }
}
