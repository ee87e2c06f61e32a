//! Choosing which models to probe on a new dataset.
//!
//! The main method is budgeted experiment design: relax the choice of a set
//! `S` to weights `v ∈ [0, 1]ⁿ` under a knapsack constraint, minimise a
//! scalarisation of `(Σ v_j y_j y_jᵀ)⁻¹` by Frank–Wolfe, then round.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{pivoted_qr, RankTracker};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Total predicted seconds.
    Time(f64),
    /// Number of models.
    Count(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scalarization {
    /// `log det G⁻¹`
    D,
    /// `trace G⁻¹`
    A,
    /// `λ_max(G⁻¹)`
    E,
}

/// One experiment-design instance.
#[derive(Debug, Clone)]
pub struct DesignProblem {
    /// `k × n`, column `j` is `y_j`.
    pub y: DMatrix<f64>,
    pub t_hat: Vec<f64>,
    pub budget: Budget,
    pub scalarization: Scalarization,
    /// `k × b` latent vectors already observed; they enter the Gram matrix
    /// with weight one.
    pub fixed: DMatrix<f64>,
    /// Ridge added to the Gram matrix.
    pub eps: f64,
}

impl DesignProblem {
    /// `eps` defaults to 1e-8 times the mean diagonal of `Y Yᵀ`.
    pub fn new(y: DMatrix<f64>, t_hat: Vec<f64>, budget: Budget, scalarization: Scalarization) -> Self {
        assert_eq!(y.ncols(), t_hat.len(), "one runtime per model");
        let k = y.nrows();
        let mean_diag = if k == 0 { 0.0 } else { (&y * y.transpose()).trace() / k as f64 };
        let eps = if mean_diag > 0.0 { 1e-8 * mean_diag } else { 1e-8 };
        Self {
            fixed: DMatrix::zeros(k, 0),
            y,
            t_hat,
            budget,
            scalarization,
            eps,
        }
    }

    pub fn with_fixed(mut self, fixed: DMatrix<f64>) -> Self {
        assert_eq!(fixed.nrows(), self.y.nrows());
        self.fixed = fixed;
        self
    }

    pub fn k(&self) -> usize {
        self.y.nrows()
    }

    pub fn n(&self) -> usize {
        self.y.ncols()
    }

    /// Per-model cost and total capacity of the knapsack.
    fn knapsack(&self) -> (Vec<f64>, f64) {
        match self.budget {
            Budget::Time(tau) => (self.t_hat.clone(), tau),
            Budget::Count(n) => (vec![1.0; self.n()], n as f64),
        }
    }

    /// Whether the `k` cheapest models fit the budget.
    pub fn cheapest_k_fit(&self) -> bool {
        match self.budget {
            Budget::Count(n) => n >= self.k().min(self.n()),
            Budget::Time(tau) => {
                let mut t = self.t_hat.clone();
                t.sort_by(f64::total_cmp);
                t.iter().take(self.k()).sum::<f64>() <= tau
            }
        }
    }

    /// `fixed fixedᵀ + Σ v_j y_j y_jᵀ + εI`
    pub fn gram(&self, v: &[f64]) -> DMatrix<f64> {
        let k = self.k();
        let mut g = &self.fixed * self.fixed.transpose();
        for (j, &w) in v.iter().enumerate() {
            if w != 0.0 {
                let col = self.y.column(j);
                for a in 0..k {
                    let ya = w * col[a];
                    for b in 0..k {
                        g[(a, b)] += ya * col[b];
                    }
                }
            }
        }
        for a in 0..k {
            g[(a, a)] += self.eps;
        }
        g
    }

    pub fn objective(&self, v: &[f64]) -> f64 {
        design_objective(&self.gram(v), self.scalarization)
    }

    /// Objective of the integral selection `S`.
    pub fn objective_of_set(&self, s: &[usize]) -> f64 {
        self.objective(&indicator(self.n(), s))
    }

    /// `∂f/∂v_j` for every model.
    pub fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let g = self.gram(v);
        let cols = self.y.columns(0, self.n());
        match self.scalarization {
            Scalarization::D | Scalarization::A => {
                let inv = spd_inverse(&g);
                let w = if self.scalarization == Scalarization::D { inv } else { &inv * &inv };
                let wy = &w * cols;
                (0..self.n()).map(|j| -self.y.column(j).dot(&wy.column(j))).collect()
            }
            Scalarization::E => {
                let eig = SymmetricEigen::new(g);
                let (idx, lmin) = min_eigen(&eig.eigenvalues.as_slice().to_vec());
                let u = eig.eigenvectors.column(idx);
                (0..self.n())
                    .map(|j| -(u.dot(&self.y.column(j))).powi(2) / (lmin * lmin))
                    .collect()
            }
        }
    }
}

fn indicator(n: usize, s: &[usize]) -> Vec<f64> {
    let mut v = vec![0.0; n];
    for &j in s {
        v[j] = 1.0;
    }
    v
}

fn min_eigen(vals: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &x) in vals.iter().enumerate() {
        if x < vals[best] {
            best = i;
        }
    }
    (best, vals[best])
}

fn spd_inverse(g: &DMatrix<f64>) -> DMatrix<f64> {
    match g.clone().cholesky() {
        Some(c) => c.inverse(),
        None => g.clone().pseudo_inverse(0.0).unwrap_or_else(|_| DMatrix::zeros(g.nrows(), g.ncols())),
    }
}

/// Scalarised covariance of a regularised Gram matrix `G`.
///
/// D: `−log det G`; A: `trace G⁻¹`; E: `1 / λ_min(G)`. Returns `+∞` when
/// `G` is not positive definite.
pub fn design_objective(g: &DMatrix<f64>, s: Scalarization) -> f64 {
    match s {
        Scalarization::D => match g.clone().cholesky() {
            Some(c) => -2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
            None => f64::INFINITY,
        },
        Scalarization::A => match g.clone().cholesky() {
            Some(c) => c.inverse().trace(),
            None => f64::INFINITY,
        },
        Scalarization::E => {
            let vals = SymmetricEigen::new(g.clone()).eigenvalues;
            let (_, lmin) = min_eigen(vals.as_slice());
            if lmin > 0.0 {
                1.0 / lmin
            } else {
                f64::INFINITY
            }
        }
    }
}

/// Relaxed design weights with the Frank–Wolfe duality gap at exit.
#[derive(Debug, Clone, PartialEq)]
pub struct Relaxation {
    pub v: Vec<f64>,
    pub objective: f64,
    pub gap: f64,
    pub iterations: usize,
}

pub const DEFAULT_ITERS: usize = 500;
pub const DEFAULT_TOL: f64 = 1e-6;

fn check_feasible(p: &DesignProblem) -> Result<()> {
    match p.budget {
        Budget::Count(0) => Err(Error::InfeasibleBudget { budget: 0.0 }),
        Budget::Count(_) => Ok(()),
        Budget::Time(tau) => {
            if p.t_hat.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                return Err(Error::InvalidArgument("predicted runtimes must be positive".into()));
            }
            if !(tau > 0.0) || p.t_hat.iter().all(|&t| t > tau) {
                return Err(Error::InfeasibleBudget { budget: tau });
            }
            Ok(())
        }
    }
}

/// Linear minimisation over `{v ∈ [0,1]ⁿ : cᵀv ≤ B}`: fill models with the
/// most negative gradient per unit cost first; at most one fractional entry.
fn lmo(g: &[f64], cost: &[f64], cap: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..g.len()).filter(|&j| g[j] < 0.0).collect();
    order.sort_by(|&a, &b| (g[a] / cost[a]).total_cmp(&(g[b] / cost[b])).then(a.cmp(&b)));
    let mut s = vec![0.0; g.len()];
    let mut left = cap;
    for j in order {
        if left <= 0.0 {
            break;
        }
        let take = (left / cost[j]).min(1.0);
        s[j] = take;
        left -= take * cost[j];
    }
    s
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimise `φ` on `[0, hi]` by golden-section search.
fn line_search(phi: impl Fn(f64) -> f64, hi: f64) -> f64 {
    const R: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - R * (b - a);
    let mut d = a + R * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    for _ in 0..80 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - R * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + R * (b - a);
            fd = phi(d);
        }
    }
    let mid = 0.5 * (a + b);
    // the minimiser may sit on the boundary
    [(phi(hi), hi), (phi(mid), mid), (phi(0.0), 0.0)]
        .into_iter()
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .unwrap()
        .1
}

/// Away-step Frank–Wolfe on the box ∩ knapsack relaxation.
///
/// Starts from `v = 0` and stops when the duality gap `∇f(v)ᵀ(v − s)` drops
/// below `tol` or after `iters` iterations.
pub fn solve_relaxation(p: &DesignProblem, iters: usize, tol: f64) -> Result<Relaxation> {
    check_feasible(p)?;
    let n = p.n();
    let (cost, cap) = p.knapsack();
    let mut active: Vec<(Vec<f64>, f64)> = vec![(vec![0.0; n], 1.0)];
    let mut v = vec![0.0; n];
    let mut gap = f64::INFINITY;
    let mut it = 0;
    while it < iters {
        it += 1;
        let g = p.gradient(&v);
        let s = lmo(&g, &cost, cap);
        let d_fw: Vec<f64> = s.iter().zip(&v).map(|(a, b)| a - b).collect();
        gap = -dot(&g, &d_fw);
        if gap <= tol {
            break;
        }
        let (away, _) = active
            .iter()
            .enumerate()
            .map(|(i, (a, _))| (i, dot(&g, a)))
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
            .unwrap();
        let d_away: Vec<f64> = v.iter().zip(&active[away].0).map(|(a, b)| a - b).collect();
        let alpha_away = active[away].1;
        let fw_step = dot(&g, &d_fw) <= dot(&g, &d_away) || alpha_away >= 1.0;
        let (d, gmax) = if fw_step {
            (d_fw, 1.0)
        } else {
            (d_away, alpha_away / (1.0 - alpha_away))
        };
        let point = |gamma: f64| -> Vec<f64> {
            v.iter().zip(&d).map(|(a, b)| (a + gamma * b).clamp(0.0, 1.0)).collect()
        };
        let gamma = line_search(|gm| p.objective(&point(gm)), gmax);
        if gamma == 0.0 {
            break;
        }
        if fw_step {
            for w in active.iter_mut() {
                w.1 *= 1.0 - gamma;
            }
            match active.iter_mut().find(|(a, _)| *a == s) {
                Some(w) => w.1 += gamma,
                None => active.push((s, gamma)),
            }
        } else {
            for w in active.iter_mut() {
                w.1 *= 1.0 + gamma;
            }
            active[away].1 -= gamma;
            if gamma >= gmax {
                active.remove(away);
            }
        }
        active.retain(|w| w.1 > 1e-15);
        v = point(gamma);
    }
    let objective = p.objective(&v);
    Ok(Relaxation {
        v,
        objective,
        gap,
        iterations: it,
    })
}

/// Round relaxed weights to an index set.
///
/// Models are visited by decreasing `v`, then increasing `t̂`, then index.
/// A count budget takes the first `N`. A time budget accumulates `t̂` and
/// stops at the first model that pushes the total past `τ`; that model is
/// kept unless `strict`.
pub fn round_selection(v: &[f64], t_hat: &[f64], budget: Budget, strict: bool) -> Vec<usize> {
    let order = rounding_order(v, t_hat);
    match budget {
        Budget::Count(n) => order.into_iter().take(n).collect(),
        Budget::Time(tau) => {
            let mut s = Vec::new();
            let mut total = 0.0;
            for j in order {
                if total + t_hat[j] > tau {
                    if !strict {
                        s.push(j);
                    }
                    break;
                }
                total += t_hat[j];
                s.push(j);
            }
            s
        }
    }
}

fn rounding_order(v: &[f64], t_hat: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| {
        v[b].total_cmp(&v[a])
            .then(t_hat[a].total_cmp(&t_hat[b]))
            .then(a.cmp(&b))
    });
    order
}

/// A chosen probe set with the information needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPlan {
    pub method: String,
    pub v: Vec<f64>,
    #[serde(rename = "S")]
    pub s: Vec<usize>,
    pub predicted_total_time: f64,
    pub objective_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdOptions {
    pub iters: usize,
    pub tol: f64,
    /// Drop the first budget-exceeding model instead of keeping it.
    pub strict: bool,
}

impl Default for EdOptions {
    fn default() -> Self {
        Self {
            iters: DEFAULT_ITERS,
            tol: DEFAULT_TOL,
            strict: false,
        }
    }
}

/// Budgeted experiment design: relax, round, then repair rank.
///
/// If the rounded set together with the fixed columns spans fewer than
/// `min(k, rank Y)` directions, the cheapest rank-increasing models are
/// added. Under a time budget a repair model must cost at most `τ` on its
/// own, and in strict mode must also fit in what is left. Under a count
/// budget the set is rebuilt along the rounding order, preferring
/// rank-increasing models until the target rank, so it keeps exactly `N`.
pub fn min_variance_ed(p: &DesignProblem, opts: &EdOptions) -> Result<SelectionPlan> {
    let relax = solve_relaxation(p, opts.iters, opts.tol)?;
    let mut s = round_selection(&relax.v, &p.t_hat, p.budget, opts.strict);

    let mut base = RankTracker::new(p.k());
    for c in 0..p.fixed.ncols() {
        base.push(p.fixed.column(c).as_slice());
    }
    let mut full = base.clone();
    for j in 0..p.n() {
        full.push(p.y.column(j).as_slice());
    }
    let target = p.k().min(full.rank());
    let col = |j: usize| p.y.column(j).into_owned();

    match p.budget {
        Budget::Count(n) => {
            let mut tracker = base.clone();
            for &j in &s {
                tracker.push(col(j).as_slice());
            }
            if tracker.rank() < target.min(n + base.rank()) {
                let order = rounding_order(&relax.v, &p.t_hat);
                let mut tracker = base.clone();
                let mut picked = Vec::new();
                for &j in &order {
                    if picked.len() < n && tracker.rank() < target && tracker.push(col(j).as_slice()) {
                        picked.push(j);
                    }
                }
                for &j in &order {
                    if picked.len() >= n {
                        break;
                    }
                    if !picked.contains(&j) {
                        picked.push(j);
                    }
                }
                s = picked;
            }
        }
        Budget::Time(tau) => {
            let mut tracker = base.clone();
            for &j in &s {
                tracker.push(col(j).as_slice());
            }
            let mut total: f64 = s.iter().map(|&j| p.t_hat[j]).sum();
            let mut cheap: Vec<usize> = (0..p.n()).filter(|j| !s.contains(j)).collect();
            cheap.sort_by(|&a, &b| p.t_hat[a].total_cmp(&p.t_hat[b]).then(a.cmp(&b)));
            for j in cheap {
                if tracker.rank() >= target {
                    break;
                }
                let fits = if opts.strict { total + p.t_hat[j] <= tau } else { p.t_hat[j] <= tau };
                if fits && tracker.push(col(j).as_slice()) {
                    s.push(j);
                    total += p.t_hat[j];
                }
            }
        }
    }

    Ok(SelectionPlan {
        method: match p.budget {
            Budget::Time(_) => "ed-time",
            Budget::Count(_) => "ed-number",
        }
        .into(),
        predicted_total_time: s.iter().map(|&j| p.t_hat[j]).sum(),
        objective_value: p.objective_of_set(&s),
        v: relax.v,
        s,
    })
}

/// First `N` pivots of column-pivoted QR on `Y`.
pub fn qr_pivot_select(y: &DMatrix<f64>, n: usize) -> Vec<usize> {
    assert!(n <= y.ncols(), "cannot pick more columns than exist");
    pivoted_qr(y).pivots.into_iter().take(n).collect()
}

/// Repeatedly pick uniformly among models whose `t̂` fits the remaining
/// budget, until none does.
pub fn random_select<R: Rng>(t_hat: &[f64], tau: f64, rng: &mut R) -> Vec<usize> {
    let mut left = tau;
    let mut chosen = vec![false; t_hat.len()];
    let mut s = Vec::new();
    loop {
        let fits: Vec<usize> = (0..t_hat.len()).filter(|&j| !chosen[j] && t_hat[j] <= left).collect();
        if fits.is_empty() {
            return s;
        }
        let j = fits[rng.random_range(0..fits.len())];
        chosen[j] = true;
        left -= t_hat[j];
        s.push(j);
    }
}

pub fn plan_for(method: &str, s: Vec<usize>, t_hat: &[f64], objective: f64) -> SelectionPlan {
    SelectionPlan {
        method: method.into(),
        v: indicator(t_hat.len(), &s),
        predicted_total_time: s.iter().map(|&j| t_hat[j]).sum(),
        objective_value: objective,
        s,
    }
}
