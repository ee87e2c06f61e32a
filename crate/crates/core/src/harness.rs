//! Evaluation protocols over a stored error matrix: leave-one-dataset-out
//! regret, method ranks, cold-start accuracy, spectrum, NMF clusters and
//! ensemble sizes. Every report can be written as CSV.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{make_splits, Dataset};
use crate::error::{Error, Result};
use crate::factorization::{factorize, nmf, select_rank, ImputedVector};
use crate::learners::ModelSpec;
use crate::linalg::numerical_rank;
use crate::offline::{fit_all_runtime, DatasetSize, RuntimeMatrix, MIN_TIME};
use crate::online::{run_online, Clock, CvOracle, OnlineConfig, OnlineContext};
use crate::selection::{
    min_variance_ed, qr_pivot_select, random_select, Budget, DesignProblem, EdOptions, Scalarization,
};
use crate::tables::{fmt_f64, write_rows};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    EdTime,
    EdNumber,
    Qr,
    Random,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::EdTime => "ed_time",
            Method::EdNumber => "ed_number",
            Method::Qr => "qr",
            Method::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Method::EdTime, Method::EdNumber, Method::Qr, Method::Random]
            .into_iter()
            .find(|m| m.name() == s)
    }
}

/// Budget axis: number of models, or predicted seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Count,
    Time,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Count => "count",
            Axis::Time => "time",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub dataset: String,
    pub row: usize,
    pub method: Method,
    pub axis: Axis,
    pub budget: f64,
    /// Seed index for the random method, else `None`.
    pub seed: Option<usize>,
    pub observed: usize,
    pub probes: Vec<usize>,
    /// Latent dimension used for imputation.
    pub k: usize,
    /// Rank of the probed columns of `Y_k`.
    pub probe_rank: usize,
    pub regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretConfig {
    pub methods: Vec<Method>,
    pub count_budgets: Vec<usize>,
    pub time_budgets: Vec<f64>,
    pub seeds: usize,
    pub base_seed: u64,
    /// Relative singular-value threshold for the latent rank.
    pub rank_threshold: f64,
    pub strict: bool,
}

impl Default for RegretConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::EdNumber, Method::Qr, Method::Random],
            count_budgets: (1..=20).collect(),
            time_budgets: Vec::new(),
            seeds: 20,
            base_seed: 0,
            rank_threshold: 0.01,
            strict: false,
        }
    }
}

/// How runtimes of the held-out dataset are estimated.
#[derive(Debug, Clone, Copy)]
pub enum RuntimeSource<'a> {
    /// Per-model predictors fitted on the other rows.
    Predictors(&'a RuntimeMatrix, &'a [DatasetSize]),
    /// Geometric mean of each column over the other rows.
    ColumnMeans(&'a RuntimeMatrix),
    /// Every model costs one second.
    Uniform,
}

impl RuntimeSource<'_> {
    /// Estimates for row `i` that never look at row `i`.
    pub fn estimate(&self, i: usize, n_models: usize) -> Result<Vec<f64>> {
        match *self {
            RuntimeSource::Uniform => Ok(vec![1.0; n_models]),
            RuntimeSource::ColumnMeans(t) => {
                let rows: Vec<usize> = (0..t.values.nrows()).filter(|&r| r != i).collect();
                Ok((0..n_models)
                    .map(|j| {
                        let s: f64 = rows.iter().map(|&r| t.values[(r, j)].max(MIN_TIME).ln()).sum();
                        (s / rows.len().max(1) as f64).exp()
                    })
                    .collect())
            }
            RuntimeSource::Predictors(t, sizes) => {
                let ids: Vec<usize> = (0..n_models).collect();
                let preds = fit_all_runtime(t, sizes, &ids, Some(i), true)?;
                Ok(preds.iter().map(|p| p.predict(sizes[i].n, sizes[i].p)).collect())
            }
        }
    }
}

pub(crate) fn mix(a: u64, b: u64, c: u64) -> u64 {
    let mut h = a ^ 0x9E37_79B9_7F4A_7C15;
    for v in [b, c] {
        h = (h ^ v).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 31;
    }
    h
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = j;
        }
    }
    best
}

fn without_row(e: &DMatrix<f64>, i: usize) -> DMatrix<f64> {
    e.clone().remove_row(i)
}

/// Model chosen after observing `s` on `row`: the minimum of `ê` with the
/// observed entries replaced by their true values. With nothing observed,
/// the model with the lowest mean error on the training rows.
fn choose(yk: &DMatrix<f64>, row: &[f64], s: &[usize], col_means: &[f64]) -> usize {
    if s.is_empty() {
        return argmin(col_means);
    }
    let obs: Vec<(usize, f64)> = s.iter().map(|&j| (j, row[j])).collect();
    let mut score = ImputedVector::from_observations(yk, &obs).predicted;
    for &(j, e) in &obs {
        score[j] = e;
    }
    argmin(&score)
}

/// Leave-one-dataset-out regret of each selection method at each budget.
///
/// For held-out row `i`, the error matrix without that row is factorized and
/// runtimes are estimated without it. Probed entries are read from row `i`
/// of `e`.
pub fn meta_loocv_regret(
    e: &DMatrix<f64>,
    dataset_ids: &[String],
    runtimes: RuntimeSource,
    cfg: &RegretConfig,
) -> Result<Vec<RegretRecord>> {
    let (m, n) = e.shape();
    if m < 2 {
        return Err(Error::InsufficientData("meta-LOOCV needs at least two datasets".into()));
    }
    let per_row: Vec<Vec<RegretRecord>> = (0..m)
        .into_par_iter()
        .map(|i| regret_for_row(e, i, &dataset_ids[i], runtimes, cfg, n))
        .collect::<Result<_>>()?;
    Ok(per_row.into_iter().flatten().collect())
}

fn regret_for_row(
    e: &DMatrix<f64>,
    i: usize,
    name: &str,
    runtimes: RuntimeSource,
    cfg: &RegretConfig,
    n: usize,
) -> Result<Vec<RegretRecord>> {
    let train = without_row(e, i);
    let f = factorize(&train);
    let row: Vec<f64> = e.row(i).iter().copied().collect();
    let best = row.iter().copied().fold(f64::INFINITY, f64::min);
    let col_means: Vec<f64> = (0..n).map(|j| train.column(j).mean()).collect();
    let t_hat = runtimes.estimate(i, n)?;
    let r = select_rank(&f.singular_values, cfg.rank_threshold, f.k_max());
    let opts = EdOptions {
        strict: cfg.strict,
        ..EdOptions::default()
    };
    let mut out = Vec::new();
    let mut record = |method, axis, budget: f64, seed, yk: &DMatrix<f64>, s: &[usize]| {
        let chosen = choose(yk, &row, s, &col_means);
        out.push(RegretRecord {
            dataset: name.to_owned(),
            row: i,
            method,
            axis,
            budget,
            seed,
            observed: s.len(),
            probes: s.to_vec(),
            k: yk.nrows(),
            probe_rank: if s.is_empty() { 0 } else { numerical_rank(&yk.select_columns(s), 1e-9) },
            regret: row[chosen] - best,
        });
    };

    // budgets above n observe every model but keep their own label
    for &requested in &cfg.count_budgets {
        let nb = requested.min(n);
        if nb == 0 {
            continue;
        }
        let k = nb.min(r);
        let yk = f.y_k(k);
        for &method in &cfg.methods {
            match method {
                Method::EdNumber => {
                    let p = DesignProblem::new(yk.clone(), t_hat.clone(), Budget::Count(nb), Scalarization::D);
                    let s = min_variance_ed(&p, &opts)?.s;
                    record(method, Axis::Count, requested as f64, None, &yk, &s);
                }
                Method::Qr => {
                    let s = qr_pivot_select(&yk, nb);
                    record(method, Axis::Count, requested as f64, None, &yk, &s);
                }
                Method::Random => {
                    for seed in 0..cfg.seeds {
                        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.base_seed, i as u64, (seed * 1009 + nb) as u64));
                        let s = random_select(&vec![1.0; n], nb as f64, &mut rng);
                        record(method, Axis::Count, requested as f64, Some(seed), &yk, &s);
                    }
                }
                Method::EdTime => {}
            }
        }
    }

    let yk = f.y_k(r);
    for (b, &tau) in cfg.time_budgets.iter().enumerate() {
        for &method in &cfg.methods {
            match method {
                Method::EdTime => {
                    let p = DesignProblem::new(yk.clone(), t_hat.clone(), Budget::Time(tau), Scalarization::D);
                    let s = match min_variance_ed(&p, &opts) {
                        Ok(plan) => plan.s,
                        Err(Error::InfeasibleBudget { .. }) => Vec::new(),
                        Err(err) => return Err(err),
                    };
                    record(method, Axis::Time, tau, None, &yk, &s);
                }
                Method::Random => {
                    for seed in 0..cfg.seeds {
                        let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.base_seed ^ 0x7431, i as u64, (seed * 1009 + b) as u64));
                        let s = random_select(&t_hat, tau, &mut rng);
                        record(method, Axis::Time, tau, Some(seed), &yk, &s);
                    }
                }
                Method::EdNumber | Method::Qr => {}
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretSummary {
    pub method: Method,
    pub axis: Axis,
    pub budget: f64,
    /// Quartiles across datasets of the per-dataset regret (averaged over
    /// seeds for the random method).
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub mean: f64,
    /// Standard deviation across seeds of the mean regret; 0 when
    /// deterministic.
    pub seed_std: f64,
    pub datasets: usize,
}

/// Linear-interpolation quantile of an unsorted sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

type Key = (Method, Axis, u64);

fn key(r: &RegretRecord) -> Key {
    (r.method, r.axis, r.budget.to_bits())
}

/// Per-(method, axis, budget) dataset → seed-averaged regret.
fn per_dataset(records: &[RegretRecord]) -> BTreeMap<Key, BTreeMap<usize, f64>> {
    let mut acc: BTreeMap<Key, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for r in records {
        let e = acc.entry(key(r)).or_default().entry(r.row).or_insert((0.0, 0));
        e.0 += r.regret;
        e.1 += 1;
    }
    acc.into_iter()
        .map(|(k, rows)| (k, rows.into_iter().map(|(i, (s, c))| (i, s / c as f64)).collect()))
        .collect()
}

pub fn summarize_regret(records: &[RegretRecord]) -> Vec<RegretSummary> {
    let mut seed_means: BTreeMap<Key, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    for r in records {
        if let Some(s) = r.seed {
            let e = seed_means.entry(key(r)).or_default().entry(s).or_insert((0.0, 0));
            e.0 += r.regret;
            e.1 += 1;
        }
    }
    per_dataset(records)
        .into_iter()
        .map(|(k, rows)| {
            let v: Vec<f64> = rows.values().copied().collect();
            let seed_std = seed_means.get(&k).map_or(0.0, |s| {
                let means: Vec<f64> = s.values().map(|(t, c)| t / *c as f64).collect();
                let mu = means.iter().sum::<f64>() / means.len() as f64;
                (means.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / means.len() as f64).sqrt()
            });
            RegretSummary {
                method: k.0,
                axis: k.1,
                budget: f64::from_bits(k.2),
                median: quantile(&v, 0.5),
                q1: quantile(&v, 0.25),
                q3: quantile(&v, 0.75),
                mean: v.iter().sum::<f64>() / v.len() as f64,
                seed_std,
                datasets: v.len(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankPoint {
    pub axis: Axis,
    pub budget: f64,
    pub method: Method,
    pub average_rank: f64,
}

/// Mean ranks (1 = lowest regret, ties share the mean rank) of methods
/// compared on the same dataset and budget, averaged over datasets.
pub fn rank_curve(records: &[RegretRecord]) -> Vec<RankPoint> {
    let table = per_dataset(records);
    let mut groups: BTreeMap<(Axis, u64), Vec<(Method, &BTreeMap<usize, f64>)>> = BTreeMap::new();
    for (k, rows) in &table {
        groups.entry((k.1, k.2)).or_default().push((k.0, rows));
    }
    let mut out = Vec::new();
    for ((axis, bits), methods) in groups {
        let mut sums = vec![0.0; methods.len()];
        let datasets: Vec<usize> = methods[0].1.keys().copied().collect();
        let mut count = 0;
        for d in datasets {
            let vals: Option<Vec<f64>> = methods.iter().map(|(_, rows)| rows.get(&d).copied()).collect();
            let Some(vals) = vals else { continue };
            for (slot, r) in sums.iter_mut().zip(mean_ranks(&vals)) {
                *slot += r;
            }
            count += 1;
        }
        for ((method, _), s) in methods.iter().zip(sums) {
            out.push(RankPoint {
                axis,
                budget: f64::from_bits(bits),
                method: *method,
                average_rank: s / count.max(1) as f64,
            });
        }
    }
    out
}

/// Ranks starting at 1, ties sharing their mean rank.
pub fn mean_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColdStartMethod {
    EdD,
    EdA,
    EdE,
    /// Average of the nearest training rows on the probed columns.
    RegressorBaseline,
}

impl ColdStartMethod {
    pub const ALL: [ColdStartMethod; 4] = [
        ColdStartMethod::EdD,
        ColdStartMethod::EdA,
        ColdStartMethod::EdE,
        ColdStartMethod::RegressorBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ColdStartMethod::EdD => "ed_D",
            ColdStartMethod::EdA => "ed_A",
            ColdStartMethod::EdE => "ed_E",
            ColdStartMethod::RegressorBaseline => "knn_rows_baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColdStartRecord {
    pub dataset: String,
    pub method: ColdStartMethod,
    pub observed: usize,
    pub relative_rmse: f64,
    pub best_model_hit: bool,
    pub top_overlap: f64,
}

pub const TOP_H: usize = 5;
pub const NEIGHBOUR_ROWS: usize = 5;

/// `‖e − ê‖₂ / ‖e‖₂`
pub fn relative_rmse(e: &[f64], e_hat: &[f64]) -> f64 {
    let num: f64 = e.iter().zip(e_hat).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = e.iter().map(|a| a * a).sum();
    (num / den).sqrt()
}

fn top(v: &[f64], h: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    order.truncate(h);
    order
}

/// Fraction of the `h` best models under `e` also among the `h` best under `ê`.
pub fn top_overlap(e: &[f64], e_hat: &[f64], h: usize) -> f64 {
    let h = h.min(e.len());
    let a = top(e, h);
    let b = top(e_hat, h);
    a.iter().filter(|j| b.contains(j)).count() as f64 / h.max(1) as f64
}

pub fn best_model_hit(e: &[f64], e_hat: &[f64]) -> bool {
    argmin(e) == argmin(e_hat)
}

/// Leave-one-out cold-start accuracy of the three design criteria at a
/// predicted-time probe budget, plus a nearest-rows baseline that sees the
/// same probes as the D design.
pub fn cold_start_compare(
    e: &DMatrix<f64>,
    dataset_ids: &[String],
    runtimes: RuntimeSource,
    probe_budget: f64,
    rank_threshold: f64,
) -> Result<Vec<ColdStartRecord>> {
    let (m, n) = e.shape();
    let rows: Vec<Vec<ColdStartRecord>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let train = without_row(e, i);
            let f = factorize(&train);
            let k = select_rank(&f.singular_values, rank_threshold, f.k_max());
            let yk = f.y_k(k);
            let row: Vec<f64> = e.row(i).iter().copied().collect();
            let t_hat = runtimes.estimate(i, n)?;
            let mut out = Vec::new();
            let mut d_probes = Vec::new();
            for (method, scal) in [
                (ColdStartMethod::EdD, Scalarization::D),
                (ColdStartMethod::EdA, Scalarization::A),
                (ColdStartMethod::EdE, Scalarization::E),
            ] {
                let p = DesignProblem::new(yk.clone(), t_hat.clone(), Budget::Time(probe_budget), scal);
                let s = match min_variance_ed(&p, &EdOptions::default()) {
                    Ok(plan) => plan.s,
                    Err(Error::InfeasibleBudget { .. }) => Vec::new(),
                    Err(err) => return Err(err),
                };
                let e_hat = if s.is_empty() {
                    (0..n).map(|j| train.column(j).mean()).collect()
                } else {
                    let obs: Vec<(usize, f64)> = s.iter().map(|&j| (j, row[j])).collect();
                    ImputedVector::from_observations(&yk, &obs).predicted
                };
                if method == ColdStartMethod::EdD {
                    d_probes = s.clone();
                }
                out.push(cold_record(&dataset_ids[i], method, s.len(), &row, &e_hat));
            }
            let e_hat = nearest_rows(&train, &row, &d_probes, NEIGHBOUR_ROWS);
            out.push(cold_record(&dataset_ids[i], ColdStartMethod::RegressorBaseline, d_probes.len(), &row, &e_hat));
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

fn cold_record(name: &str, method: ColdStartMethod, observed: usize, e: &[f64], e_hat: &[f64]) -> ColdStartRecord {
    ColdStartRecord {
        dataset: name.to_owned(),
        method,
        observed,
        relative_rmse: relative_rmse(e, e_hat),
        best_model_hit: best_model_hit(e, e_hat),
        top_overlap: top_overlap(e, e_hat, TOP_H),
    }
}

/// Mean of the `k` training rows closest to `row` on columns `s` (all rows
/// when nothing was observed).
fn nearest_rows(train: &DMatrix<f64>, row: &[f64], s: &[usize], k: usize) -> Vec<f64> {
    let m = train.nrows();
    let mut order: Vec<(f64, usize)> = (0..m)
        .map(|r| (s.iter().map(|&j| (train[(r, j)] - row[j]).powi(2)).sum::<f64>(), r))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let take = if s.is_empty() { m } else { k.min(m) };
    let picked: Vec<usize> = order.iter().take(take).map(|o| o.1).collect();
    (0..train.ncols())
        .map(|j| picked.iter().map(|&r| train[(r, j)]).sum::<f64>() / picked.len() as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColdStartSummary {
    pub method: ColdStartMethod,
    pub mean_relative_rmse: f64,
    pub best_hit_fraction: f64,
    pub mean_top_overlap: f64,
}

pub fn summarize_cold_start(records: &[ColdStartRecord]) -> Vec<ColdStartSummary> {
    ColdStartMethod::ALL
        .iter()
        .filter_map(|&m| {
            let r: Vec<&ColdStartRecord> = records.iter().filter(|r| r.method == m).collect();
            if r.is_empty() {
                return None;
            }
            let c = r.len() as f64;
            Some(ColdStartSummary {
                method: m,
                mean_relative_rmse: r.iter().map(|x| x.relative_rmse).sum::<f64>() / c,
                best_hit_fraction: r.iter().filter(|x| x.best_model_hit).count() as f64 / c,
                mean_top_overlap: r.iter().map(|x| x.top_overlap).sum::<f64>() / c,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub singular_values: Vec<f64>,
    pub count_1pct: usize,
    pub count_3pct: usize,
}

impl SpectrumReport {
    pub fn ratio(&self, i: usize) -> f64 {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        if top > 0.0 {
            self.singular_values[i] / top
        } else {
            0.0
        }
    }
}

pub fn spectrum_report(e: &DMatrix<f64>) -> SpectrumReport {
    let sv = factorize(e).singular_values;
    let count = |t: f64| {
        let top = sv.first().copied().unwrap_or(0.0);
        sv.iter().filter(|&&s| top > 0.0 && s >= t * top).count()
    };
    SpectrumReport {
        count_1pct: count(0.01),
        count_3pct: count(0.03),
        singular_values: sv,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmfReport {
    pub k: usize,
    /// Cluster of every model.
    pub clusters: Vec<usize>,
    pub families: Vec<String>,
    /// `counts[f][c]`: models of family `families[f]` in cluster `c`.
    pub counts: Vec<Vec<usize>>,
    /// Shannon entropy (nats) of the family mix inside each cluster.
    pub cluster_entropy: Vec<f64>,
    pub final_objective: f64,
}

pub const NMF_ITERS: usize = 1000;

pub fn nmf_cluster_report(e: &DMatrix<f64>, collection: &[ModelSpec], k: usize, seed: u64) -> Result<NmfReport> {
    assert_eq!(collection.len(), e.ncols());
    let f = nmf(e, k, NMF_ITERS, seed)?;
    let clusters = f.clusters();
    let mut families: Vec<String> = Vec::new();
    for s in collection {
        let fam = s.algorithm.family().to_owned();
        if !families.contains(&fam) {
            families.push(fam);
        }
    }
    let mut counts = vec![vec![0usize; k]; families.len()];
    for (s, &c) in collection.iter().zip(&clusters) {
        let fi = families.iter().position(|f| f == s.algorithm.family()).unwrap();
        counts[fi][c] += 1;
    }
    let cluster_entropy = (0..k)
        .map(|c| {
            let total: usize = counts.iter().map(|r| r[c]).sum();
            if total == 0 {
                return 0.0;
            }
            counts
                .iter()
                .map(|r| r[c] as f64 / total as f64)
                .filter(|&p| p > 0.0)
                .map(|p| -p * p.ln())
                .sum()
        })
        .collect();
    Ok(NmfReport {
        k,
        clusters,
        families,
        counts,
        cluster_entropy,
        final_objective: *f.objective.last().unwrap(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeHistogram {
    pub bins: BTreeMap<usize, usize>,
    pub fraction_at_most_5: f64,
}

/// Histogram of distinct-member counts.
pub fn ensemble_size_histogram(sizes: &[usize]) -> SizeHistogram {
    let mut bins = BTreeMap::new();
    for &s in sizes {
        *bins.entry(s).or_insert(0) += 1;
    }
    SizeHistogram {
        bins,
        fraction_at_most_5: sizes.iter().filter(|&&s| s <= 5).count() as f64 / sizes.len().max(1) as f64,
    }
}

/// Outcome of the online stage on one held-out corpus dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineOutcome {
    pub dataset: String,
    pub no_model: bool,
    pub ensemble_size: usize,
    pub validation_error: f64,
    /// Lowest cross-validation error among the ensemble's members.
    pub best_member_error: f64,
    pub rounds: usize,
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Budget as a multiple of the row's total runtime over all models.
    pub budget_fraction: f64,
    pub n_folds: usize,
    pub seed: u64,
    pub n_best: usize,
    pub strict: bool,
    pub fresh_rounds: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            budget_fraction: 0.25,
            n_folds: 5,
            seed: 0,
            n_best: 5,
            strict: false,
            fresh_rounds: false,
        }
    }
}

/// Run the online stage on every corpus dataset with that dataset held out
/// of the factorization and runtime fits, on a virtual clock charged from
/// the stored runtime matrix.
pub fn online_sweep(
    corpus: &[Dataset],
    collection: &[ModelSpec],
    e: &DMatrix<f64>,
    t: &RuntimeMatrix,
    sizes: &[DatasetSize],
    cfg: &SweepConfig,
) -> Result<Vec<OnlineOutcome>> {
    let n = collection.len();
    corpus
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let f = factorize(&without_row(e, i));
            let t_hat = RuntimeSource::Predictors(t, sizes).estimate(i, n)?;
            let costs: Vec<f64> = (0..n).map(|j| t.values[(i, j)]).collect();
            let tau = cfg.budget_fraction * costs.iter().sum::<f64>();
            let mut online = OnlineConfig::defaults(tau, &f.singular_values);
            online.n_best = cfg.n_best;
            online.strict = cfg.strict;
            online.fresh_rounds = cfg.fresh_rounds;
            let mut oracle = CvOracle {
                collection,
                data: d,
                split: make_splits(&d.labels, d.n_classes(), cfg.n_folds, cfg.seed)?,
                costs: Some(costs),
            };
            let ctx = OnlineContext { y: &f.y, t_hat: &t_hat };
            let mut clock = Clock::virtual_clock();
            let r = run_online(&ctx, &mut oracle, &mut clock, &online)?;
            Ok(OnlineOutcome {
                dataset: d.name.clone(),
                no_model: r.ensemble.is_none(),
                ensemble_size: r.ensemble.as_ref().map_or(0, |e| e.distinct_members()),
                best_member_error: r
                    .ensemble
                    .as_ref()
                    .map_or(r.validation_error, |e| e.members.iter().map(|m| m.cv_error).fold(f64::INFINITY, f64::min)),
                validation_error: r.validation_error,
                rounds: r.rounds.len(),
                elapsed: r.elapsed,
            })
        })
        .collect()
}

pub fn write_regret_csv(path: &Path, records: &[RegretRecord]) -> Result<()> {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.dataset.clone(),
                r.method.name().into(),
                r.axis.name().into(),
                fmt_f64(r.budget),
                r.seed.map_or(String::new(), |s| s.to_string()),
                r.observed.to_string(),
                r.probes.iter().map(usize::to_string).collect::<Vec<_>>().join(";"),
                r.k.to_string(),
                r.probe_rank.to_string(),
                fmt_f64(r.regret),
            ]
        })
        .collect();
    write_rows(
        path,
        &["dataset", "method", "axis", "budget", "seed", "observed", "probes", "k", "probe_rank", "regret"],
        &rows,
    )
}

pub fn write_regret_summary_csv(path: &Path, rows: &[RegretSummary]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.method.name().into(),
                r.axis.name().into(),
                fmt_f64(r.budget),
                fmt_f64(r.median),
                fmt_f64(r.q1),
                fmt_f64(r.q3),
                fmt_f64(r.mean),
                fmt_f64(r.seed_std),
                r.datasets.to_string(),
            ]
        })
        .collect();
    write_rows(
        path,
        &["method", "axis", "budget", "median", "q1", "q3", "mean", "seed_std", "datasets"],
        &body,
    )
}

pub fn write_rank_csv(path: &Path, points: &[RankPoint]) -> Result<()> {
    let body: Vec<Vec<String>> = points
        .iter()
        .map(|p| vec![p.axis.name().into(), fmt_f64(p.budget), p.method.name().into(), fmt_f64(p.average_rank)])
        .collect();
    write_rows(path, &["axis", "budget", "method", "average_rank"], &body)
}

pub fn write_cold_start_csv(path: &Path, records: &[ColdStartRecord]) -> Result<()> {
    let body: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.dataset.clone(),
                r.method.name().into(),
                r.observed.to_string(),
                fmt_f64(r.relative_rmse),
                r.best_model_hit.to_string(),
                fmt_f64(r.top_overlap),
            ]
        })
        .collect();
    write_rows(
        path,
        &["dataset", "method", "observed", "relative_rmse", "best_model_hit", "top5_overlap"],
        &body,
    )
}

pub fn write_cold_start_summary_csv(path: &Path, rows: &[ColdStartSummary]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.method.name().into(),
                fmt_f64(r.mean_relative_rmse),
                fmt_f64(r.best_hit_fraction),
                fmt_f64(r.mean_top_overlap),
            ]
        })
        .collect();
    write_rows(path, &["method", "mean_relative_rmse", "best_hit_fraction", "mean_top5_overlap"], &body)
}

pub fn write_spectrum_csv(path: &Path, rep: &SpectrumReport) -> Result<()> {
    let body: Vec<Vec<String>> = (0..rep.singular_values.len())
        .map(|i| vec![(i + 1).to_string(), fmt_f64(rep.singular_values[i]), fmt_f64(rep.ratio(i))])
        .collect();
    write_rows(path, &["index", "sigma", "ratio_to_first"], &body)
}

pub fn write_nmf_csvs(dir: &Path, rep: &NmfReport, collection: &[ModelSpec]) -> Result<()> {
    let clusters: Vec<Vec<String>> = collection
        .iter()
        .zip(&rep.clusters)
        .map(|(s, c)| vec![s.index.to_string(), s.algorithm.family().to_owned(), c.to_string()])
        .collect();
    write_rows(&dir.join("nmf_clusters.csv"), &["model", "family", "cluster"], &clusters)?;
    let mut header = vec!["family".to_owned()];
    header.extend((0..rep.k).map(|c| format!("cluster_{c}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let counts: Vec<Vec<String>> = rep
        .families
        .iter()
        .zip(&rep.counts)
        .map(|(f, row)| std::iter::once(f.clone()).chain(row.iter().map(usize::to_string)).collect())
        .collect();
    write_rows(&dir.join("nmf_heatmap.csv"), &header_refs, &counts)?;
    let entropy: Vec<Vec<String>> = rep
        .cluster_entropy
        .iter()
        .enumerate()
        .map(|(c, h)| vec![c.to_string(), fmt_f64(*h)])
        .collect();
    write_rows(&dir.join("nmf_entropy.csv"), &["cluster", "family_entropy"], &entropy)
}

pub fn write_histogram_csv(path: &Path, h: &SizeHistogram) -> Result<()> {
    let mut body: Vec<Vec<String>> = h.bins.iter().map(|(s, c)| vec![s.to_string(), c.to_string()]).collect();
    body.push(vec!["fraction_at_most_5".into(), fmt_f64(h.fraction_at_most_5)]);
    write_rows(path, &["ensemble_size", "count"], &body)
}

pub fn write_online_csv(path: &Path, rows: &[OnlineOutcome]) -> Result<()> {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.dataset.clone(),
                r.no_model.to_string(),
                r.ensemble_size.to_string(),
                fmt_f64(r.validation_error),
                fmt_f64(r.best_member_error),
                r.rounds.to_string(),
                fmt_f64(r.elapsed),
            ]
        })
        .collect();
    write_rows(
        path,
        &["dataset", "no_model", "ensemble_size", "validation_error", "best_member_error", "rounds", "elapsed"],
        &body,
    )
}
