//! Online stage: repeatedly probe, impute and ensemble under a doubling
//! time target until half the budget is spent.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corpus::{majority_label, CvSplit, Dataset};
use crate::error::{Error, Result};
use crate::factorization::ImputedVector;
use crate::learners::metric::ber;
use crate::learners::{cross_validate, ensemble_selection, fit_model, Classifier, Ensemble, ModelSpec};
use crate::selection::{min_variance_ed, Budget, DesignProblem, EdOptions, Scalarization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    Wall,
    Virtual,
}

/// Elapsed search time. The wall clock reads a monotonic timer and ignores
/// charges; the virtual clock is the sum of charges.
#[derive(Debug, Clone)]
pub struct Clock {
    mode: ClockMode,
    start: Instant,
    charged: f64,
}

impl Clock {
    pub fn new(mode: ClockMode) -> Self {
        Self {
            mode,
            start: Instant::now(),
            charged: 0.0,
        }
    }

    pub fn wall() -> Self {
        Self::new(ClockMode::Wall)
    }

    pub fn virtual_clock() -> Self {
        Self::new(ClockMode::Virtual)
    }

    pub fn mode(&self) -> ClockMode {
        self.mode
    }

    pub fn elapsed(&self) -> f64 {
        match self.mode {
            ClockMode::Wall => self.start.elapsed().as_secs_f64(),
            ClockMode::Virtual => self.charged,
        }
    }

    pub fn charge(&mut self, seconds: f64) {
        if self.mode == ClockMode::Virtual {
            self.charged += seconds.max(0.0);
        }
    }
}

/// Result of cross-validating one model on the new dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub cv_error: f64,
    pub predictions: Vec<usize>,
    /// Seconds charged to a virtual clock.
    pub cost: f64,
}

/// Source of model evaluations on the dataset being fitted.
pub trait ModelOracle {
    fn evaluate(&mut self, model: usize) -> Result<Evaluation>;
    /// Cost known before running, if any (replayed or fixed virtual times).
    fn cost_hint(&self, model: usize) -> Option<f64>;
    /// Labels the held-out predictions are scored against.
    fn labels(&self) -> &[usize];
    fn n_classes(&self) -> usize;
}

/// Cross-validation on a real dataset. With `costs` set, each evaluation is
/// charged that many seconds instead of its measured time.
pub struct CvOracle<'a> {
    pub collection: &'a [ModelSpec],
    pub data: &'a Dataset,
    pub split: CvSplit,
    pub costs: Option<Vec<f64>>,
}

impl ModelOracle for CvOracle<'_> {
    fn evaluate(&mut self, model: usize) -> Result<Evaluation> {
        let r = cross_validate(&self.collection[model], self.data, &self.split)?;
        Ok(Evaluation {
            cv_error: r.cv_error,
            cost: self.costs.as_ref().map_or(r.wall_time, |c| c[model]),
            predictions: r.fold_predictions,
        })
    }

    fn cost_hint(&self, model: usize) -> Option<f64> {
        self.costs.as_ref().map(|c| c[model])
    }

    fn labels(&self) -> &[usize] {
        &self.data.labels
    }

    fn n_classes(&self) -> usize {
        self.data.n_classes()
    }
}

/// Precomputed held-out predictions and costs.
#[derive(Debug, Clone)]
pub struct TableOracle {
    pub predictions: Vec<Vec<usize>>,
    pub costs: Vec<f64>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl ModelOracle for TableOracle {
    fn evaluate(&mut self, model: usize) -> Result<Evaluation> {
        let p = self.predictions[model].clone();
        Ok(Evaluation {
            cv_error: ber(&self.labels, &p, self.n_classes),
            predictions: p,
            cost: self.costs[model],
        })
    }

    fn cost_hint(&self, model: usize) -> Option<f64> {
        Some(self.costs[model])
    }

    fn labels(&self) -> &[usize] {
        &self.labels
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineConfig {
    /// Total budget τ in seconds.
    pub tau: f64,
    /// First time target τ̃₀.
    pub tau0: f64,
    pub k0: usize,
    /// Number of best-predicted models cross-validated per round.
    pub n_best: usize,
    /// Drop the first model that overshoots a round's target.
    pub strict: bool,
    /// Forget observations between rounds.
    pub fresh_rounds: bool,
}

impl OnlineConfig {
    /// τ̃₀ = τ/64, k₀ = number of singular values ≥ 3% of the largest,
    /// capped at 4, and N = 5.
    pub fn defaults(tau: f64, singular_values: &[f64]) -> Self {
        Self {
            tau,
            tau0: tau / 64.0,
            k0: crate::factorization::select_rank(singular_values, 0.03, 4),
            n_best: 5,
            strict: false,
            fresh_rounds: false,
        }
    }
}

/// One line of the round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub k: usize,
    pub time_target: f64,
    /// Models probed for the design this round.
    #[serde(rename = "S")]
    pub s: Vec<usize>,
    #[serde(rename = "e_S")]
    pub e_s: Vec<f64>,
    #[serde(rename = "T_best")]
    pub t_best: Vec<usize>,
    pub validation_error: f64,
    /// Clock reading when the round finished.
    pub elapsed: f64,
    pub no_model: bool,
}

#[derive(Debug, Clone)]
pub struct RoundResult {
    pub log: RoundLog,
    pub imputed: Option<ImputedVector>,
    pub ensemble: Option<Ensemble>,
}

/// Inputs shared by every round.
pub struct OnlineContext<'a> {
    /// `k_max × n` model factors.
    pub y: &'a DMatrix<f64>,
    /// Predicted runtime of every model on the new dataset.
    pub t_hat: &'a [f64],
}

/// Observations gathered so far on the new dataset.
#[derive(Debug, Clone, Default)]
pub struct Observations {
    pub seen: BTreeMap<usize, Evaluation>,
}

impl Observations {
    pub fn errors(&self) -> Vec<(usize, f64)> {
        self.seen.iter().map(|(&j, e)| (j, e.cv_error)).collect()
    }
}

fn majority_error(oracle: &dyn ModelOracle) -> f64 {
    let labels = oracle.labels();
    let maj = majority_label(labels, oracle.n_classes());
    ber(labels, &vec![maj; labels.len()], oracle.n_classes())
}

/// Try to evaluate `j` without letting the clock pass `tau`. An evaluation
/// that finishes after `tau` (its true cost beat the estimate) is charged
/// but its result is discarded.
fn probe(
    j: usize,
    ctx: &OnlineContext,
    oracle: &mut dyn ModelOracle,
    clock: &mut Clock,
    tau: f64,
    obs: &mut Observations,
) -> Result<bool> {
    if obs.seen.contains_key(&j) {
        return Ok(true);
    }
    let estimate = oracle.cost_hint(j).unwrap_or(ctx.t_hat[j]);
    if clock.elapsed() + estimate > tau {
        return Ok(false);
    }
    let ev = oracle.evaluate(j)?;
    clock.charge(ev.cost);
    if clock.elapsed() > tau {
        return Ok(false);
    }
    obs.seen.insert(j, ev);
    Ok(true)
}

/// One round: design, probe, impute, cross-validate the `N` most promising
/// models and build an ensemble from them.
///
/// Models whose estimated cost would take the clock past `tau` are skipped.
/// A round that ends with no evaluated model predicts the majority class.
#[allow(clippy::too_many_arguments)]
pub fn fit_one_round(
    ctx: &OnlineContext,
    oracle: &mut dyn ModelOracle,
    clock: &mut Clock,
    obs: &mut Observations,
    round: usize,
    k: usize,
    time_target: f64,
    cfg: &OnlineConfig,
) -> Result<RoundResult> {
    let n = ctx.y.ncols();
    let yk = ctx.y.rows(0, k.min(ctx.y.nrows())).into_owned();
    let observed: Vec<usize> = obs.seen.keys().copied().collect();
    let candidates: Vec<usize> = (0..n).filter(|j| !obs.seen.contains_key(j)).collect();

    let mut probes = Vec::new();
    if !candidates.is_empty() {
        let problem = DesignProblem::new(
            yk.select_columns(&candidates),
            candidates.iter().map(|&j| ctx.t_hat[j]).collect(),
            Budget::Time(time_target),
            Scalarization::D,
        )
        .with_fixed(yk.select_columns(&observed));
        let opts = EdOptions {
            strict: cfg.strict,
            ..EdOptions::default()
        };
        match min_variance_ed(&problem, &opts) {
            Ok(plan) => probes = plan.s.into_iter().map(|i| candidates[i]).collect(),
            Err(Error::InfeasibleBudget { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    let mut s = Vec::new();
    for &j in &probes {
        if probe(j, ctx, oracle, clock, cfg.tau, obs)? {
            s.push(j);
        }
    }
    let e_s: Vec<f64> = s.iter().map(|j| obs.seen[j].cv_error).collect();

    if obs.seen.is_empty() {
        return Ok(RoundResult {
            log: RoundLog {
                round,
                k,
                time_target,
                s,
                e_s,
                t_best: Vec::new(),
                validation_error: majority_error(oracle),
                elapsed: clock.elapsed(),
                no_model: true,
            },
            imputed: None,
            ensemble: None,
        });
    }

    let imputed = ImputedVector::from_observations(&yk, &obs.errors());
    // rank by prediction, trusting observed errors where we have them
    let mut score = imputed.predicted.clone();
    for (&j, e) in &obs.seen {
        score[j] = e.cv_error;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| score[a].total_cmp(&score[b]).then(a.cmp(&b)));
    let t_best: Vec<usize> = order.into_iter().take(cfg.n_best.min(n)).collect();
    for &j in &t_best {
        probe(j, ctx, oracle, clock, cfg.tau, obs)?;
    }

    let mut pool: Vec<usize> = t_best.iter().copied().filter(|j| obs.seen.contains_key(j)).collect();
    if pool.is_empty() {
        pool = obs.seen.keys().copied().collect();
    }
    let errors: Vec<f64> = pool.iter().map(|j| obs.seen[j].cv_error).collect();
    let preds: Vec<Vec<usize>> = pool.iter().map(|j| obs.seen[j].predictions.clone()).collect();
    let ensemble = ensemble_selection(&pool, &errors, &preds, oracle.labels(), oracle.n_classes());

    Ok(RoundResult {
        log: RoundLog {
            round,
            k,
            time_target,
            s,
            e_s,
            t_best,
            validation_error: ensemble.selection_error,
            elapsed: clock.elapsed(),
            no_model: false,
        },
        imputed: Some(imputed),
        ensemble: Some(ensemble),
    })
}

#[derive(Debug, Clone)]
pub struct OnlineResult {
    /// `None` means the majority-class fallback.
    pub ensemble: Option<Ensemble>,
    pub validation_error: f64,
    pub best_round: Option<usize>,
    pub rounds: Vec<RoundLog>,
    pub elapsed: f64,
}

impl OnlineResult {
    pub fn round_log_jsonl(&self) -> String {
        self.rounds
            .iter()
            .map(|r| serde_json::to_string(r).expect("round log serializes") + "\n")
            .collect()
    }
}

/// The doubling controller.
///
/// Rounds run while `τ̃ ≤ τ/2` and the clock has not passed `τ/2`; `τ̃`
/// doubles after each round. The rank grows by one after any round whose
/// validation error is strictly below the previous round's (the first round
/// only sets the reference). The best round's ensemble is returned, the
/// earliest on ties.
pub fn run_online(
    ctx: &OnlineContext,
    oracle: &mut dyn ModelOracle,
    clock: &mut Clock,
    cfg: &OnlineConfig,
) -> Result<OnlineResult> {
    if !(cfg.tau > 0.0 && cfg.tau0 > 0.0) {
        return Err(Error::InvalidArgument("budgets must be positive".into()));
    }
    if cfg.k0 == 0 || cfg.n_best == 0 {
        return Err(Error::InvalidArgument("k0 and N must be at least 1".into()));
    }
    let k_max = ctx.y.nrows().min(ctx.y.ncols()).max(1);
    let mut k = cfg.k0.min(k_max);
    let mut target = cfg.tau0;
    let mut obs = Observations::default();
    let mut rounds = Vec::new();
    let mut prev: Option<f64> = None;
    let mut best: Option<(f64, usize, Option<Ensemble>)> = None;

    while target <= cfg.tau / 2.0 && clock.elapsed() <= cfg.tau / 2.0 {
        if cfg.fresh_rounds {
            obs = Observations::default();
        }
        let round = rounds.len() + 1;
        let r = fit_one_round(ctx, oracle, clock, &mut obs, round, k, target, cfg)?;
        let err = r.log.validation_error;
        if best.as_ref().is_none_or(|b| err < b.0) {
            best = Some((err, round, r.ensemble.clone()));
        }
        if prev.is_some_and(|p| err < p) {
            k = (k + 1).min(k_max);
        }
        prev = Some(err);
        rounds.push(r.log);
        target *= 2.0;
    }

    let (validation_error, best_round, ensemble) = match best {
        Some((e, r, ens)) => (e, Some(r), ens),
        None => (majority_error(oracle), None, None),
    };
    Ok(OnlineResult {
        ensemble,
        validation_error,
        best_round,
        rounds,
        elapsed: clock.elapsed(),
    })
}

/// An ensemble whose members have been refitted on the full training data.
pub struct TrainedEnsemble {
    pub ensemble: Option<Ensemble>,
    pub members: BTreeMap<usize, Box<dyn Classifier>>,
    pub n_classes: usize,
    /// Majority class of the training data, used when `ensemble` is `None`.
    pub fallback: usize,
}

impl TrainedEnsemble {
    /// Refit every member on `train`; `model_seed` gives each member's seed.
    pub fn fit(
        ensemble: Option<Ensemble>,
        collection: &[ModelSpec],
        train: &Dataset,
        model_seed: impl Fn(usize) -> u64,
    ) -> Result<Self> {
        let mut members: BTreeMap<usize, Box<dyn Classifier>> = BTreeMap::new();
        if let Some(ens) = &ensemble {
            for m in &ens.members {
                let model = fit_model(
                    &collection[m.model],
                    &train.features,
                    &train.labels,
                    train.n_classes(),
                    model_seed(m.model),
                )?;
                members.insert(m.model, model);
            }
        }
        Ok(Self {
            ensemble,
            members,
            n_classes: train.n_classes(),
            fallback: train.majority_class(),
        })
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        match &self.ensemble {
            None => Ok(vec![self.fallback; x.nrows()]),
            Some(ens) => predict(ens, &self.members, x, self.n_classes),
        }
    }
}

/// Majority vote of trained members with multiplicity.
pub fn predict(
    ensemble: &Ensemble,
    trained: &BTreeMap<usize, Box<dyn Classifier>>,
    x: &DMatrix<f64>,
    n_classes: usize,
) -> Result<Vec<usize>> {
    let preds = ensemble
        .members
        .iter()
        .map(|m| {
            trained
                .get(&m.model)
                .map(|c| c.predict(x))
                .ok_or_else(|| Error::Contract(format!("ensemble member {} was never trained", m.model)))
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[usize]> = preds.iter().map(Vec::as_slice).collect();
    Ok(ensemble.vote(&refs, n_classes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factorization::factorize;
    use crate::learners::EnsembleMember;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Ten models with known held-out predictions on 20 points; model `j`
    /// gets the first `j` points wrong.
    fn ladder(costs: Vec<f64>) -> (DMatrix<f64>, TableOracle) {
        let labels: Vec<usize> = (0..20).map(|i| i % 2).collect();
        let preds: Vec<Vec<usize>> = (0..10)
            .map(|j| labels.iter().enumerate().map(|(i, &l)| if i < j { 1 - l } else { l }).collect())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let e = DMatrix::from_fn(15, 10, |_, j| j as f64 / 20.0 + 0.01 * rng.random::<f64>());
        let f = factorize(&e);
        (
            f.y,
            TableOracle {
                predictions: preds,
                costs,
                labels,
                n_classes: 2,
            },
        )
    }

    fn cfg(tau: f64, tau0: f64) -> OnlineConfig {
        OnlineConfig {
            tau,
            tau0,
            k0: 1,
            n_best: 3,
            strict: true,
            fresh_rounds: false,
        }
    }

    #[test]
    fn clocks() {
        let mut v = Clock::virtual_clock();
        v.charge(1.5);
        v.charge(-3.0);
        assert_eq!(v.elapsed(), 1.5);
        let mut w = Clock::wall();
        w.charge(100.0);
        assert!(w.elapsed() < 100.0);
    }

    #[test]
    fn doubling_targets() {
        let (y, mut oracle) = ladder(vec![0.01; 10]);
        let t_hat = vec![0.01; 10];
        let ctx = OnlineContext { y: &y, t_hat: &t_hat };
        let mut clock = Clock::virtual_clock();
        let r = run_online(&ctx, &mut oracle, &mut clock, &cfg(16.0, 1.0)).unwrap();
        let targets: Vec<f64> = r.rounds.iter().map(|l| l.time_target).collect();
        assert_eq!(targets, vec![1.0, 2.0, 4.0, 8.0]);
    }

    #[test]
    fn tiny_target_gives_no_model_round() {
        let (y, mut oracle) = ladder(vec![5.0; 10]);
        let t_hat = vec![5.0; 10];
        let ctx = OnlineContext { y: &y, t_hat: &t_hat };
        let mut clock = Clock::virtual_clock();
        let mut obs = Observations::default();
        let r = fit_one_round(&ctx, &mut oracle, &mut clock, &mut obs, 1, 2, 0.5, &cfg(100.0, 0.5)).unwrap();
        assert!(r.log.no_model);
        assert_eq!(r.log.validation_error, 0.5);
        assert!(r.ensemble.is_none());
    }

    #[test]
    fn all_rounds_without_models_fall_back_to_majority() {
        let (y, mut oracle) = ladder(vec![50.0; 10]);
        let t_hat = vec![50.0; 10];
        let ctx = OnlineContext { y: &y, t_hat: &t_hat };
        let mut clock = Clock::virtual_clock();
        let r = run_online(&ctx, &mut oracle, &mut clock, &cfg(16.0, 1.0)).unwrap();
        assert!(r.ensemble.is_none());
        assert!(r.rounds.iter().all(|l| l.no_model));
        assert_eq!(r.validation_error, 0.5);
    }

    #[test]
    fn late_results_are_discarded() {
        // every evaluation costs ten times its hint
        struct Slow(TableOracle);
        impl ModelOracle for Slow {
            fn evaluate(&mut self, model: usize) -> Result<Evaluation> {
                let mut ev = self.0.evaluate(model)?;
                ev.cost *= 10.0;
                Ok(ev)
            }
            fn cost_hint(&self, model: usize) -> Option<f64> {
                self.0.cost_hint(model)
            }
            fn labels(&self) -> &[usize] {
                self.0.labels()
            }
            fn n_classes(&self) -> usize {
                2
            }
        }
        let (y, oracle) = ladder(vec![0.5; 10]);
        let t_hat = vec![0.5; 10];
        let ctx = OnlineContext { y: &y, t_hat: &t_hat };
        let mut clock = Clock::virtual_clock();
        let r = run_online(&ctx, &mut Slow(oracle), &mut clock, &cfg(2.0, 0.5)).unwrap();
        assert!(r.ensemble.is_none());
        assert_eq!(r.elapsed, 5.0);
        assert!(r.rounds.iter().all(|l| l.no_model && l.s.is_empty()));
    }

    #[test]
    fn single_best_when_n_is_one() {
        let (y, mut oracle) = ladder(vec![0.1; 10]);
        let t_hat = vec![0.1; 10];
        let ctx = OnlineContext { y: &y, t_hat: &t_hat };
        let mut clock = Clock::virtual_clock();
        let mut obs = Observations::default();
        let c = OnlineConfig { n_best: 1, ..cfg(100.0, 1.0) };
        let r = fit_one_round(&ctx, &mut oracle, &mut clock, &mut obs, 1, 2, 1.0, &c).unwrap();
        let ens = r.ensemble.unwrap();
        assert_eq!(ens.members.len(), 1);
        assert_eq!(ens.members[0].model, r.log.t_best[0]);
    }

    #[test]
    fn budget_cap_holds_and_logs_repeat() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let costs: Vec<f64> = (0..10).map(|_| rng.random_range(0.05..2.0)).collect();
        let (y, oracle) = ladder(costs.clone());
        let ctx = OnlineContext { y: &y, t_hat: &costs };
        let run = || {
            let mut o = oracle.clone();
            let mut clock = Clock::virtual_clock();
            run_online(&ctx, &mut o, &mut clock, &cfg(6.0, 0.2)).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.round_log_jsonl(), b.round_log_jsonl());
        assert!(a.elapsed <= 6.0);
        let ranks: Vec<usize> = a.rounds.iter().map(|r| r.k).collect();
        assert!(ranks.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
        let min = a.rounds.iter().map(|r| r.validation_error).fold(f64::INFINITY, f64::min);
        assert_eq!(a.validation_error, min);
    }

    #[test]
    fn rank_follows_validation_trace() {
        // replay of the stated rule on the error sequence 0.4, 0.3, 0.3
        let errs = [0.4, 0.3, 0.3];
        let mut k = 2;
        let mut prev: Option<f64> = None;
        let mut used = Vec::new();
        for e in errs {
            used.push(k);
            if prev.is_some_and(|p| e < p) {
                k += 1;
            }
            prev = Some(e);
        }
        assert_eq!(used, vec![2, 2, 3]);
        assert_eq!(k, 3);
    }

    #[test]
    fn rank_one_row_is_imputed_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<f64> = (0..12).map(|_| rng.random_range(0.2..1.0)).collect();
        let b: Vec<f64> = (0..8).map(|_| rng.random_range(0.05..0.9)).collect();
        let e = DMatrix::from_fn(12, 8, |i, j| a[i] * b[j]);
        let f = factorize(&e.rows(0, 11).into_owned());
        let truth: Vec<f64> = (0..8).map(|j| e[(11, j)]).collect();
        let labels = vec![0usize; 4];
        let mut oracle = FixedErrors { errors: truth.clone(), labels };
        let t_hat = vec![1.0; 8];
        let ctx = OnlineContext { y: &f.y, t_hat: &t_hat };
        let mut clock = Clock::virtual_clock();
        let mut obs = Observations::default();
        let c = OnlineConfig { n_best: 2, ..cfg(100.0, 1.0) };
        let r = fit_one_round(&ctx, &mut oracle, &mut clock, &mut obs, 1, 1, 1.0, &c).unwrap();
        let imp = r.imputed.unwrap();
        for (p, t) in imp.predicted.iter().zip(&truth) {
            assert!((p - t).abs() < 1e-6);
        }
        let best = (0..8).min_by(|&x, &y| truth[x].total_cmp(&truth[y])).unwrap();
        assert!(r.log.t_best.contains(&best));
    }

    /// Reports fixed errors; predictions are all zeros.
    struct FixedErrors {
        errors: Vec<f64>,
        labels: Vec<usize>,
    }

    impl ModelOracle for FixedErrors {
        fn evaluate(&mut self, model: usize) -> Result<Evaluation> {
            Ok(Evaluation {
                cv_error: self.errors[model],
                predictions: vec![0; self.labels.len()],
                cost: 1.0,
            })
        }
        fn cost_hint(&self, _: usize) -> Option<f64> {
            Some(1.0)
        }
        fn labels(&self) -> &[usize] {
            &self.labels
        }
        fn n_classes(&self) -> usize {
            2
        }
    }

    struct Constant(usize);

    impl Classifier for Constant {
        fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
            vec![self.0; x.nrows()]
        }
    }

    fn member(model: usize, multiplicity: usize, cv_error: f64) -> EnsembleMember {
        EnsembleMember {
            model,
            multiplicity,
            cv_error,
        }
    }

    #[test]
    fn predict_votes_with_multiplicity_and_tie_break() {
        let x = DMatrix::zeros(1, 1);
        let mut trained: BTreeMap<usize, Box<dyn Classifier>> = BTreeMap::new();
        trained.insert(0, Box::new(Constant(0)));
        trained.insert(1, Box::new(Constant(1)));
        let single = Ensemble {
            members: vec![member(1, 1, 0.2)],
            selection_error: 0.2,
        };
        assert_eq!(predict(&single, &trained, &x, 2).unwrap(), vec![1]);
        let aab = Ensemble {
            members: vec![member(0, 2, 0.3), member(1, 1, 0.1)],
            selection_error: 0.0,
        };
        assert_eq!(predict(&aab, &trained, &x, 2).unwrap(), vec![0]);
        let tie = Ensemble {
            members: vec![member(0, 1, 0.3), member(1, 1, 0.1)],
            selection_error: 0.0,
        };
        assert_eq!(predict(&tie, &trained, &x, 2).unwrap(), vec![1]);
    }

    #[test]
    fn untrained_member_is_a_contract_error() {
        let ens = Ensemble {
            members: vec![member(7, 1, 0.1)],
            selection_error: 0.1,
        };
        let r = predict(&ens, &BTreeMap::new(), &DMatrix::zeros(1, 1), 2);
        assert!(matches!(r, Err(Error::Contract(_))));
    }
}
