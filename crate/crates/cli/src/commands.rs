use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use nalgebra::DMatrix;
use serde::Serialize;

use modelsel_core::corpus::{
    holdout_split, load_dataset, load_manifest, make_splits, CsvOptions, Dataset, ManifestEntry,
};
use modelsel_core::factorization::factorize;
use modelsel_core::harness::{self, Method, RegretConfig, RuntimeSource, SweepConfig};
use modelsel_core::learners::{balanced_error_rate, default_collection, load_collection, CollectionSize, Ensemble, ModelSpec};
use modelsel_core::offline::{
    self, build_matrices, fit_all_runtime, DatasetSize, OfflineArtifacts, COLLECTION_FILE, DATASETS_FILE,
    ERRORS_FILE, MASK_FILE, PREDICTORS_FILE, RUNTIMES_FILE,
};
use modelsel_core::online::{run_online, Clock, CvOracle, OnlineConfig, OnlineContext, TrainedEnsemble};
use modelsel_core::synth::{corpus_tables, DEFAULT_CORPUS_SEED};
use modelsel_core::tables::{fmt_f64, read_matrix_csv, write_rows};

use crate::output::{usage, OutDir};
use crate::{
    ClockArg, Common, CsvArgs, FitArgs, GenCorpusArgs, OfflineArgs, ReportKind, RuntimeArg, Source,
};

const MANIFEST: &str = "manifest.json";

fn csv_options(a: &CsvArgs) -> CsvOptions {
    CsvOptions {
        has_header: a.has_header,
        label_col: a.label_col,
    }
}

fn names(files: &[&str]) -> Vec<String> {
    files.iter().map(|s| (*s).to_owned()).collect()
}

pub fn gen_corpus(c: &Common, a: &GenCorpusArgs) -> Result<()> {
    let seed = c.seed.unwrap_or(DEFAULT_CORPUS_SEED);
    let tables = corpus_tables(a.size, seed);
    let mut files: Vec<String> = tables.iter().map(|t| format!("{}.csv", t.name)).collect();
    files.extend(names(&["corpus.json", MANIFEST]));
    let mut out = OutDir::claim(&c.out, &files, c.force)?;
    let mut entries = Vec::new();
    for t in &tables {
        let file = format!("{}.csv", t.name);
        t.write(&out.file(&file))?;
        entries.push(ManifestEntry {
            name: t.name.clone(),
            path: PathBuf::from(file),
        });
    }
    let corpus = out.file("corpus.json");
    std::fs::write(&corpus, serde_json::to_string_pretty(&entries)? + "\n")
        .with_context(|| format!("writing {}", corpus.display()))?;
    out.write_manifest(MANIFEST, "gen-corpus", a, seed, &[])?;
    println!("wrote {} datasets and {}", tables.len(), corpus.display());
    Ok(())
}

fn resolve_collection(spec: &str) -> Result<Vec<ModelSpec>> {
    Ok(match spec {
        "small" => default_collection(CollectionSize::Small),
        "full" => default_collection(CollectionSize::Full),
        path => load_collection(Path::new(path))?,
    })
}

/// Load every manifest dataset, naming each after its manifest entry.
/// Unreadable datasets are skipped with a warning unless `strict`.
fn load_corpus(manifest: &Path, csv: &CsvArgs, strict: bool) -> Result<(Vec<Dataset>, Vec<PathBuf>)> {
    let entries = load_manifest(manifest)?;
    let opts = csv_options(csv);
    let mut data = Vec::new();
    let mut paths = vec![manifest.to_owned()];
    for e in entries {
        match load_dataset(&e.path, &opts) {
            Ok(mut d) => {
                d.name = e.name;
                data.push(d);
                paths.push(e.path);
            }
            Err(err) if strict => return Err(err.into()),
            Err(err) => eprintln!("warning: skipping {}: {err}", e.name),
        }
    }
    if data.is_empty() {
        return Err(modelsel_core::Error::InsufficientData(format!("{}: no dataset could be loaded", manifest.display())).into());
    }
    Ok((data, paths))
}

pub fn offline(c: &Common, a: &OfflineArgs) -> Result<()> {
    let seed = c.seed.unwrap_or(0);
    let virtual_times = match &a.virtual_times {
        None => None,
        Some(v) => Some(PathBuf::from(
            v.strip_prefix("from:")
                .ok_or_else(|| usage(format!("--virtual-times expects from:PATH, got `{v}`")))?,
        )),
    };
    let files = [ERRORS_FILE, RUNTIMES_FILE, MASK_FILE, DATASETS_FILE, PREDICTORS_FILE, COLLECTION_FILE, MANIFEST];
    let mut out = OutDir::claim(&c.out, &names(&files), c.force)?;
    let collection = resolve_collection(&a.collection)?;
    let (corpus, mut inputs) = load_corpus(&a.manifest, &a.csv, a.strict)?;
    let (errors, mut runtimes) = build_matrices(&corpus, &collection, a.folds, seed)?;

    if let Some(path) = &virtual_times {
        let stored = read_matrix_csv(path)?;
        let ids: Vec<String> = errors.model_ids.iter().map(usize::to_string).collect();
        if stored.col_names != ids {
            return Err(modelsel_core::Error::InvalidArgument(format!(
                "{}: model columns do not match the collection",
                path.display()
            ))
            .into());
        }
        for (i, name) in errors.dataset_ids.iter().enumerate() {
            let r = stored.row_names.iter().position(|n| n == name).ok_or_else(|| {
                modelsel_core::Error::InvalidArgument(format!("{}: no row for dataset `{name}`", path.display()))
            })?;
            for j in 0..ids.len() {
                runtimes.values[(i, j)] = stored.values[(r, j)];
            }
        }
        inputs.push(path.clone());
    }

    let sizes: Vec<DatasetSize> = corpus.iter().map(DatasetSize::of).collect();
    let predictors = fit_all_runtime(&runtimes, &sizes, &errors.model_ids, None, true)?;
    let (m, n) = errors.shape();
    let failures = errors.failures();
    let art = OfflineArtifacts {
        collection,
        errors,
        runtimes,
        sizes,
        predictors,
    };
    art.save(&out.root)?;
    for f in &files[..files.len() - 1] {
        out.file(f);
    }
    #[derive(Serialize)]
    struct Config<'a> {
        #[serde(flatten)]
        args: &'a OfflineArgs,
        jobs: usize,
    }
    out.write_manifest(MANIFEST, "offline", &Config { args: a, jobs: c.jobs }, seed, &inputs)?;
    println!("datasets: {m}, models: {n}, failed cells: {failures}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct Metrics {
    train: f64,
    validation: f64,
    test: f64,
}

#[derive(Debug, Serialize)]
struct FitArtifact<'a> {
    no_model: bool,
    ensemble: Option<&'a Ensemble>,
    member_labels: Vec<String>,
    fallback_class: Option<String>,
    search_validation_error: f64,
    best_round: Option<usize>,
    rounds: usize,
    elapsed: f64,
    holdout_ber: &'a Metrics,
}

fn ber_on(trained: &TrainedEnsemble, part: &Dataset, n_classes: usize) -> Result<f64> {
    if part.n_points() == 0 {
        return Ok(f64::NAN);
    }
    let pred = trained.predict(&part.features)?;
    Ok(balanced_error_rate(&part.labels, &pred, n_classes)?)
}

pub fn fit(c: &Common, a: &FitArgs) -> Result<()> {
    let seed = c.seed.unwrap_or(0);
    if !(a.tau > 0.0) {
        return Err(usage("--tau must be positive"));
    }
    let files = ["round_log.jsonl", "ensemble.json", "metrics.csv", MANIFEST];
    let mut out = OutDir::claim(&c.out, &names(&files), c.force)?;
    let art = OfflineArtifacts::load(&a.artifacts)?;
    let data = load_dataset(&a.dataset, &csv_options(&a.csv))?;
    let split = holdout_split(&data.labels, data.n_classes(), seed);
    let train = data.subset(&split.train);
    let validation = data.subset(&split.validation);
    let test = data.subset(&split.test);

    let f = factorize(&art.errors.values);
    let t_hat: Vec<f64> = art
        .predictors
        .iter()
        .map(|p| p.predict(train.n_points(), train.p_features()))
        .collect();
    let mut cfg = OnlineConfig::defaults(a.tau, &f.singular_values);
    if let Some(t0) = a.tau0 {
        cfg.tau0 = t0;
    }
    if let Some(k0) = a.k0 {
        cfg.k0 = k0;
    }
    cfg.n_best = a.n_best;
    cfg.strict = a.strict_budget;
    cfg.fresh_rounds = a.fresh_rounds;

    let mut oracle = CvOracle {
        collection: &art.collection,
        data: &train,
        split: make_splits(&train.labels, train.n_classes(), a.folds, seed)?,
        costs: (a.clock == ClockArg::Virtual).then(|| t_hat.clone()),
    };
    let mut clock = match a.clock {
        ClockArg::Virtual => Clock::virtual_clock(),
        ClockArg::Wall => Clock::wall(),
    };
    let ctx = OnlineContext { y: &f.y, t_hat: &t_hat };
    let result = run_online(&ctx, &mut oracle, &mut clock, &cfg)?;

    let trained = TrainedEnsemble::fit(result.ensemble.clone(), &art.collection, &train, |j| {
        seed.wrapping_add(j as u64)
    })?;
    let k = data.n_classes();
    let metrics = Metrics {
        train: ber_on(&trained, &train, k)?,
        validation: ber_on(&trained, &validation, k)?,
        test: ber_on(&trained, &test, k)?,
    };

    let log = out.file("round_log.jsonl");
    std::fs::write(&log, result.round_log_jsonl()).with_context(|| format!("writing {}", log.display()))?;
    let artifact = FitArtifact {
        no_model: result.ensemble.is_none(),
        ensemble: result.ensemble.as_ref(),
        member_labels: result
            .ensemble
            .iter()
            .flat_map(|e| e.members.iter().map(|m| art.collection[m.model].label()))
            .collect(),
        fallback_class: result
            .ensemble
            .is_none()
            .then(|| train.class_names[train.majority_class()].clone()),
        search_validation_error: result.validation_error,
        best_round: result.best_round,
        rounds: result.rounds.len(),
        elapsed: result.elapsed,
        holdout_ber: &metrics,
    };
    let ens = out.file("ensemble.json");
    std::fs::write(&ens, serde_json::to_string_pretty(&artifact)? + "\n")
        .with_context(|| format!("writing {}", ens.display()))?;
    write_rows(
        &out.file("metrics.csv"),
        &["split", "balanced_error_rate"],
        &[
            vec!["train".into(), fmt_f64(metrics.train)],
            vec!["validation".into(), fmt_f64(metrics.validation)],
            vec!["test".into(), fmt_f64(metrics.test)],
        ],
    )?;
    #[derive(Serialize)]
    struct Config<'a> {
        #[serde(flatten)]
        args: &'a FitArgs,
        resolved: &'a OnlineConfig,
    }
    let inputs: Vec<PathBuf> = [ERRORS_FILE, PREDICTORS_FILE, COLLECTION_FILE]
        .iter()
        .map(|f| a.artifacts.join(f))
        .chain(std::iter::once(a.dataset.clone()))
        .collect();
    out.write_manifest(MANIFEST, "fit", &Config { args: a, resolved: &cfg }, seed, &inputs)?;
    if artifact.no_model {
        println!("no_model: budget too small, predicting the majority class");
    } else {
        println!("ensemble of {} models: {}", artifact.member_labels.len(), artifact.member_labels.join(" + "));
    }
    println!(
        "rounds: {}, elapsed: {:.6} s, BER train {:.4} validation {:.4} test {:.4}",
        artifact.rounds, result.elapsed, metrics.train, metrics.validation, metrics.test
    );
    Ok(())
}

struct Loaded {
    errors: DMatrix<f64>,
    dataset_ids: Vec<String>,
    artifacts: Option<OfflineArtifacts>,
    inputs: Vec<PathBuf>,
}

fn load_source(s: &Source) -> Result<Loaded> {
    let artifacts = s.artifacts.as_deref().map(OfflineArtifacts::load).transpose()?;
    let mut inputs = Vec::new();
    if let Some(dir) = &s.artifacts {
        inputs.push(dir.join(ERRORS_FILE));
    }
    match (&s.errors, &artifacts) {
        (Some(p), _) => {
            let m = read_matrix_csv(p)?;
            if let Some(art) = &artifacts {
                if m.values.shape() != art.errors.values.shape() {
                    return Err(usage(format!("{} does not match the artifacts' shape", p.display())));
                }
            }
            inputs.push(p.clone());
            Ok(Loaded {
                errors: m.values,
                dataset_ids: m.row_names,
                artifacts,
                inputs,
            })
        }
        (None, Some(art)) => Ok(Loaded {
            errors: art.errors.values.clone(),
            dataset_ids: art.errors.dataset_ids.clone(),
            artifacts,
            inputs,
        }),
        (None, None) => Err(usage("give --artifacts or --errors")),
    }
}

fn runtime_source<'a>(choice: RuntimeArg, art: Option<&'a OfflineArtifacts>) -> Result<RuntimeSource<'a>> {
    Ok(match (choice, art) {
        (RuntimeArg::Uniform, _) => RuntimeSource::Uniform,
        (RuntimeArg::Predictors, Some(a)) => RuntimeSource::Predictors(&a.runtimes, &a.sizes),
        (RuntimeArg::ColumnMeans, Some(a)) => RuntimeSource::ColumnMeans(&a.runtimes),
        (_, None) => return Err(usage("runtime estimates need --artifacts (or use --runtimes uniform)")),
    })
}

/// Median over datasets of the summed runtime of every model.
fn median_row_total(art: &OfflineArtifacts) -> f64 {
    let totals: Vec<f64> = art.runtimes.values.row_iter().map(|r| r.sum()).collect();
    harness::quantile(&totals, 0.5)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| x.trim().parse::<T>().map_err(|_| usage(format!("bad {what} `{x}`"))))
        .collect()
}

fn parse_budgets(s: &str) -> Result<Vec<usize>> {
    if let Some((a, b)) = s.split_once("..") {
        let lo: usize = a.trim().parse().map_err(|_| usage(format!("bad budget range `{s}`")))?;
        let hi: usize = b.trim().parse().map_err(|_| usage(format!("bad budget range `{s}`")))?;
        if lo == 0 || lo > hi {
            return Err(usage(format!("bad budget range `{s}`")));
        }
        return Ok((lo..=hi).collect());
    }
    parse_list(s, "budget")
}

pub fn report(c: &Common, kind: &ReportKind) -> Result<()> {
    let seed = c.seed.unwrap_or(0);
    match kind {
        ReportKind::Spectrum(a) => {
            let mut out = OutDir::claim(&c.out, &names(&["spectrum.csv", "manifest-spectrum.json"]), c.force)?;
            let src = load_source(&a.source)?;
            let rep = harness::spectrum_report(&src.errors);
            harness::write_spectrum_csv(&out.file("spectrum.csv"), &rep)?;
            out.write_manifest("manifest-spectrum.json", "report spectrum", kind, seed, &src.inputs)?;
            println!("singular values >= 1% of the largest: {}, >= 3%: {}", rep.count_1pct, rep.count_3pct);
        }
        ReportKind::Nmf(a) => {
            let files = ["nmf_clusters.csv", "nmf_heatmap.csv", "nmf_entropy.csv", "manifest-nmf.json"];
            let mut out = OutDir::claim(&c.out, &names(&files), c.force)?;
            if a.k == 0 {
                return Err(usage("--k must be at least 1"));
            }
            let art = OfflineArtifacts::load(&a.artifacts)?;
            let rep = harness::nmf_cluster_report(&art.errors.values, &art.collection, a.k, seed)?;
            harness::write_nmf_csvs(&out.root, &rep, &art.collection)?;
            for f in &files[..3] {
                out.file(f);
            }
            out.write_manifest("manifest-nmf.json", "report nmf", kind, seed, &[a.artifacts.join(ERRORS_FILE)])?;
            println!("NMF k={} final objective {:.6e}", a.k, rep.final_objective);
        }
        ReportKind::Regret(a) => {
            let files = ["regret_detail.csv", "regret_summary.csv", "regret_rank.csv", "manifest-regret.json"];
            let mut out = OutDir::claim(&c.out, &names(&files), c.force)?;
            let methods: Vec<Method> = a
                .methods
                .split(',')
                .map(|m| Method::parse(m.trim()).ok_or_else(|| usage(format!("unknown method `{m}`"))))
                .collect::<Result<_>>()?;
            let src = load_source(&a.source)?;
            let runtimes = runtime_source(a.runtimes, src.artifacts.as_ref())
                .or_else(|e| if src.artifacts.is_none() { Ok(RuntimeSource::Uniform) } else { Err(e) })?;
            let time_budgets = match &a.time_budgets {
                Some(s) => parse_list(s, "time budget")?,
                None if methods.contains(&Method::EdTime) => {
                    let total = src.artifacts.as_ref().map_or(src.errors.ncols() as f64, median_row_total);
                    (0..6).map(|i| total / f64::powi(2.0, 6 - i)).collect()
                }
                None => Vec::new(),
            };
            let cfg = RegretConfig {
                methods,
                count_budgets: parse_budgets(&a.budgets)?,
                time_budgets,
                seeds: a.seeds,
                base_seed: seed,
                strict: a.strict_budget,
                ..RegretConfig::default()
            };
            let records = harness::meta_loocv_regret(&src.errors, &src.dataset_ids, runtimes, &cfg)?;
            let summary = harness::summarize_regret(&records);
            harness::write_regret_csv(&out.file("regret_detail.csv"), &records)?;
            harness::write_regret_summary_csv(&out.file("regret_summary.csv"), &summary)?;
            harness::write_rank_csv(&out.file("regret_rank.csv"), &harness::rank_curve(&records))?;
            out.write_manifest("manifest-regret.json", "report regret", &cfg, seed, &src.inputs)?;
            println!("{} detail rows, {} summary rows", records.len(), summary.len());
        }
        ReportKind::Coldstart(a) => {
            let files = ["coldstart_detail.csv", "coldstart_summary.csv", "manifest-coldstart.json"];
            let mut out = OutDir::claim(&c.out, &names(&files), c.force)?;
            let src = load_source(&a.source)?;
            let runtimes = runtime_source(a.runtimes, src.artifacts.as_ref())
                .or_else(|e| if src.artifacts.is_none() { Ok(RuntimeSource::Uniform) } else { Err(e) })?;
            let budget = a.probe_budget.unwrap_or_else(|| {
                src.artifacts.as_ref().map_or(src.errors.ncols() as f64, median_row_total) / 8.0
            });
            let records = harness::cold_start_compare(&src.errors, &src.dataset_ids, runtimes, budget, 0.01)?;
            let summary = harness::summarize_cold_start(&records);
            harness::write_cold_start_csv(&out.file("coldstart_detail.csv"), &records)?;
            harness::write_cold_start_summary_csv(&out.file("coldstart_summary.csv"), &summary)?;
            #[derive(Serialize)]
            struct Config<'a> {
                report: &'a ReportKind,
                probe_budget: f64,
            }
            out.write_manifest(
                "manifest-coldstart.json",
                "report coldstart",
                &Config { report: kind, probe_budget: budget },
                seed,
                &src.inputs,
            )?;
            for s in &summary {
                println!(
                    "{:<18} relative RMSE {:.4}  best hit {:.3}  top-5 overlap {:.3}",
                    s.method.name(),
                    s.mean_relative_rmse,
                    s.best_hit_fraction,
                    s.mean_top_overlap
                );
            }
        }
        ReportKind::RuntimeAccuracy(a) => {
            let mut out = OutDir::claim(
                &c.out,
                &names(&["runtime_accuracy.csv", "manifest-runtime-accuracy.json"]),
                c.force,
            )?;
            let art = OfflineArtifacts::load(&a.artifacts)?;
            let rows = offline::runtime_accuracy_report(&art.collection, &art.runtimes, &art.sizes, !a.linear)?;
            offline::write_accuracy_csv(&out.file("runtime_accuracy.csv"), &rows)?;
            out.write_manifest(
                "manifest-runtime-accuracy.json",
                "report runtime-accuracy",
                kind,
                seed,
                &[a.artifacts.join(RUNTIMES_FILE), a.artifacts.join(DATASETS_FILE)],
            )?;
            for r in &rows {
                println!("{:<14} within 2x {:>6.2}%  within 4x {:>6.2}%", r.family, r.within_2, r.within_4);
            }
        }
        ReportKind::EnsembleSize(a) => {
            let files = ["online_outcomes.csv", "ensemble_sizes.csv", "manifest-ensemble-size.json"];
            let mut out = OutDir::claim(&c.out, &names(&files), c.force)?;
            let art = OfflineArtifacts::load(&a.artifacts)?;
            let (corpus, mut inputs) = load_corpus(&a.manifest, &a.csv, true)?;
            let names_in: Vec<&str> = corpus.iter().map(|d| d.name.as_str()).collect();
            if names_in != art.errors.dataset_ids.iter().map(String::as_str).collect::<Vec<_>>() {
                return Err(usage("the manifest's datasets do not match the artifacts' rows"));
            }
            let cfg = SweepConfig {
                budget_fraction: a.budget_fraction,
                n_folds: a.folds,
                seed,
                strict: a.strict_budget,
                fresh_rounds: a.fresh_rounds,
                ..SweepConfig::default()
            };
            let outcomes =
                harness::online_sweep(&corpus, &art.collection, &art.errors.values, &art.runtimes, &art.sizes, &cfg)?;
            let sizes: Vec<usize> = outcomes.iter().filter(|o| !o.no_model).map(|o| o.ensemble_size).collect();
            let hist = harness::ensemble_size_histogram(&sizes);
            harness::write_online_csv(&out.file("online_outcomes.csv"), &outcomes)?;
            harness::write_histogram_csv(&out.file("ensemble_sizes.csv"), &hist)?;
            inputs.push(a.artifacts.join(ERRORS_FILE));
            out.write_manifest("manifest-ensemble-size.json", "report ensemble-size", &cfg, seed, &inputs)?;
            println!(
                "{} ensembles, {:.1}% with at most 5 members",
                sizes.len(),
                100.0 * hist.fraction_at_most_5
            );
        }
    }
    Ok(())
}
