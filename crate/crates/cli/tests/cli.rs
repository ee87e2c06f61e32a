use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use modelsel_core::learners::{default_collection, save_collection, CollectionSize, ModelSpec};
use modelsel_core::tables::read_matrix_csv;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_modelsel"));
    c.env_remove("OBOE_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Seven models, one or two per family, re-indexed from zero.
fn write_small_collection(path: &Path) {
    let full = default_collection(CollectionSize::Small);
    let pick = [0usize, 8, 9, 15, 16, 24, 30];
    let models: Vec<ModelSpec> = pick
        .iter()
        .enumerate()
        .map(|(i, &j)| ModelSpec { index: i, ..full[j].clone() })
        .collect();
    save_collection(path, &models).unwrap();
}

/// Runtimes `1e-4·(1 + j)·n/100·(1 + p/10)` for every dataset row of
/// `datasets.csv`.
fn write_times(artifacts: &Path, out: &Path, models: usize) {
    let text = fs::read_to_string(artifacts.join("datasets.csv")).unwrap();
    let mut csv = String::from("dataset");
    for j in 0..models {
        csv.push_str(&format!(",{j}"));
    }
    csv.push('\n');
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let (n, p): (f64, f64) = (f[1].parse().unwrap(), f[2].parse().unwrap());
        csv.push_str(f[0]);
        for j in 0..models {
            let t = 1e-4 * (1.0 + j as f64) * (n / 100.0) * (1.0 + p / 10.0);
            csv.push_str(&format!(",{t:.16e}"));
        }
        csv.push('\n');
    }
    fs::write(out, csv).unwrap();
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    /// Generated corpus of `size` datasets, a seven-model collection, and
    /// offline artifacts built with deterministic virtual runtimes.
    fn new(size: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_owned();
        let corpus = root.join("corpus");
        ok(&["gen-corpus", "--size", &size.to_string(), "--out", s(&corpus)]);
        write_small_collection(&root.join("models.json"));
        let art = root.join("art");
        let manifest = corpus.join("corpus.json");
        let coll = root.join("models.json");
        ok(&["offline", "--manifest", s(&manifest), "--collection", s(&coll), "--folds", "3", "--out", s(&art)]);
        write_times(&art, &root.join("times.csv"), 7);
        let vt = format!("from:{}", s(&root.join("times.csv")));
        ok(&[
            "offline", "--manifest", s(&manifest), "--collection", s(&coll), "--folds", "3", "--virtual-times", &vt,
            "--out", s(&art), "--force",
        ]);
        Fixture { _dir: dir, root }
    }

    fn p(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

#[test]
fn offline_shapes_and_determinism() {
    let fx = Fixture::new(2);
    let e = read_matrix_csv(&fx.p("art/errors.csv")).unwrap();
    assert_eq!(e.values.shape(), (2, 7));
    let first_e = fs::read(fx.p("art/errors.csv")).unwrap();
    let first_t = fs::read(fx.p("art/runtimes.csv")).unwrap();
    // the virtual runtimes pass through unchanged
    let stored = read_matrix_csv(&fx.p("times.csv")).unwrap();
    assert_eq!(read_matrix_csv(&fx.p("art/runtimes.csv")).unwrap().values, stored.values);

    let vt = format!("from:{}", s(&fx.p("times.csv")));
    let out = ok(&[
        "offline", "--manifest", s(&fx.p("corpus/corpus.json")), "--collection", s(&fx.p("models.json")),
        "--folds", "3", "--virtual-times", &vt, "--out", s(&fx.p("again")),
    ]);
    assert!(out.contains("datasets: 2, models: 7, failed cells: 0"), "{out}");
    assert_eq!(fs::read(fx.p("again/errors.csv")).unwrap(), first_e);
    assert_eq!(fs::read(fx.p("again/runtimes.csv")).unwrap(), first_t);
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(fx.p("again/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "offline");
    assert_eq!(manifest["seed"], 0);
    assert!(manifest["inputs"].as_array().unwrap().len() >= 4);
    assert_eq!(manifest["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn unreadable_dataset_is_skipped_unless_strict() {
    let fx = Fixture::new(2);
    let manifest = fx.p("corpus/broken.json");
    fs::write(
        &manifest,
        r#"[{"name":"a","path":"synth-00-blobs.csv"},{"name":"gone","path":"missing.csv"},{"name":"b","path":"synth-01-xor.csv"}]"#,
    )
    .unwrap();
    let coll = fx.p("models.json");
    let o = run(&["offline", "--manifest", s(&manifest), "--collection", s(&coll), "--folds", "3", "--out", s(&fx.p("b"))]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("skipping gone"));
    let o = run(&[
        "offline", "--manifest", s(&manifest), "--collection", s(&coll), "--folds", "3", "--strict", "--out",
        s(&fx.p("c")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.csv"));
}

#[test]
fn fit_golden_round_log_and_repeatability() {
    let fx = Fixture::new(6);
    let args = |out: &str| {
        vec![
            "fit".to_owned(),
            "--artifacts".into(),
            s(&fx.p("art")).into(),
            "--dataset".into(),
            s(&fx.p("corpus/synth-05-categorical.csv")).into(),
            "--tau".into(),
            "0.05".into(),
            "--seed".into(),
            "7".into(),
            "--out".into(),
            s(&fx.p(out)).into(),
        ]
    };
    let a: Vec<String> = args("fit-a");
    let b: Vec<String> = args("fit-b");
    ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
    ok(&b.iter().map(String::as_str).collect::<Vec<_>>());
    for f in ["round_log.jsonl", "ensemble.json", "metrics.csv"] {
        assert_eq!(fs::read(fx.p("fit-a").join(f)).unwrap(), fs::read(fx.p("fit-b").join(f)).unwrap(), "{f}");
    }
    let log = fs::read_to_string(fx.p("fit-a/round_log.jsonl")).unwrap();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/round_log.jsonl");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(golden.parent().unwrap()).unwrap();
        fs::write(&golden, &log).unwrap();
    }
    assert_eq!(log, fs::read_to_string(&golden).unwrap());

    let ens: serde_json::Value = serde_json::from_slice(&fs::read(fx.p("fit-a/ensemble.json")).unwrap()).unwrap();
    assert_eq!(ens["no_model"], false);
    let metrics = fs::read_to_string(fx.p("fit-a/metrics.csv")).unwrap();
    assert!(metrics.starts_with("split,balanced_error_rate\ntrain,"));
}

#[test]
fn fit_with_hopeless_budget_writes_fallback() {
    let fx = Fixture::new(2);
    let out = ok(&[
        "fit", "--artifacts", s(&fx.p("art")), "--dataset", s(&fx.p("corpus/synth-01-xor.csv")), "--tau", "1e-7",
        "--clock", "wall", "--out", s(&fx.p("fb")),
    ]);
    assert!(out.contains("no_model"));
    let ens: serde_json::Value = serde_json::from_slice(&fs::read(fx.p("fb/ensemble.json")).unwrap()).unwrap();
    assert_eq!(ens["no_model"], true);
    assert!(ens["ensemble"].is_null());
    assert!(ens["fallback_class"].is_string());
}

#[test]
fn outputs_are_not_overwritten_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    ok(&["gen-corpus", "--size", "1", "--out", s(&out)]);
    let o = run(&["gen-corpus", "--size", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    ok(&["gen-corpus", "--size", "1", "--out", s(&out), "--force"]);
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["gen-corpus", "--size", "1"])
        .env("OBOE_OUT", dir.path().join("env-out"))
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.path().join("env-out/corpus.json").exists());
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["fit", "--tau", "1"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["report", "spectrum", "--errors", "/nonexistent/e.csv", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/e.csv"));
    let o = run(&["report", "spectrum", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn spectrum_of_rank_one_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let e = dir.path().join("e.csv");
    fs::write(&e, "dataset,0,1,2\na,0.1,0.2,0.3\nb,0.2,0.4,0.6\n").unwrap();
    ok(&["report", "spectrum", "--errors", s(&e), "--out", s(dir.path())]);
    let text = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    let sigma2: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
    let sigma1: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!((sigma1 - 0.7f64.sqrt()).abs() < 1e-12);
    assert!(sigma2.abs() < 1e-15);
}

#[test]
fn regret_report_shape() {
    let fx = Fixture::new(6);
    let out = fx.p("regret");
    ok(&[
        "report", "regret", "--artifacts", s(&fx.p("art")), "--methods", "ed_number,random", "--budgets", "1..10",
        "--seeds", "20", "--out", s(&out),
    ]);
    let summary = fs::read_to_string(out.join("regret_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 10);
    let detail = fs::read_to_string(out.join("regret_detail.csv")).unwrap();
    // ed_number caps at the 7 models; random: 20 seeds each
    assert_eq!(detail.lines().count(), 1 + 6 * 10 + 6 * 10 * 20);
    let rank = fs::read_to_string(out.join("regret_rank.csv")).unwrap();
    for line in rank.lines().skip(1) {
        let r: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!((1.0..=2.0).contains(&r));
    }
}

#[test]
fn runtime_accuracy_on_polynomial_times() {
    let fx = Fixture::new(24);
    let out = fx.p("acc");
    ok(&["report", "runtime-accuracy", "--artifacts", s(&fx.p("art")), "--linear", "--out", s(&out)]);
    let text = fs::read_to_string(out.join("runtime_accuracy.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert!(!rows.is_empty());
    for r in rows {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f[2].parse::<f64>().unwrap(), 100.0, "{r}");
        assert_eq!(f[3].parse::<f64>().unwrap(), 100.0, "{r}");
    }
}

#[test]
fn remaining_reports_run() {
    let fx = Fixture::new(6);
    let art = fx.p("art");
    let out = fx.p("rep");
    ok(&["report", "nmf", "--artifacts", s(&art), "--k", "2", "--out", s(&out)]);
    let clusters = fs::read_to_string(out.join("nmf_clusters.csv")).unwrap();
    assert_eq!(clusters.lines().count(), 1 + 7);
    ok(&["report", "coldstart", "--artifacts", s(&art), "--out", s(&out)]);
    let cs = fs::read_to_string(out.join("coldstart_summary.csv")).unwrap();
    assert!(cs.contains("knn_rows_baseline"));
    ok(&[
        "report", "ensemble-size", "--artifacts", s(&art), "--manifest", s(&fx.p("corpus/corpus.json")), "--folds",
        "3", "--out", s(&out),
    ]);
    let h = fs::read_to_string(out.join("ensemble_sizes.csv")).unwrap();
    assert!(h.contains("fraction_at_most_5"));
}
