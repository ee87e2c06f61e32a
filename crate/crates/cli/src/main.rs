//! `modelsel`: corpus generation, offline matrix building, online fitting and
//! evaluation reports.
//!
//! Exit status: 0 success, 2 usage error, 3 input error, 4 internal contract
//! violation.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use output::UsageError;

#[derive(Debug, Parser)]
#[command(name = "modelsel", version, about = "Time-constrained model selection from a low-rank error matrix")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Output directory.
    #[arg(long, global = true, env = "OBOE_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for matrix building and sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the bundled synthetic corpus as CSV files plus a corpus manifest.
    GenCorpus(GenCorpusArgs),
    /// Cross-validate every model on every corpus dataset.
    Offline(OfflineArgs),
    /// Select and train an ensemble for a new dataset within a time budget.
    Fit(FitArgs),
    /// Evaluation reports over stored offline artifacts.
    Report {
        #[command(subcommand)]
        kind: ReportKind,
    },
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CsvArgs {
    /// Whether CSV files start with a header row.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub has_header: bool,
    /// Zero-based label column (default: last).
    #[arg(long)]
    pub label_col: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenCorpusArgs {
    #[arg(long, default_value_t = modelsel_core::synth::DEFAULT_CORPUS_SIZE)]
    pub size: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OfflineArgs {
    /// Corpus manifest: JSON array of {name, path}.
    #[arg(long)]
    pub manifest: PathBuf,
    /// `small`, `full`, or a collection JSON file.
    #[arg(long, default_value = "small")]
    pub collection: String,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Fail on the first unreadable dataset instead of skipping it.
    #[arg(long)]
    pub strict: bool,
    /// Take runtimes from a stored matrix: `from:PATH`.
    #[arg(long)]
    pub virtual_times: Option<String>,
    #[command(flatten)]
    pub csv: CsvArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockArg {
    /// Charge predicted runtimes; fully reproducible.
    Virtual,
    /// Measure elapsed wall time.
    Wall,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    /// Directory written by `offline`.
    #[arg(long)]
    pub artifacts: PathBuf,
    /// CSV file of the new dataset.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Total time budget in seconds.
    #[arg(long)]
    pub tau: f64,
    /// First round's time target (default tau/64).
    #[arg(long)]
    pub tau0: Option<f64>,
    /// Initial latent rank (default from the spectrum).
    #[arg(long)]
    pub k0: Option<usize>,
    /// Models cross-validated per round after imputation.
    #[arg(long, default_value_t = 5)]
    pub n_best: usize,
    #[arg(long, value_enum, default_value_t = ClockArg::Virtual)]
    pub clock: ClockArg,
    /// Never keep a model that overshoots a round's time target.
    #[arg(long)]
    pub strict_budget: bool,
    /// Forget observed errors between rounds.
    #[arg(long)]
    pub fresh_rounds: bool,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[command(flatten)]
    pub csv: CsvArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Source {
    /// Directory written by `offline`.
    #[arg(long)]
    pub artifacts: Option<PathBuf>,
    /// Error matrix CSV, used instead of the artifacts' matrix.
    #[arg(long)]
    pub errors: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RuntimeArg {
    /// Polynomial predictors refitted without the held-out dataset.
    Predictors,
    /// Geometric column means of the other datasets.
    ColumnMeans,
    /// Every model costs one second.
    Uniform,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportKind {
    /// Singular values of the error matrix.
    Spectrum(SpectrumArgs),
    /// NMF cluster membership per algorithm family.
    Nmf(NmfArgs),
    /// Leave-one-dataset-out regret of selection methods.
    Regret(RegretArgs),
    /// Cold-start prediction accuracy of design criteria.
    Coldstart(ColdstartArgs),
    /// Leave-one-out runtime prediction accuracy per family.
    RuntimeAccuracy(RuntimeAccuracyArgs),
    /// Online stage over every corpus dataset and its ensemble sizes.
    EnsembleSize(EnsembleSizeArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub source: Source,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct NmfArgs {
    #[arg(long)]
    pub artifacts: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RegretArgs {
    #[command(flatten)]
    pub source: Source,
    /// Comma list of ed_time, ed_number, qr, random.
    #[arg(long, default_value = "ed_time,ed_number,qr,random")]
    pub methods: String,
    /// Count budgets: `a..b` or a comma list.
    #[arg(long, default_value = "1..20")]
    pub budgets: String,
    /// Time budgets in seconds (comma list). Defaults to a grid derived from
    /// the runtime matrix when ed_time is requested.
    #[arg(long)]
    pub time_budgets: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub seeds: usize,
    #[arg(long, value_enum, default_value_t = RuntimeArg::Predictors)]
    pub runtimes: RuntimeArg,
    #[arg(long)]
    pub strict_budget: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ColdstartArgs {
    #[command(flatten)]
    pub source: Source,
    /// Probe budget in seconds (default: median per-dataset total runtime / 8).
    #[arg(long)]
    pub probe_budget: Option<f64>,
    #[arg(long, value_enum, default_value_t = RuntimeArg::Predictors)]
    pub runtimes: RuntimeArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RuntimeAccuracyArgs {
    #[arg(long)]
    pub artifacts: PathBuf,
    /// Regress runtimes directly instead of their logarithm.
    #[arg(long)]
    pub linear: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EnsembleSizeArgs {
    #[arg(long)]
    pub artifacts: PathBuf,
    /// The corpus manifest the artifacts were built from.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Budget as a fraction of each dataset's total stored runtime.
    #[arg(long, default_value_t = 0.25)]
    pub budget_fraction: f64,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long)]
    pub strict_budget: bool,
    #[arg(long)]
    pub fresh_rounds: bool,
    #[command(flatten)]
    pub csv: CsvArgs,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<modelsel_core::Error>() {
        Some(e) if !e.is_input_error() => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.common.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.common.jobs).build_global() {
        eprintln!("error: {e}");
        return ExitCode::from(4);
    }
    let result = match &cli.command {
        Command::GenCorpus(a) => commands::gen_corpus(&cli.common, a),
        Command::Offline(a) => commands::offline(&cli.common, a),
        Command::Fit(a) => commands::fit(&cli.common, a),
        Command::Report { kind } => commands::report(&cli.common, kind),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
