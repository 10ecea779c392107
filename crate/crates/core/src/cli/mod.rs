//! Command-line front end: `fit`, `cv`, `simulate` and `predict`.

pub mod commands;
pub mod io;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mvrr::Family;

#[derive(Debug, Parser)]
#[command(name = "mvrr", version, about = "Integrative multi-view reduced-rank regression")]
pub struct Cli {
    /// Worker threads for folds and replicates (default: all cores).
    #[arg(long, global = true, env = "MVRR_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit at a single penalty level.
    Fit(FitArgs),
    /// Choose the penalty level by K-fold cross-validation and refit.
    Cv(CvArgs),
    /// Run a replicated simulation benchmark.
    Simulate(SimulateArgs),
    /// Predict from a stored fit.
    Predict(PredictArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Gaussian,
    Binary,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::Gaussian => Family::Gaussian,
            FamilyArg::Binary => Family::Binary,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    /// Tune once on an independent dataset and keep lambda fixed.
    Fixed,
    /// Tune every replicate on its own validation set.
    PerReplicate,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Predictor matrix (CSV, no header).
    #[arg(long)]
    pub x: PathBuf,
    /// View specification (JSON list of {name, cols: [start, end]}).
    #[arg(long)]
    pub views: PathBuf,
    /// Response matrix (CSV, no header; NA marks a missing cell).
    #[arg(long)]
    pub y: PathBuf,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub family: FamilyArg,
    /// Ridge penalty lambda2.
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
    /// Center predictor columns (default).
    #[arg(long, overrides_with = "no_center")]
    pub center: bool,
    #[arg(long)]
    pub no_center: bool,
    /// Scale predictor columns to unit variance.
    #[arg(long)]
    pub scale: bool,
    /// Residual tolerance of the solver.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
    /// Coefficient matrix output (p x q CSV).
    #[arg(long)]
    pub coef_out: PathBuf,
    /// Report output (JSON).
    #[arg(long)]
    pub report_out: PathBuf,
    /// Intercept output (single-row CSV); binary fits default to
    /// `<coef-out>.intercept.csv`.
    #[arg(long)]
    pub intercept_out: Option<PathBuf>,
    /// Record wall-clock time in the report.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub lambda: f64,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 50)]
    pub nlambda: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda_min_ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Refit with weights reweighted by the inverse pilot block norms.
    #[arg(long)]
    pub adaptive: bool,
    /// Cross-validation report output (JSON).
    #[arg(long)]
    pub cv_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=7))]
    pub setting: u8,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of response cells dropped completely at random.
    #[arg(long, default_value_t = 0.0)]
    pub missing: f64,
    /// AR(1) errors across responses.
    #[arg(long)]
    pub ar1: bool,
    /// Comma-separated subset of irrr, irrr_adaptive, mtl, ols, null.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Number of views (multi-set setting).
    #[arg(long)]
    pub views: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    /// Columns per view.
    #[arg(long)]
    pub p_k: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    /// Rank of each relevant view.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, value_enum, default_value = "fixed")]
    pub protocol: ProtocolArg,
    #[arg(long, default_value_t = 50)]
    pub nlambda: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lambda_min_ratio: f64,
    /// Per-replicate rows (CSV with header replicate,method,metric,value).
    #[arg(long)]
    pub out: PathBuf,
    /// Summary output (JSON); defaults to `<out>.json`.
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
    /// Also write replicate 0 (x.csv, y.csv, views.json, b0.csv) into this
    /// directory.
    #[arg(long)]
    pub export: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Coefficient matrix written by `fit` or `cv`.
    #[arg(long)]
    pub coef: PathBuf,
    /// Report written alongside the coefficients.
    #[arg(long)]
    pub report: PathBuf,
    /// Raw predictor matrix (same columns as at fit time).
    #[arg(long)]
    pub x: PathBuf,
    /// Linear predictor output (n x q CSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Probability output for binary fits; defaults to `<out>.prob.csv`.
    #[arg(long)]
    pub prob_out: Option<PathBuf>,
}
