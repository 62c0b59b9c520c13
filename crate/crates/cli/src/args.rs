use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ood_core::Standardize;

#[derive(Debug, Parser)]
#[command(name = "ood", version, about = "Out-of-domain text detection from layer-wise embeddings")]
pub struct Cli {
    /// TOML file with defaults for any flag; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a detector on in-domain training data and write the model JSON.
    Fit(FitArgs),
    /// Score embeddings (or raw text for tfidf-svd models) with a saved model.
    Score(ScoreArgs),
    /// Compute AUROC, DTACC, AUIN, AUOUT, ROC points and a score histogram.
    Eval(EvalArgs),
    /// Fit and evaluate a single-layer detector for every layer.
    SweepLayers(SweepArgs),
    /// Generate a seeded synthetic train/test embedding pair with labels.
    Synth(SynthArgs),
    /// Vectorize text with TF-IDF + SVD into a one-layer embedding file.
    Tfidf(TfidfArgs),
    /// Maximum-softmax-probability scores from classifier logits.
    Msp(MspArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Mdf,
    Edf,
    SingleLayer,
    MeanPool,
    MaxPool,
    Concat,
    TfidfSvd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelArg {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StandardizeArg {
    None,
    Zscore,
    Scale,
}

impl From<StandardizeArg> for Standardize {
    fn from(s: StandardizeArg) -> Self {
        match s {
            StandardizeArg::None => Standardize::None,
            StandardizeArg::Zscore => Standardize::Zscore,
            StandardizeArg::Scale => Standardize::Scale,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SolverArgs {
    /// Upper bound on the training outlier fraction, in (0, 1].
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    /// RBF bandwidth; omitted means 1 / (p · mean feature variance).
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Stopping tolerance on the maximal violating pair.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, value_enum)]
    pub standardize: Option<StandardizeArg>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// In-domain training embeddings (LEB1).
    #[arg(long, value_name = "LEB")]
    pub train: Option<PathBuf>,
    /// In-domain training text, one document per line (tfidf-svd only).
    #[arg(long, value_name = "TXT")]
    pub texts: Option<PathBuf>,
    /// Document ids, one per line; defaults to 1-based line numbers.
    #[arg(long, value_name = "TXT")]
    pub ids: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// 1-based layer for single-layer.
    #[arg(long)]
    pub layer: Option<usize>,
    /// SVD components for tfidf-svd.
    #[arg(long)]
    pub k: Option<usize>,
    /// Relative covariance ridge.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_name = "JSON")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long, value_name = "JSON")]
    pub model: PathBuf,
    /// Embeddings to score (LEB1).
    #[arg(long, value_name = "LEB", conflicts_with = "texts")]
    pub input: Option<PathBuf>,
    /// Text to score, one document per line (tfidf-svd models).
    #[arg(long, value_name = "TXT")]
    pub texts: Option<PathBuf>,
    #[arg(long, value_name = "TXT", requires = "texts")]
    pub ids: Option<PathBuf>,
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "CSV")]
    pub scores: PathBuf,
    #[arg(long, value_name = "JSONL")]
    pub labels: PathBuf,
    /// Directory for metrics.json, roc.csv and hist.csv.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_name = "LEB")]
    pub train: PathBuf,
    #[arg(long, value_name = "LEB")]
    pub test: PathBuf,
    #[arg(long, value_name = "JSONL")]
    pub labels: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_in: Option<usize>,
    #[arg(long)]
    pub n_out: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Comma-separated 1-based layers carrying the shift; empty for none.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub signal_layers: Option<Vec<usize>>,
    #[arg(long)]
    pub shift: Option<f64>,
    #[arg(long)]
    pub anisotropy: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TfidfArgs {
    /// Corpus the vocabulary and projection are fit on, one document per line.
    #[arg(long, value_name = "TXT")]
    pub texts: PathBuf,
    #[arg(long, value_name = "TXT")]
    pub ids: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_name = "LEB")]
    pub out: PathBuf,
    /// Further text projected with the fitted transform.
    #[arg(long, value_name = "TXT", requires = "apply_out")]
    pub apply: Option<PathBuf>,
    #[arg(long, value_name = "TXT", requires = "apply")]
    pub apply_ids: Option<PathBuf>,
    #[arg(long, value_name = "LEB", requires = "apply")]
    pub apply_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MspArgs {
    #[arg(long, value_name = "JSONL")]
    pub logits: PathBuf,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long, value_name = "CSV")]
    pub out: PathBuf,
}
