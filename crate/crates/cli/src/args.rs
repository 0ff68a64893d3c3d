use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ordcost", version, about = "Cost-sensitive ordinal classification: data, training, evaluation, comparison")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic ordinal dataset, optionally with annotation noise.
    GenData(GenDataArgs),
    /// Train one model.
    Train(TrainArgs),
    /// Train over increasing lambdas and keep the best on validation kappa.
    Sweep(SweepArgs),
    /// Compute the metric suite of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Paired stratified bootstrap comparison of two checkpoints.
    Compare(CompareArgs),
    /// Print the quadratic, normalized-confusion and AST matrices.
    CostMatrix(CostMatrixArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Write the JSON run report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Print the JSON report instead of the text summary.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// Comma-separated class priors.
    #[arg(long, value_delimiter = ',')]
    pub priors: Option<Vec<f64>>,
    #[arg(long)]
    pub input_dim: Option<usize>,
    /// Distance between adjacent class centres.
    #[arg(long)]
    pub spacing: Option<f64>,
    /// Standard deviation of the features around each centre.
    #[arg(long)]
    pub spread: Option<f64>,
    /// Row-stochastic annotation noise matrix (CSV or JSON).
    #[arg(long, conflicts_with = "noise_confusion")]
    pub noise_matrix: Option<PathBuf>,
    /// Annotator confusion counts, row-normalized into the noise matrix.
    #[arg(long)]
    pub noise_confusion: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaseArg {
    Ce,
    Focal,
    Nuls,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CostArg {
    None,
    Quadratic,
    Ast,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    LinearSoftmax,
    OneHiddenLayer,
}

/// Training settings; each flag overrides `--config`, which overrides the defaults.
#[derive(Debug, Clone, Args)]
pub struct TrainingArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    /// Directory for checkpoints, history and reports.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// JSON file with training settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Class count, when larger than the labels imply.
    #[arg(long)]
    pub num_classes: Option<usize>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long, value_enum)]
    pub base: Option<BaseArg>,
    /// Focal loss weight.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Focal loss focusing exponent.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Width of the Gaussian label smoothing.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, value_enum)]
    pub cost_matrix: Option<CostArg>,
    /// Annotator confusion counts for the AST matrix.
    #[arg(long)]
    pub confusion: Option<PathBuf>,
    /// Cost matrix file for `--cost-matrix custom`.
    #[arg(long)]
    pub costs: Option<PathBuf>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub plateau_factor: Option<f64>,
    #[arg(long)]
    pub plateau_patience: Option<usize>,
    #[arg(long)]
    pub early_stop_patience: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub min_improvement: Option<f64>,
    #[arg(long)]
    pub no_oversample: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    #[arg(long)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub training: TrainingArgs,
    /// Largest lambda the sweep may try.
    #[arg(long, default_value_t = 1e4)]
    pub max_lambda: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Accepted for uniformity; evaluation is deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    QuadKappa,
    Mauc,
    Aca,
    KendallTau,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub checkpoint_a: PathBuf,
    #[arg(long)]
    pub checkpoint_b: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Bootstrap resamples.
    #[arg(long = "n", default_value_t = 1000)]
    pub n_resamples: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Metrics to compare; all four by default.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub metrics: Option<Vec<MetricArg>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct CostMatrixArgs {
    /// Annotator confusion counts; without it only the quadratic matrix is built.
    #[arg(long)]
    pub confusion: Option<PathBuf>,
    /// Class count of the quadratic matrix; defaults to the confusion size, else 5.
    #[arg(long)]
    pub num_classes: Option<usize>,
    /// Also write the matrices as CSV files into this directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}
