//! `seamweld` — merge overlapping point-cloud partitions, generate synthetic
//! scenes, and score merges against ground truth.
//!
//! Exit codes: 0 success, 1 I/O, parse or configuration error, 2 disconnected
//! partition graph, 3 solver non-convergence, 4 validation threshold exceeded.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "seamweld", version, about = "Seam-free merging of overlapping scattered data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Merge partition files into one dataset.
    Merge(MergeArgs),
    /// Write a synthetic scene: one file per partition plus truth.csv.
    Synth(SynthArgs),
    /// Score a merged dataset against a truth file.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    /// Partition files (`x,y,value` CSV or SWLD binary).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Merged output; `.bin`/`.swld` selects the binary format.
    #[arg(short, long, default_value = "merged.csv")]
    pub output: PathBuf,
    /// Seam report (`key=value` lines).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Raster of the merged field; `.pgm` for an image, anything else for an
    /// ASCII grid.
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    pub grid_cols: usize,
    /// Relative residual bound for each Dirichlet solve.
    #[arg(long, default_value_t = seamweld::dirichlet::DEFAULT_TOLERANCE)]
    pub tol: f64,
    /// Iteration cap per solve (default: ten times the interior size).
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, value_enum, default_value_t = Mode::Seq)]
    pub mode: Mode,
    /// Weight pairwise offset equations by overlap size.
    #[arg(long)]
    pub weight_pairs: bool,
    /// Snap coordinates to this grid before matching points.
    #[arg(long)]
    pub quantum: Option<f64>,
    /// Directory for reusable Laplacians.
    #[arg(long)]
    pub laplacian_cache: Option<PathBuf>,
    /// Progress on stderr.
    #[arg(short, long)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Seq,
    Barrier,
    Relaxed,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Aligned tile grid, e.g. `3x2`.
    #[arg(long, default_value = "3x2", conflicts_with = "rows")]
    pub tiles: String,
    /// Staggered rows bottom to top, e.g. `2,3`.
    #[arg(long, value_delimiter = ',')]
    pub rows: Option<Vec<usize>>,
    #[arg(long, default_value_t = 60_000)]
    pub points: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Overlap width as a fraction of the tile size, in (0, 0.5].
    #[arg(long, default_value_t = 0.25)]
    pub overlap: f64,
    #[arg(long, value_enum, default_value_t = Truth::GaussianBumps)]
    pub truth: Truth,
    #[arg(long, value_enum, default_value_t = Artifact::ConstantPlusSmooth)]
    pub artifact: Artifact,
    #[arg(long, default_value_t = 5.0)]
    pub scale: f64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Truth {
    GaussianBumps,
    Polynomial,
    Plane,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Artifact {
    Constant,
    ConstantPlusSmooth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Bin,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    pub merged: PathBuf,
    pub truth: PathBuf,
    #[arg(long)]
    pub max_rmse: Option<f64>,
    #[arg(long)]
    pub max_error: Option<f64>,
    /// Bound on merged seam jump over the truth's jump on the same edges.
    #[arg(long)]
    pub max_seam_ratio: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Merge(a) => commands::merge(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Validate(a) => commands::validate(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("seamweld: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
