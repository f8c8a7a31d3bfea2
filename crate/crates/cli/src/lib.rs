//! `svlens` command-line pipelines: spectra, activation overlaps, surgery,
//! desk-scale training and the ablation experiments. Every run writes its
//! artifacts plus one `manifest.json` into the output directory.

pub mod commands;
pub mod error;
pub mod experiments;
pub mod output;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use svlens_core::tensorstore::RoleKind;

pub use error::{CliError, Result};
pub use output::{read_manifest, Format, RunManifest};

fn parse_kind(s: &str) -> std::result::Result<RoleKind, String> {
    s.parse::<RoleKind>().map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "svlens", version, about = "Spectral diagnostics for neural-network weight matrices")]
pub struct Cli {
    /// Base seed; experiment seeds are derived from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "svlens-out")]
    pub out: PathBuf,
    /// JSON config for the command (fields not given keep their defaults).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads for independent matrices and runs (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::All)]
    pub format: Format,
    /// JSON role table replacing the built-in name patterns.
    #[arg(long, global = true)]
    pub roles: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Singular-value spectra with Marchenko-Pastur fits.
    Spectrum(SpectrumArgs),
    /// Overlaps between right singular vectors and activation-covariance eigenvectors.
    Overlap(OverlapArgs),
    /// Apply a singular-value removal plan to a checkpoint.
    Prune(PruneArgs),
    /// Train the MLP classifier.
    TrainMlp(TrainMlpArgs),
    /// Train the toy transformer language model.
    TrainLm(TrainLmArgs),
    /// Perplexity and accuracy of a transformer, or accuracy of an MLP.
    Eval(EvalArgs),
    /// Ablation experiments.
    #[command(subcommand)]
    Ablate(Ablation),
    /// Generate synthetic datasets, token streams and checkpoints.
    #[command(subcommand)]
    GenData(GenData),
    /// Record the inputs of selected transformer weight matrices.
    DumpActivations(DumpArgs),
}

#[derive(Debug, Clone, Args, Default)]
pub struct MatrixFilterArgs {
    /// Role kinds to keep (comma separated).
    #[arg(long = "kind", value_delimiter = ',', value_parser = parse_kind)]
    pub kinds: Vec<RoleKind>,
    /// Block indices to keep (comma separated).
    #[arg(long = "block", value_delimiter = ',')]
    pub blocks: Vec<usize>,
    /// Keep names containing any of these substrings.
    #[arg(long = "name", value_delimiter = ',')]
    pub names: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub filter: MatrixFilterArgs,
    #[arg(long, default_value_t = 50)]
    pub bins: usize,
    /// Also pool the singular values of each role kind across blocks.
    #[arg(long)]
    pub average_blocks: bool,
    /// Include the full singular-value list in JSON reports.
    #[arg(long)]
    pub include_svals: bool,
}

#[derive(Debug, Args)]
pub struct OverlapArgs {
    /// One or more checkpoints; several produce a timeline per matrix.
    #[arg(long = "checkpoint", required = true)]
    pub checkpoints: Vec<PathBuf>,
    /// Activation dumps, one per checkpoint.
    #[arg(long = "activations", required = true)]
    pub activations: Vec<PathBuf>,
    #[command(flatten)]
    pub filter: MatrixFilterArgs,
}

#[derive(Debug, Args)]
pub struct PruneArgs {
    pub checkpoint: PathBuf,
    /// Plan as a JSON file or inline JSON.
    #[arg(long)]
    pub plan: String,
    /// Output checkpoint (relative paths are inside the output directory).
    #[arg(long, default_value = "pruned.safetensors")]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainMlpArgs {
    /// Labeled-vector container; the bundled cluster data when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainLmArgs {
    /// Token stream; the task-A language when omitted.
    #[arg(long)]
    pub tokens: Option<PathBuf>,
    #[arg(long)]
    pub test_tokens: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    /// Token stream for a transformer checkpoint.
    #[arg(long, conflicts_with = "data")]
    pub tokens: Option<PathBuf>,
    /// Labeled vectors for an MLP checkpoint.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Ablation {
    /// Metric change from zeroing each decile in each role kind.
    DecileSweep(SweepArgs),
    /// Remove-then-finetune against finetune-then-remove.
    FinetuneOrder(FinetuneArgs),
    /// Removal curves for standard and lazy MLP training.
    Lazy,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Trained checkpoint; a model is pretrained when omitted.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Evaluation tokens for a transformer checkpoint.
    #[arg(long)]
    pub tokens: Option<PathBuf>,
    /// Evaluation data for an MLP checkpoint.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long = "kind", value_delimiter = ',', value_parser = parse_kind)]
    pub kinds: Vec<RoleKind>,
    #[arg(long, value_delimiter = ',')]
    pub deciles: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Pretrained checkpoint; a model is pretrained when omitted.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub deciles: Vec<usize>,
}

#[derive(Debug, Subcommand)]
pub enum GenData {
    /// Gaussian class clusters as a labeled-vector container.
    Clusters(ClustersArgs),
    /// Token stream from one of the synthetic languages.
    Language(LanguageArgs),
    /// Checkpoint of i.i.d. Gaussian matrices.
    Gaussian(GaussianArgs),
    /// Freshly initialized transformer checkpoint.
    LmInit,
}

#[derive(Debug, Args)]
pub struct ClustersArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub means_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Task {
    A,
    B,
}

#[derive(Debug, Args)]
pub struct LanguageArgs {
    #[arg(long, value_enum, default_value_t = Task::A)]
    pub task: Task,
    #[arg(long, default_value_t = 20_000)]
    pub len: usize,
    #[arg(long, default_value_t = 16)]
    pub vocab: usize,
}

#[derive(Debug, Args)]
pub struct GaussianArgs {
    #[arg(long, default_value_t = 512)]
    pub rows: usize,
    #[arg(long, default_value_t = 512)]
    pub cols: usize,
    /// Entry standard deviation; `1/sqrt(max(rows, cols))` when omitted.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub tokens: PathBuf,
    /// `all`, role kinds (`query,value`) or tensor names.
    #[arg(long, default_value = "all")]
    pub layers: String,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Failures are reported as JSON on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let err = CliError::Usage(e.to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();
    let command_line: Vec<String> = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::execute(&cli, command_line) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
