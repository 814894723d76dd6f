//! Single-binary pipeline: data generation, denoiser training, separation
//! runs, oracle validation, evaluation and plot-data export.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 runtime or numerical
//! error (including failed validation checks).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, malformed config, missing files: exit 1.
    Usage(String),
    /// Failures after compute has started: exit 2.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "dig",
    about = "Bayesian source separation by Gibbs sampling with plug-and-play diffusion priors",
    version
)]
struct Cli {
    /// Worker threads for multi-instance runs (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic datasets or SIR/SNR-controlled mixtures.
    Synth(SynthArgs),
    /// Train a denoiser by denoising score matching.
    Train(TrainArgs),
    /// Run the separation sampler as described by a run config.
    Separate(SeparateArgs),
    /// Run the oracle validation suite and emit a JSON report.
    Validate(ValidateArgs),
    /// Per-row MSE of estimates against ground truth.
    Eval(EvalArgs),
    /// Export (index, truth, estimate, residual) rows for plotting.
    Plotdata(PlotDataArgs),
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SynthKind {
    Heartbeat,
    Motion,
    Mix,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    /// Signals (or mixes) to generate; for --kind mix, 0 means all rows.
    #[arg(long, default_value_t = 0)]
    pub count: usize,
    /// Signal length override.
    #[arg(long)]
    pub len: Option<usize>,
    /// Sample-rate override (heartbeat only).
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Use the fast desk-scale preset instead of the full-scale one.
    #[arg(long)]
    pub desk: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Clean-signal CSV (mix only).
    #[arg(long)]
    pub signal: Option<PathBuf>,
    /// Interference CSV (mix only).
    #[arg(long)]
    pub interference: Option<PathBuf>,
    /// Target signal-to-interference ratio in dB (mix only).
    #[arg(long, allow_hyphen_values = true)]
    pub sir: Option<f64>,
    /// Target signal-to-noise ratio in dB (mix only).
    #[arg(long, allow_hyphen_values = true)]
    pub snr: Option<f64>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training CSV: one signal per row.
    #[arg(long)]
    pub data: PathBuf,
    /// Output model path (JSON).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = vec![256, 256, 256])]
    pub widths: Vec<usize>,
    #[arg(long, default_value_t = 0.01)]
    pub sigma_min: f64,
    #[arg(long, default_value_t = 10.0)]
    pub sigma_max: f64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.02)]
    pub learning_rate: f64,
    /// Use Adam instead of plain SGD.
    #[arg(long)]
    pub adam: bool,
    #[arg(long, default_value_t = 0.1)]
    pub holdout_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args)]
pub struct SeparateArgs {
    /// Run-config JSON path.
    #[arg(long)]
    pub config: PathBuf,
    /// Seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory override.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Dump per-sweep chain CSVs even for multi-instance runs.
    #[arg(long)]
    pub dump_chains: bool,
    /// Record wall-clock timings in the manifest (makes it
    /// run-dependent).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Args)]
pub struct ValidateArgs {
    /// Smaller sampling sizes, chain-level checks skipped.
    #[arg(long)]
    pub quick: bool,
    /// Test hook: flip the score sign and prove the suite notices.
    #[arg(long)]
    pub sabotage_score: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Estimate CSV: one row per instance.
    #[arg(long)]
    pub estimates: PathBuf,
    /// Ground-truth CSV with matching rows.
    #[arg(long)]
    pub truth: PathBuf,
    /// Output metrics CSV (index,mse rows plus a final mean row).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct PlotDataArgs {
    #[arg(long)]
    pub estimate: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Row to plot when the files hold several.
    #[arg(long)]
    pub row: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

fn run(cli: Cli) -> Result<(), CliError> {
    commands::install_workers(cli.workers)?;
    match &cli.command {
        Command::Synth(args) => commands::cmd_synth(args),
        Command::Train(args) => commands::cmd_train(args),
        Command::Separate(args) => commands::cmd_separate(args),
        Command::Validate(args) => commands::cmd_validate(args),
        Command::Eval(args) => commands::cmd_eval(args),
        Command::Plotdata(args) => commands::cmd_plotdata(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful outputs, not usage errors.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
