mod commands;
mod config;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use icegnn::graph::HaversineMode;
use icegnn::models::ModelKind;
use icegnn::Error;

/// Graph neural networks for ice-layer thickness prediction.
#[derive(Parser, Debug)]
#[command(name = "icegnn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset with a planted dependency rule.
    Synth(SynthArgs),
    /// Read label masks and geolocation tracks into a filtered dataset.
    Ingest(IngestArgs),
    /// Run training trials and write checkpoints, reports and plots.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Run the gradient, adjacency, closed-form, permutation and oracle suites.
    Verify(VerifyArgs),
    /// Combine the summaries of several training runs into one table.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct ConfigArg {
    /// TOML run configuration.
    #[arg(long, env = "ICEGNN_CONFIG")]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Output container; the manifest is written next to it.
    #[arg(long, env = "ICEGNN_OUT")]
    out: Option<PathBuf>,
    /// Overrides the synthetic seed.
    #[arg(long, env = "ICEGNN_SEED")]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Directory of 8-bit label masks.
    #[arg(long, env = "ICEGNN_MASKS")]
    masks: PathBuf,
    /// Directory of `<stem>.csv` tracks (column_index,lat,lon).
    #[arg(long, env = "ICEGNN_TRACKS")]
    tracks: PathBuf,
    #[arg(long, env = "ICEGNN_OUT")]
    out: Option<PathBuf>,
    /// Minimum thickness values per column.
    #[arg(long, env = "ICEGNN_MIN_LAYERS")]
    min_layers: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FaultArg {
    HardswishGrad,
}

impl From<FaultArg> for icegnn::autodiff::Fault {
    fn from(f: FaultArg) -> Self {
        match f {
            FaultArg::HardswishGrad => icegnn::autodiff::Fault::HardswishGrad,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, env = "ICEGNN_DATASET")]
    dataset: Option<PathBuf>,
    #[arg(long, env = "ICEGNN_MODEL")]
    model: Option<ModelKind>,
    #[arg(long, env = "ICEGNN_TRIALS")]
    trials: Option<usize>,
    #[arg(long, env = "ICEGNN_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "ICEGNN_EPOCHS")]
    epochs: Option<usize>,
    /// Output directory.
    #[arg(long, env = "ICEGNN_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "ICEGNN_HAVERSINE_MODE")]
    haversine_mode: Option<HaversineMode>,
    /// Run trials on separate threads.
    #[arg(long, env = "ICEGNN_PARALLEL")]
    parallel: bool,
    #[arg(long, hide = true, value_enum)]
    inject_fault: Option<FaultArg>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, env = "ICEGNN_CHECKPOINT")]
    checkpoint: PathBuf,
    #[arg(long, env = "ICEGNN_DATASET")]
    dataset: Option<PathBuf>,
    /// Where to write the JSON result; stdout otherwise.
    #[arg(long, env = "ICEGNN_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Random seeds per gradient check.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    /// JSON report path.
    #[arg(long, env = "ICEGNN_OUT")]
    out: Option<PathBuf>,
    #[arg(long, hide = true, value_enum)]
    inject_fault: Option<FaultArg>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Training output directories.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    #[arg(long, env = "ICEGNN_OUT")]
    out: PathBuf,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Ingest(a) => commands::ingest(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Verify(a) => commands::verify(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
