//! Command-line surface of the eegmark toolkit.

mod commands;
mod manifest;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit codes: 0 success, 2 argument errors (clap), 3 input/format errors,
/// 4 verification not confirmed, 5 run-stage gate failure, 6 refused to
/// overwrite existing files, 7 training divergence.
pub const EXIT_IO: u8 = 3;
pub const EXIT_UNCONFIRMED: u8 = 4;
pub const EXIT_STAGE: u8 = 5;
pub const EXIT_OVERWRITE: u8 = 6;
pub const EXIT_DIVERGED: u8 = 7;

#[derive(Parser)]
#[command(
    name = "eegmark",
    about = "Wonder-filter watermarking toolkit for EEG-style classifiers",
    version,
    after_help = "Exit codes:\n  0  success\n  2  invalid arguments\n  3  input, format, or i/o error\n  4  watermark not confirmed\n  5  pipeline stage or gate failure\n  6  refused to overwrite (use --force)\n  7  training diverged"
)]
struct Cli {
    /// Root seed for every stochastic component.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Suppress progress messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an owner keypair and write key files.
    Keygen(KeygenArgs),
    /// Sign a verifier string (owner id + timestamp) with a private key.
    Sign(SignArgs),
    /// Derive a wonder filter from a signature and write its record.
    Transform(TransformArgs),
    /// Generate a synthetic dataset container.
    GenData(GenDataArgs),
    /// Convert a trial CSV into a dataset container.
    Convert(ConvertArgs),
    /// Train a clean (no-watermark) model.
    Train(TrainArgs),
    /// Train a watermarked model from owner credentials.
    Embed(EmbedArgs),
    /// Verify a watermark in a model checkpoint.
    Verify(VerifyArgs),
    /// Run a single attack against a watermarked checkpoint.
    Attack(AttackArgs),
    /// Execute a full manifest: baseline, embedding, verification, attacks.
    Run(RunArgs),
    /// Re-print the summary of a finished run directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct KeygenArgs {
    /// 32-byte seed file (raw or 64 hex chars); omit for OS entropy.
    #[arg(long)]
    seed_file: Option<PathBuf>,
    /// Draw the seed from OS entropy (non-reproducible).
    #[arg(long)]
    entropy: bool,
    /// Output directory for the key files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Key file prefix: <prefix>_private.key / <prefix>_public.key.
    #[arg(long, default_value = "owner")]
    prefix: String,
}

#[derive(Args)]
struct SignArgs {
    #[arg(long)]
    private_key: PathBuf,
    #[arg(long)]
    owner_id: String,
    #[arg(long)]
    timestamp: i64,
    /// Output signature file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TransformArgs {
    /// Signature file (hex).
    #[arg(long)]
    sig: PathBuf,
    /// Input view, e.g. 8x64 or 4x9x9.
    #[arg(long)]
    input_shape: String,
    #[arg(long)]
    num_labels: usize,
    /// Block shape, e.g. 4x32.
    #[arg(long, default_value = "4x32")]
    block: String,
    #[arg(long, default_value_t = 2000.0)]
    oob: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    #[arg(long, default_value_t = 8)]
    channels: usize,
    #[arg(long, default_value_t = 64)]
    timepoints: usize,
    #[arg(long, default_value_t = 64)]
    sample_rate: u32,
    /// Per-class frequency lists, e.g. "6;12" or "4,8;12,16;20".
    #[arg(long, default_value = "6;12")]
    class_freqs: String,
    #[arg(long, default_value_t = 0.25)]
    noise: f64,
    #[arg(long, default_value_t = 0.5)]
    balance: f64,
    /// `windows` emits a labelled container; `trials` emits per-trial
    /// continuous signals with ratings for the DEAP-style loader.
    #[arg(long, default_value = "windows")]
    format: String,
    /// Seconds per trial (trial format only).
    #[arg(long, default_value_t = 4)]
    trial_seconds: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    /// CSV with rows `trial,channel,rating,v0,v1,...` (header optional).
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    sample_rate: u32,
    #[arg(long, default_value_t = 1)]
    window_seconds: u32,
    #[arg(long, default_value_t = 5.0)]
    threshold: f32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset container.
    #[arg(long)]
    data: PathBuf,
    /// Built-in config name (mini-eeg, eegnet-lite) or config file path.
    #[arg(long, default_value = "mini-eeg")]
    config: String,
    #[arg(long, default_value_t = 15)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value_t = 5)]
    patience: usize,
    /// Train/val/test fractions.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    split: String,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Optional per-epoch metrics CSV.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "mini-eeg")]
    config: String,
    #[arg(long)]
    private_key: PathBuf,
    #[arg(long)]
    owner_id: String,
    #[arg(long)]
    timestamp: i64,
    /// Number of independent watermarks (each gets timestamp+i).
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value = "from-scratch")]
    strategy: String,
    #[arg(long, default_value = "4x32")]
    block: String,
    #[arg(long, default_value_t = 2000.0)]
    oob: f64,
    #[arg(long, default_value_t = 0.1)]
    trigger_fraction: f64,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    /// Clean epochs before embedding (pretrain strategy).
    #[arg(long, default_value_t = 15)]
    pretrain_epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long, default_value = "0.8,0.1,0.1")]
    split: String,
    /// Output directory (checkpoint, records, verification reports).
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    public_key: PathBuf,
    #[arg(long)]
    sig: PathBuf,
    #[arg(long)]
    owner_id: String,
    #[arg(long)]
    timestamp: i64,
    /// Clean dataset container providing the verification inputs.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "4x32")]
    block: String,
    #[arg(long, default_value_t = 2000.0)]
    oob: f64,
    /// Acceptance threshold; default is the model's accuracy on the data
    /// minus 0.05.
    #[arg(long)]
    t_acc: Option<f64>,
    /// Cap on the number of verification inputs.
    #[arg(long, default_value_t = 200)]
    max_inputs: usize,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    model: PathBuf,
    /// Owner clean dataset (attacker data and eval sets are split off).
    #[arg(long)]
    data: PathBuf,
    /// Watermark record file written by embed.
    #[arg(long)]
    record: PathBuf,
    /// Owner public key file (required for piracy verification).
    #[arg(long)]
    public_key: Option<PathBuf>,
    /// fine-tune | transfer | prune | piracy.
    #[arg(long)]
    kind: String,
    /// FTLL/FTAL/RTLL/RTAL, LAST_LAYER/ALL_LAYERS, or l1/random.
    #[arg(long, default_value = "")]
    mode: String,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Fraction of the dataset given to the attacker.
    #[arg(long, default_value_t = 0.2)]
    fraction: f64,
    #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    ratios: String,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    learning_rate: f64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Manifest path.
    #[arg(long, short)]
    manifest: PathBuf,
    /// Override the manifest's output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override the manifest's seed.
    #[arg(long)]
    run_seed: Option<u64>,
}

#[derive(Args)]
struct ReportArgs {
    /// A run output directory.
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = commands::Ctx {
        seed: cli.seed,
        quiet: cli.quiet,
        force: cli.force,
    };
    let result = match cli.command {
        Command::Keygen(args) => commands::keygen(&ctx, &args),
        Command::Sign(args) => commands::sign(&ctx, &args),
        Command::Transform(args) => commands::transform(&ctx, &args),
        Command::GenData(args) => commands::gen_data(&ctx, &args),
        Command::Convert(args) => commands::convert(&ctx, &args),
        Command::Train(args) => commands::train(&ctx, &args),
        Command::Embed(args) => commands::embed(&ctx, &args),
        Command::Verify(args) => commands::verify(&ctx, &args),
        Command::Attack(args) => commands::attack(&ctx, &args),
        Command::Run(args) => runner::run(&ctx, &args),
        Command::Report(args) => commands::report(&ctx, &args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
