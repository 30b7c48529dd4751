//! `hafit`: ingest corpora, optimise and evaluate hearing-aid fittings, and
//! run the individual signal stages on WAV files.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use hafit::dataset::Source;
use hafit::noise_suppression::FrontEnd;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] hafit::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                hafit::Error::NonFiniteLoss { .. } | hafit::Error::Smearing(_) | hafit::Error::DimensionMismatch(_) => 1,
                _ => 2,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "hafit", version, about = "Hearing-aid fitting through a differentiable hearing loss model")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by the dataset-driven commands.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest written by `hafit ingest`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// N1, N2, N4 or an audiogram file.
    #[arg(long)]
    pub audiogram: Option<String>,
    /// Noise tag to select from the manifest.
    #[arg(long)]
    pub noise: Option<String>,
    /// none or wiener.
    #[arg(long = "front-end")]
    pub front_end: Option<FrontEnd>,
    /// clean or noisy.
    #[arg(long)]
    pub source: Option<Source>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scan a corpus directory and write its manifest.
    Ingest {
        root: PathBuf,
        /// Manifest path [default: <root>/manifest.toml].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a fitting (G, Cn or Cw depending on source and front end).
    Optimize {
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score fittings on the test split and write a CSV report.
    Evaluate {
        #[command(flatten)]
        run: RunFlags,
        /// Fitting file or `nal-r`; append `+W` to evaluate behind the
        /// Wiener front end.
        #[arg(long = "fitting", required = true)]
        fittings: Vec<String>,
    },
    /// Pass a WAV file through the hearing loss model.
    Simulate {
        input: PathBuf,
        #[arg(long)]
        audiogram: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Scale the input to this level (dB SPL) first.
        #[arg(long)]
        level: Option<f64>,
    },
    /// Wiener-filter a WAV file.
    Enhance {
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the NAL-R fitting for an audiogram.
    Prescribe {
        #[arg(long)]
        audiogram: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Frequency response of a fitting's processor as CSV.
    FreqResponse {
        fitting: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { root, out } => commands::ingest(&root, out),
        Command::Optimize { run, epochs } => commands::optimize(&run, epochs),
        Command::Evaluate { run, fittings } => commands::evaluate(&run, &fittings),
        Command::Simulate {
            input,
            audiogram,
            config,
            out,
            level,
        } => commands::simulate(&input, audiogram.as_deref(), config.as_deref(), &out, level),
        Command::Enhance { input, config, out } => commands::enhance(&input, config.as_deref(), &out),
        Command::Prescribe { audiogram, out } => commands::prescribe(&audiogram, out.as_deref()),
        Command::FreqResponse { fitting, config, out } => {
            commands::freq_response(&fitting, config.as_deref(), out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hafit: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
