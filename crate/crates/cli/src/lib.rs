//! `swproj`: sliced Wasserstein distances, autoencoder training and the
//! amortization-gap experiment from the command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 numeric failure, 4 I/O error.

mod commands;
pub mod config;
pub mod report;

use std::fmt;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use swproj_core::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Usage,
    Numeric,
    Io,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Failure,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: Failure::Usage,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            kind: Failure::Io,
            message: format!("{}: {e}", path.display()),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            Failure::Usage => 2,
            Failure::Numeric => 3,
            Failure::Io => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = if e.is_numeric() {
            Failure::Numeric
        } else if matches!(e, Error::Io(_) | Error::Parse(_)) {
            Failure::Io
        } else {
            Failure::Usage
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "swproj", version, about = "Sliced Wasserstein distances with learned slicing directions")]
struct Cli {
    /// Include wall-clock timings in reports and history (makes output run-dependent).
    #[arg(long, global = true)]
    timings: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write synthetic point clouds as XYZ tables.
    Gen(GenArgs),
    /// Distance between two clouds.
    Dist(DistArgs),
    /// Train an autoencoder from a config file.
    Train(TrainArgs),
    /// Compare amortized models against per-pair ascent.
    Gap(GapArgs),
    /// Reconstruction metrics of a trained autoencoder.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub kind: String,
    #[arg(long, default_value_t = 64)]
    pub m: usize,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Write a run report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DistArgs {
    pub source: PathBuf,
    pub target: PathBuf,
    /// One of cd, emd, sw, maxsw, vdsw, pw.
    #[arg(long)]
    pub metric: String,
    /// Wasserstein order (default 2).
    #[arg(long)]
    pub p: Option<f64>,
    /// Number of projections (sw, vdsw; default 100).
    #[arg(long = "L")]
    pub projections: Option<usize>,
    /// Ascent steps (maxsw, vdsw; default 50).
    #[arg(long = "T")]
    pub steps: Option<usize>,
    /// Ascent learning rate (maxsw, vdsw; default 1e-4).
    #[arg(long)]
    pub eta_s: Option<f64>,
    /// vMF concentration (vdsw; default 1).
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Comma-separated projecting direction (pw only; normalized).
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<String>,
    /// Seed (sw, maxsw, vdsw; default 0).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct GapArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Directory of `.xyz` clouds (read in file-name order).
    #[arg(long)]
    pub data_dir: PathBuf,
    #[arg(long = "L", default_value_t = 100)]
    pub projections: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Sizes the global worker pool from `SWPROJ_THREADS` (default: all cores).
pub fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("SWPROJ_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::usage(format!("SWPROJ_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    Ok(())
}

/// Runs one command line (without the program name). Help and version
/// requests print their text and succeed.
pub fn run<I, S>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let echo: Vec<String> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(std::iter::once("swproj".to_string()).chain(echo.iter().cloned())) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let text = e.render().to_string();
            return Err(CliError::usage(text.strip_prefix("error: ").unwrap_or(&text)));
        }
    };
    let timings = cli.timings;
    match cli.command {
        Command::Gen(a) => commands::gen(&a, echo),
        Command::Dist(a) => commands::dist(&a, echo),
        Command::Train(a) => commands::train(&a, echo, timings),
        Command::Gap(a) => commands::gap(&a, echo, timings),
        Command::Eval(a) => commands::eval(&a, echo),
    }
}
