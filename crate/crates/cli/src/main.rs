//! `voxtriage` command-line interface.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod commands;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use voxtriage::cohort::Gender;
use voxtriage::learners::AlgorithmKind;

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 20241001;

#[derive(Parser, Debug)]
#[command(name = "voxtriage", version, about = "Voice biomarker triage toolkit")]
pub struct Cli {
    /// Seed for every stochastic step (synthetic data, forests, boosting).
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Write the primary output here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Extract raw and scaled biomarkers from 16 kHz 16-bit PCM WAV files.
    Extract {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Scale raw biomarker vectors (7 numbers, or JSON via --input).
    Scale {
        /// ar sr jitter shimmer f0_mean f0_sd f1_variance
        #[arg(num_args = 7, allow_negative_numbers = true, conflicts_with = "input")]
        values: Vec<f64>,
        /// JSON file ("-" for stdin) holding one raw vector or a list of them.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Generate a synthetic cohort as JSON.
    Synth {
        /// Built-in template name ("table2") or a JSON template file.
        #[arg(long, default_value = "table2")]
        template: String,
        /// Class separation added to every scaled feature of diabetic subjects.
        #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
        delta: f64,
    },
    /// Leave-one-subject-out evaluation of a cohort.
    Evaluate {
        cohort: PathBuf,
        #[arg(long = "gender", value_delimiter = ',')]
        genders: Vec<Gender>,
        /// Algorithms (comma separated); all eight when omitted.
        #[arg(long = "algorithm", value_delimiter = ',', value_parser = algorithm)]
        algorithms: Vec<AlgorithmKind>,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Claim for one subject from a model trained on the rest of its gender group.
    Triage {
        cohort: PathBuf,
        #[arg(long)]
        subject: String,
        #[arg(long, default_value = "RF", value_parser = algorithm)]
        algorithm: AlgorithmKind,
        #[command(flatten)]
        thresholds: ThresholdArgs,
    },
    /// Run the ingestion service.
    Serve {
        #[arg(long, env = "VOXTRIAGE_HOST", default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "VOXTRIAGE_PORT", default_value_t = 8080)]
        port: u16,
        #[arg(long, env = "VOXTRIAGE_DATA_DIR", default_value = "voxtriage-data")]
        data_dir: PathBuf,
        /// Bearer token clients must present; open access when unset.
        #[arg(long, env = "VOXTRIAGE_TOKEN", hide_env_values = true)]
        token: Option<String>,
    },
    /// Render saved evaluation results (JSON from `evaluate --format json`).
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Args, Debug, Clone, Copy)]
pub struct ThresholdArgs {
    /// Mean probabilities below this clear the subject.
    #[arg(long, default_value_t = voxtriage::triage::DEFAULT_LOW)]
    pub low: f64,
    /// Mean probabilities above this flag the subject.
    #[arg(long, default_value_t = voxtriage::triage::DEFAULT_HIGH)]
    pub high: f64,
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("must be a finite number >= 0, got {s}"))
    }
}

fn algorithm(s: &str) -> Result<AlgorithmKind, String> {
    s.parse()
        .map_err(|e: voxtriage::learners::UnknownAlgorithm| e.to_string())
}

/// A failure with its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Runtime(e.into())
    }
}

/// Writes the primary output to `--output` or stdout.
pub fn emit(cli: &Cli, text: &str) -> anyhow::Result<()> {
    match &cli.output {
        Some(path) => std::fs::write(path, text)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
