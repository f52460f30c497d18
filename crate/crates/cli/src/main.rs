//! `rydcav` command-line front end.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rydcav::Error;

#[derive(Debug, Parser)]
#[command(name = "rydcav", version)]
#[command(about = "Cavity EIT, Rydberg blockade and Rydberg-bubble transmission models")]
struct Cli {
    #[command(flatten)]
    common: Common,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON parameter file; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Dotted configuration overrides, e.g. `drive.omega_cf=5`.
    #[arg(long = "override", value_name = "KEY=VAL", global = true)]
    overrides: Vec<String>,

    /// Seed for synthetic noise.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[arg(long, global = true)]
    format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Linear EIT transmission over the configured probe scan
    LinearScan(NoiseArgs),

    /// Mean-field transmission over the configured scan (detuning or photon rate)
    MeanfieldScan,

    /// Time evolution of the bubble model from switch-on
    BubbleEvolve {
        /// End time, μs.
        #[arg(long, default_value_t = 50.0)]
        t_end: f64,

        /// Sample spacing, μs.
        #[arg(long, default_value_t = 0.5)]
        dt: f64,

        #[command(flatten)]
        noise: NoiseArgs,
    },

    /// Long-time transmission of the bubble model
    BubbleSteady {
        /// Relative change over the window that counts as converged.
        #[arg(long, default_value_t = 1e-4)]
        threshold: f64,
    },

    /// Fit a linear EIT spectrum (`x,y[,weight]` CSV)
    FitEit {
        #[arg(long)]
        data: PathBuf,

        /// Comma-separated parameters to vary; starting values come from the configuration.
        #[arg(
            long,
            default_value = "gamma_c,cooperativity,omega_cf,gamma_r",
            value_delimiter = ','
        )]
        free: Vec<String>,

        #[arg(long)]
        poisson: bool,
    },

    /// Fit bubble-model transients: one file, or one per level with `--level N=PATH`
    FitTransient {
        #[arg(long, conflicts_with = "level")]
        data: Option<PathBuf>,

        #[arg(long, value_name = "N=PATH")]
        level: Vec<String>,

        /// Parameters to vary for `--data`; `--level` fits always vary xi alone.
        #[arg(long, default_value = "xi", value_delimiter = ',')]
        free: Vec<String>,

        #[arg(long)]
        poisson: bool,
    },

    /// Van der Waals coefficient of a Rydberg level
    C6 {
        #[arg(long, ignore_case = true)]
        series: SeriesArg,

        #[arg(long)]
        n: u32,
    },

    /// Check a configuration and print derived quantities
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SeriesArg {
    S,
    D,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct NoiseArgs {
    /// Relative Gaussian noise added to the output, with matching weights.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

/// Process exit status for an error.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Singular(_) | Error::Solver(_) | Error::Integrator { .. } => 2,
        _ => 1,
    }
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var("RYDCAV_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            Error::Config(format!(
                "RYDCAV_THREADS must be a positive integer, got {value:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(e.to_string()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = configure_threads().and_then(|()| commands::run(&cli.common, &cli.command));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
