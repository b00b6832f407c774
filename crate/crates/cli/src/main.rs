//! `qawv`: pointer statistics of pre- and post-selected measurements from the
//! command line. Exit codes: 0 success, 2 configuration error, 3 numerical
//! precondition failure, 4 tolerance violation in a check command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod emit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, RunConfig};
use emit::OutputDir;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] qawv::Error),
    #[error("tolerance violation: {0}")]
    Tolerance(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(qawv::Error::InvalidArgument(_))
            | CliError::Numerical(qawv::Error::DimensionMismatch { .. })
            | CliError::Numerical(qawv::Error::NonHermitian { .. }) => 2,
            CliError::Numerical(_) => 3,
            CliError::Tolerance(_) => 4,
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "qawv",
    version,
    about = "Pointer statistics of von Neumann measurements on pre- and post-selected ensembles"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Named scenario: a spin figure preset, `free-particle`, or `random-<dim>`.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// JSON scenario file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Number of grid samples.
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    /// Width of the q-interval, kept centred on the scenario's interval.
    #[arg(long, global = true)]
    grid_span: Option<f64>,
    /// Seed for random scenarios.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Factor applied to every tolerance.
    #[arg(long, global = true, default_value_t = 1.0)]
    tol_scale: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Weak-value orbit: `q,P12,S12,Aw_re,Aw_im,valid`.
    Orbit,
    /// Pointer distributions conditioned on post-selection.
    Ppme,
    /// Pointer distribution without post-selection.
    Pme,
    /// Sum rules and covering condition over the post-selection basis.
    Sumrules,
    /// Figure data for a spin preset.
    SpinFigure {
        /// Preset name, e.g. fig4-j20.
        #[arg(value_name = "PRESET")]
        name: Option<String>,
    },
    /// Window priors of shrinking width around a sampling point.
    WeakSweep,
    /// Gaussian priors of growing width on a spin scenario.
    TransitionSweep,
    /// Quantum versus classical pointer statistics.
    ClassicalCompare,
}

fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    let overrides = Overrides {
        preset: cli.preset,
        config: cli.config,
        grid_n: cli.grid_n,
        grid_span: cli.grid_span,
        seed: cli.seed,
        tol_scale: cli.tol_scale,
    };
    let positional = match &cli.command {
        Command::SpinFigure { name } => name.as_deref(),
        _ => None,
    };
    let cfg = RunConfig::load(positional, overrides)?;
    let mut out = OutputDir::create(&cli.out)?;
    match cli.command {
        Command::Orbit => commands::orbit(&cfg, &mut out),
        Command::Ppme => commands::ppme(&cfg, &mut out),
        Command::Pme => commands::pme(&cfg, &mut out),
        Command::Sumrules => commands::sumrules(&cfg, &mut out),
        Command::SpinFigure { .. } => commands::spin_figure(&cfg, &mut out),
        Command::WeakSweep => commands::weak_sweep(&cfg, &mut out),
        Command::TransitionSweep => commands::transition_sweep(&cfg, &mut out),
        Command::ClassicalCompare => commands::classical_compare(&cfg, &mut out),
    }?;
    Ok(out.written().to_vec())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out_dir = cli.out.clone();
    match run(cli) {
        Ok(files) => {
            for f in files {
                println!("{}", out_dir.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qawv: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
