//! `esq`: fit, compare and analyse polynomial surrogates on subsampled tensor grids.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use esq_core::Error;

#[derive(Debug, Parser)]
#[command(name = "esq", version, about = "Effectively subsampled quadratures for polynomial least squares")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct GlobalArgs {
    /// Run configuration (JSON); defaults apply to missing fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Base seed for randomized selections.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select points, evaluate the model there and solve for the coefficients.
    Fit {
        /// Write the selected points and stop, for models evaluated out of process.
        #[arg(long, conflicts_with = "resume")]
        emit_points: bool,
        /// Finish a fit from an `index,value` CSV of the emitted points.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Reference coefficients JSON for the coefficient error.
        #[arg(long)]
        oracle: Option<PathBuf>,
    },
    /// Effective selection against seeded randomized trials.
    Compare {
        #[arg(long)]
        oracle: Option<PathBuf>,
    },
    /// Sobol' indices, from a coefficients file or from fresh fits.
    Sobol {
        /// Coefficients JSON written by `fit`.
        #[arg(long)]
        coefficients: Option<PathBuf>,
        #[arg(long)]
        oracle: Option<PathBuf>,
    },
    /// Regenerate the data behind a table or figure.
    Reproduce {
        /// table3, table4, table5, fig3, fig4, fig8 or fig9
        target: String,
        /// Randomized repetitions.
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Write the tensor grid points and weights.
    Grid,
    /// Write the selected grid rows and points without evaluating anything.
    Select,
}

/// 2: bad configuration or arguments, 3: numerical failure, 4: missing external data.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<commands::ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(
            Error::UnsupportedFamily(_)
            | Error::InvalidArgument(_)
            | Error::DimensionMismatch { .. }
            | Error::CardinalityCap { .. }
            | Error::Exactness { .. }
            | Error::Json(_),
        ) => 2,
        Some(
            Error::PivotRankDeficient { .. }
            | Error::RankDeficient { .. }
            | Error::SingularPreconditioner(_)
            | Error::Svd(_)
            | Error::ZeroVariance
            | Error::ModelEvaluation { .. },
        ) => 3,
        Some(Error::MissingEvaluations { .. } | Error::ExternalCommand { .. } | Error::Malformed { .. } | Error::Io(_)) => 4,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.global.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }

    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
