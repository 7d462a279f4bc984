//! `metabin`: classical and causal pooling of binary-outcome study tables.

mod analyze;
mod compare;
mod forest;
mod output;
mod simulate;

use clap::{Parser, Subcommand, ValueEnum};
use metabin::effects::CorrectionPolicy;
use metabin::model::Measure;

#[derive(Debug, Parser)]
#[command(
    name = "metabin",
    version,
    about = "Pool 2x2 study tables with classical and causal estimators",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate per-study and pooled effects for one dataset
    Analyze(analyze::AnalyzeArgs),
    /// Run synthetic-data experiments
    #[command(subcommand)]
    Simulate(simulate::SimulateCommand),
    /// Contrast random-effects and causal pooling over a directory of datasets
    Compare(compare::CompareArgs),
    /// Render a forest plot for one dataset
    Forest(forest::ForestArgs),
}

/// Usage errors exit 2, everything else that goes wrong exits 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Internal(String),
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }
}

// Everything the library rejects traces back to user-supplied input, so all
// library errors map to usage errors. Only failures writing our own output
// are internal.
macro_rules! usage_from {
    ($($ty:ty),+ $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Usage(e.to_string())
            }
        })+
    };
}

usage_from!(
    metabin::io::IngestError,
    metabin::model::DatasetError,
    metabin::effects::EffectError,
    metabin::classical::PoolError,
    metabin::causal::CausalError,
    metabin::sim::SimError,
    metabin::compare::CompareError,
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeasureArg {
    Rd,
    Rr,
    Or,
}

impl From<MeasureArg> for Measure {
    fn from(m: MeasureArg) -> Measure {
        match m {
            MeasureArg::Rd => Measure::Rd,
            MeasureArg::Rr => Measure::Rr,
            MeasureArg::Or => Measure::Or,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Fe,
    Re,
    Causal,
    All,
}

impl ModelArg {
    pub fn wants_fixed(self) -> bool {
        matches!(self, ModelArg::Fe | ModelArg::All)
    }

    pub fn wants_random(self) -> bool {
        matches!(self, ModelArg::Re | ModelArg::All)
    }

    pub fn wants_causal(self) -> bool {
        matches!(self, ModelArg::Causal | ModelArg::All)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorrectionArg {
    Reject,
    Haldane,
}

impl From<CorrectionArg> for CorrectionPolicy {
    fn from(c: CorrectionArg) -> CorrectionPolicy {
        match c {
            CorrectionArg::Reject => CorrectionPolicy::Reject,
            CorrectionArg::Haldane => CorrectionPolicy::Haldane,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Tau2Arg {
    Dl,
    Pm,
}

pub fn check_ci_level(level: f64) -> Result<(), CliError> {
    if level.is_finite() && level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(CliError::usage(format!("--ci-level must be in (0, 1), got {level}")))
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            2
        }
        Err(CliError::Internal(message)) => {
            eprintln!("error: {message}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(args) => analyze::run(args),
        Command::Simulate(cmd) => simulate::run(cmd),
        Command::Compare(args) => compare::run(args),
        Command::Forest(args) => forest::run(args),
    }
}
