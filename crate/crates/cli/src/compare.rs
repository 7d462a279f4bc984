//! `metabin compare`: random-effects vs causal pooling across every CSV
//! dataset in a directory.

use std::path::PathBuf;

use clap::Args;
use metabin::compare::{compare_batch, render_summary_table, write_records_csv, CompareConfig};
use metabin::model::Measure;

use crate::output::emit;
use crate::{check_ci_level, CliError, CorrectionArg, MeasureArg};

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Directory holding the .csv datasets
    pub dir: PathBuf,
    /// Measure to compare (repeatable; default rd, rr and or)
    #[arg(long = "measure", value_enum)]
    pub measures: Vec<MeasureArg>,
    /// Two-sided confidence level
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    /// Zero-cell handling: reject the study or add 0.5 to every cell
    #[arg(long, value_enum, default_value_t = CorrectionArg::Haldane)]
    pub correction: CorrectionArg,
    /// Report format: the summary as text or JSON, or the per-dataset records as CSV
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub output: OutputFormat,
    /// Write the report to this file instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the per-dataset records as CSV here
    #[arg(long)]
    pub records_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
    Csv,
}

pub fn run(args: CompareArgs) -> Result<(), CliError> {
    check_ci_level(args.ci_level)?;
    let measures: Vec<Measure> = if args.measures.is_empty() {
        vec![Measure::Rd, Measure::Rr, Measure::Or]
    } else {
        args.measures.iter().map(|&m| m.into()).collect()
    };
    let config = CompareConfig { ci_level: args.ci_level, correction: args.correction.into() };

    let report = compare_batch(&args.dir, &measures, &config)?;
    if let Some(path) = &args.records_csv {
        crate::output::write_file(path, &records_csv(&report.records)?)?;
    }

    let body = match args.output {
        OutputFormat::Text => render_summary_table(&report),
        OutputFormat::Json => {
            let mut json = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Internal(format!("encoding report: {e}")))?;
            json.push('\n');
            json
        }
        OutputFormat::Csv => records_csv(&report.records)?,
    };
    emit(args.out.as_deref(), &body)
}

fn records_csv(records: &[metabin::compare::ComparisonRecord]) -> Result<String, CliError> {
    let mut buf = Vec::new();
    write_records_csv(records, &mut buf)
        .map_err(|e| CliError::Internal(format!("encoding records: {e}")))?;
    String::from_utf8(buf).map_err(|e| CliError::Internal(format!("encoding records: {e}")))
}
