//! `metabin simulate`: synthetic-data experiments. `mismatch` replicates the
//! two-population experiment where classical and causal pooling disagree on
//! direction, `calibrate` Monte Carlo checks the closed-form variance, and
//! `generate` draws one dataset for use with the other subcommands.

use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use metabin::forest::format_sig;
use metabin::io::{write_dataset_csv, write_dataset_json};
use metabin::model::{validate_dataset, Measure, MetaDataset, PoolingMethod};
use metabin::sim::{
    calibrate_theorem2_at, run_mismatch, simulate_meta, CalibrationReport, CalibrationTarget,
    MismatchConfig, MismatchDgp, MismatchReport, TwoStudyRates,
};
use serde::Deserialize;

use crate::output::{emit, render_table, write_file};
use crate::{check_ci_level, CliError, MeasureArg};

#[derive(Debug, Subcommand)]
pub enum SimulateCommand {
    /// Replicated two-population experiment with opposing pooled directions
    Mismatch(MismatchArgs),
    /// Monte Carlo calibration of the closed-form causal variance
    Calibrate(CalibrateArgs),
    /// Draw one synthetic dataset and write it as CSV or JSON
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct MismatchArgs {
    /// TOML settings: replications, seed, ci_level and a [dgp] table
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub replications: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Participants per replication
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub output: OutputFormat,
    /// Write the report to this file instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write every replicated point as CSV (replication,method,measure,point)
    #[arg(long)]
    pub points_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// TOML settings: measures, replications, seed, ci_level and
    /// either a [dgp] or a [rates] table
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Measure to calibrate (repeatable; default rd, rr and or)
    #[arg(long = "measure", value_enum)]
    pub measures: Vec<MeasureArg>,
    #[arg(long)]
    pub replications: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Participants per replication
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub ci_level: Option<f64>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub output: OutputFormat,
    /// Write the report to this file instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// TOML settings: seed, plus either a [dgp] or a [rates] table
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Participants in the drawn dataset
    #[arg(long)]
    pub n: Option<u64>,
    /// Dataset destination; .json writes the JSON mirror, anything else CSV.
    /// Omitted means CSV on stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(command: SimulateCommand) -> Result<(), CliError> {
    match command {
        SimulateCommand::Mismatch(args) => run_mismatch_cmd(args),
        SimulateCommand::Calibrate(args) => run_calibrate(args),
        SimulateCommand::Generate(args) => run_generate(args),
    }
}

fn parse_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("reading {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn run_mismatch_cmd(args: MismatchArgs) -> Result<(), CliError> {
    let mut config: MismatchConfig = match &args.config {
        Some(path) => parse_toml(path)?,
        None => MismatchConfig::default(),
    };
    if let Some(replications) = args.replications {
        config.replications = replications;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.n {
        config.dgp.n = n;
    }
    if config.replications == 0 {
        return Err(CliError::usage("replications must be positive"));
    }
    check_ci_level(config.ci_level)?;

    let report = run_mismatch(&config)?;
    if let Some(path) = &args.points_csv {
        write_file(path, &points_csv(&report))?;
    }
    let body = match args.output {
        OutputFormat::Text => render_mismatch_text(&report),
        OutputFormat::Json => to_json(&report)?,
    };
    emit(args.out.as_deref(), &body)
}

fn points_csv(report: &MismatchReport) -> String {
    let mut text = String::from("replication,method,measure,point\n");
    for p in &report.points {
        text.push_str(&format!("{},{},{},{}\n", p.replication, p.method, p.measure, p.point));
    }
    text
}

fn render_mismatch_text(report: &MismatchReport) -> String {
    let config = &report.config;
    let mut text = format!(
        "mismatch experiment: {} replications, n = {}, seed {}\n",
        config.replications, config.dgp.n, config.seed,
    );
    text.push_str(&format!(
        "true population effects: rd {}, rr {}, or {}\n\n",
        format_sig(report.true_rd, 4),
        format_sig(report.true_rr, 4),
        format_sig(report.true_or, 4),
    ));

    let methods =
        [PoolingMethod::FixedEffects, PoolingMethod::RandomEffects, PoolingMethod::Causal];
    let measures = [Measure::Rd, Measure::Rr, Measure::Or];
    let rows: Vec<Vec<String>> = methods
        .iter()
        .map(|&method| {
            let mut row = vec![method.to_string()];
            row.extend(
                measures.iter().map(|&m| format_sig(report.median(method, m), 4)),
            );
            row
        })
        .collect();
    text.push_str("median pooled point by method:\n");
    text.push_str(&render_table(&["method", "rd", "rr", "or"], &rows));
    if report.discarded_attempts > 0 {
        text.push_str(&format!("\ndiscarded degenerate draws: {}\n", report.discarded_attempts));
    }
    text
}

/// Config file for `calibrate`; `dgp` and `rates` are mutually exclusive.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CalibrateFile {
    measures: Vec<String>,
    replications: Option<u32>,
    seed: Option<u64>,
    ci_level: Option<f64>,
    dgp: Option<MismatchDgp>,
    rates: Option<TwoStudyRates>,
}

fn pick_target(
    dgp: Option<MismatchDgp>,
    rates: Option<TwoStudyRates>,
    fallback: CalibrationTarget,
) -> Result<CalibrationTarget, CliError> {
    match (dgp, rates) {
        (Some(_), Some(_)) => {
            Err(CliError::usage("config sets both [dgp] and [rates]; pick one"))
        }
        (Some(dgp), None) => Ok(CalibrationTarget::Dgp(dgp)),
        (None, Some(rates)) => Ok(CalibrationTarget::Rates(rates)),
        (None, None) => Ok(fallback),
    }
}

fn override_n(target: &mut CalibrationTarget, n: Option<u64>) {
    if let Some(n) = n {
        match target {
            CalibrationTarget::Dgp(dgp) => dgp.n = n,
            CalibrationTarget::Rates(rates) => rates.n = n,
        }
    }
}

fn run_calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    let file: CalibrateFile = match &args.config {
        Some(path) => parse_toml(path)?,
        None => CalibrateFile::default(),
    };

    let mut measures: Vec<Measure> = if !args.measures.is_empty() {
        args.measures.iter().map(|&m| m.into()).collect()
    } else {
        file.measures
            .iter()
            .map(|s| s.parse::<Measure>().map_err(CliError::Usage))
            .collect::<Result<_, _>>()?
    };
    if measures.is_empty() {
        measures = vec![Measure::Rd, Measure::Rr, Measure::Or];
    }

    let replications = args.replications.or(file.replications).unwrap_or(1000);
    if replications == 0 {
        return Err(CliError::usage("replications must be positive"));
    }
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let ci_level = args.ci_level.or(file.ci_level).unwrap_or(0.95);
    check_ci_level(ci_level)?;
    let mut target = pick_target(
        file.dgp,
        file.rates,
        CalibrationTarget::Rates(TwoStudyRates::default()),
    )?;
    override_n(&mut target, args.n);

    // Same seed for every measure, so each line summarizes the same draws.
    let reports = measures
        .iter()
        .map(|&m| calibrate_theorem2_at(&target, m, replications, seed, ci_level))
        .collect::<Result<Vec<_>, _>>()?;

    let body = match args.output {
        OutputFormat::Text => render_calibrate_text(&reports, seed),
        OutputFormat::Json => to_json(&reports)?,
    };
    emit(args.out.as_deref(), &body)
}

fn render_calibrate_text(reports: &[CalibrationReport], seed: u64) -> String {
    let first = &reports[0];
    let pct = first.ci_level * 100.0;
    let mut text = format!(
        "closed-form variance calibration: {} replications, n = {}, seed {seed}, {pct}% CI\n",
        first.replications, first.n,
    );
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.measure.to_string(),
                format_sig(r.theta_true, 4),
                format_sig(r.mean_point, 4),
                format_sig(r.ratio, 4),
                format_sig(r.coverage, 4),
                r.discarded_attempts.to_string(),
            ]
        })
        .collect();
    text.push_str(&render_table(
        &["measure", "theta-true", "mean-point", "var-ratio", "coverage", "discarded"],
        &rows,
    ));
    text.push_str("ratio measures are calibrated on the log scale\n");
    text
}

/// Config file for `generate`; `dgp` and `rates` are mutually exclusive.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenerateFile {
    seed: Option<u64>,
    dgp: Option<MismatchDgp>,
    rates: Option<TwoStudyRates>,
}

fn run_generate(args: GenerateArgs) -> Result<(), CliError> {
    let file: GenerateFile = match &args.config {
        Some(path) => parse_toml(path)?,
        None => GenerateFile::default(),
    };
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let mut target =
        pick_target(file.dgp, file.rates, CalibrationTarget::Dgp(MismatchDgp::default()))?;
    override_n(&mut target, args.n);

    let dataset = draw_dataset(&target, seed)?;
    let body = match &args.out {
        Some(path) if path.extension().is_some_and(|e| e == "json") => {
            let mut buf = Vec::new();
            write_dataset_json(&dataset, &mut buf)
                .map_err(|e| CliError::Internal(format!("encoding dataset: {e}")))?;
            buf.push(b'\n');
            String::from_utf8(buf).expect("JSON output is UTF-8")
        }
        _ => {
            let mut buf = Vec::new();
            write_dataset_csv(&dataset, &mut buf)
                .map_err(|e| CliError::Internal(format!("encoding dataset: {e}")))?;
            String::from_utf8(buf).expect("CSV output is UTF-8")
        }
    };
    emit(args.out.as_deref(), &body)
}

fn draw_dataset(target: &CalibrationTarget, seed: u64) -> Result<MetaDataset, CliError> {
    match target {
        CalibrationTarget::Dgp(dgp) => Ok(simulate_meta(dgp, seed)?),
        CalibrationTarget::Rates(rates) => {
            rates.validate()?;
            // Rate draws can produce an empty arm; retry a bounded number of
            // times on fresh seeds before giving up.
            for attempt in 0..100 {
                let dataset = rates.draw(seed.wrapping_add(attempt));
                if let Ok(dataset) = validate_dataset(dataset) {
                    return Ok(dataset);
                }
            }
            Err(CliError::usage(
                "every draw had an empty arm after 100 attempts; raise n or the rates",
            ))
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    let mut json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Internal(format!("encoding report: {e}")))?;
    json.push('\n');
    Ok(json)
}
