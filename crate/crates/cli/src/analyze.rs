//! `metabin analyze`: per-study effects plus the requested pooled estimates
//! for a single dataset.

use std::path::PathBuf;

use clap::Args;
use metabin::causal::{pool_causal, CausalConfig, WeightScheme};
use metabin::classical::{
    pool_fixed, pool_random, tau2_dersimonian_laird, tau2_paule_mandel, HeterogeneityEstimate,
};
use metabin::effects::{study_effects, CorrectionPolicy, StudyEffect};
use metabin::forest::format_sig;
use metabin::io::read_dataset;
use metabin::model::{validate_dataset, Measure, MetaDataset, PooledEstimate};
use serde::Serialize;

use crate::output::{emit, render_table};
use crate::{check_ci_level, CliError, CorrectionArg, MeasureArg, ModelArg, Tau2Arg};

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Dataset file, .csv or .json
    pub input: PathBuf,
    /// Effect measure
    #[arg(long, value_enum, default_value_t = MeasureArg::Rd)]
    pub measure: MeasureArg,
    /// Which pooled estimates to compute
    #[arg(long, value_enum, default_value_t = ModelArg::All)]
    pub model: ModelArg,
    /// Study weights for the causal aggregate: uniform, pooled or custom:w1,w2,...
    #[arg(long, default_value = "pooled")]
    pub weights: String,
    /// Two-sided confidence level
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    /// Zero-cell handling: reject the study or add 0.5 to every cell
    #[arg(long, value_enum, default_value_t = CorrectionArg::Haldane)]
    pub correction: CorrectionArg,
    /// Between-study variance estimator for random effects
    #[arg(long = "tau2", value_enum, default_value_t = Tau2Arg::Dl)]
    pub tau2: Tau2Arg,
    /// Report format
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub output: OutputFormat,
    /// Write the report to this file instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Serialize)]
struct StudyRow {
    label: String,
    n11: u64,
    n10: u64,
    n01: u64,
    n00: u64,
    /// Natural-scale estimate (ratio measures exponentiated).
    point: f64,
    theta_hat: f64,
    sigma2_hat: f64,
    corrected: bool,
}

#[derive(Serialize)]
struct AnalyzeReport {
    dataset: String,
    k: usize,
    n_total: u64,
    measure: Measure,
    ci_level: f64,
    correction: CorrectionPolicy,
    studies: Vec<StudyRow>,
    heterogeneity: Option<HeterogeneityEstimate>,
    pooled: Vec<PooledEstimate>,
}

pub fn run(args: AnalyzeArgs) -> Result<(), CliError> {
    check_ci_level(args.ci_level)?;
    let measure: Measure = args.measure.into();
    let correction: CorrectionPolicy = args.correction.into();
    let scheme: WeightScheme = args.weights.parse().map_err(CliError::Usage)?;

    let dataset = read_dataset(&args.input)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.input.display())))
        .and_then(|d| Ok(validate_dataset(d)?))?;
    let report = build_report(&dataset, measure, correction, &scheme, &args)?;

    let body = match args.output {
        OutputFormat::Text => render_text(&report),
        OutputFormat::Json => {
            let mut json = serde_json::to_string_pretty(&report)
                .map_err(|e| CliError::Internal(format!("encoding report: {e}")))?;
            json.push('\n');
            json
        }
    };
    emit(args.out.as_deref(), &body)
}

fn build_report(
    dataset: &MetaDataset,
    measure: Measure,
    correction: CorrectionPolicy,
    scheme: &WeightScheme,
    args: &AnalyzeArgs,
) -> Result<AnalyzeReport, CliError> {
    let effects = study_effects(dataset, measure, correction)?;
    let studies = dataset
        .studies
        .iter()
        .zip(&effects)
        .map(|(s, e)| StudyRow {
            label: s.label.clone(),
            n11: s.n11,
            n10: s.n10,
            n01: s.n01,
            n00: s.n00,
            point: e.point_reported(),
            theta_hat: e.theta_hat,
            sigma2_hat: e.sigma2_hat,
            corrected: e.corrected,
        })
        .collect();

    let mut pooled = Vec::new();
    let mut heterogeneity = None;
    if args.model.wants_fixed() {
        pooled.push(pool_fixed(&effects, args.ci_level)?);
    }
    if args.model.wants_random() {
        let het = estimate_tau2(&effects, args.tau2)?;
        pooled.push(pool_random(&effects, &het, args.ci_level)?);
        heterogeneity = Some(het);
    }
    if args.model.wants_causal() {
        let config = CausalConfig { ci_level: args.ci_level, correction, ..CausalConfig::default() };
        pooled.push(pool_causal(dataset, measure, scheme, &config)?);
    }

    Ok(AnalyzeReport {
        dataset: dataset.name.clone(),
        k: dataset.studies.len(),
        n_total: dataset.n_total(),
        measure,
        ci_level: args.ci_level,
        correction,
        studies,
        heterogeneity,
        pooled,
    })
}

fn estimate_tau2(
    effects: &[StudyEffect],
    method: Tau2Arg,
) -> Result<HeterogeneityEstimate, CliError> {
    Ok(match method {
        Tau2Arg::Dl => tau2_dersimonian_laird(effects)?,
        Tau2Arg::Pm => tau2_paule_mandel(effects)?,
    })
}

fn render_text(report: &AnalyzeReport) -> String {
    let pct = report.ci_level * 100.0;
    let mut text = format!(
        "dataset {}: {} studies, {} participants\nmeasure {}, {pct}% CI, {} correction\n\n",
        report.dataset,
        report.k,
        report.n_total,
        report.measure,
        correction_name(report.correction),
    );

    let study_rows: Vec<Vec<String>> = report
        .studies
        .iter()
        .map(|s| {
            vec![
                s.label.clone(),
                s.n11.to_string(),
                s.n10.to_string(),
                s.n01.to_string(),
                s.n00.to_string(),
                format_sig(s.point, 4),
                format_sig(s.theta_hat, 4),
                format_sig(s.sigma2_hat, 4),
                if s.corrected { "yes".into() } else { "no".into() },
            ]
        })
        .collect();
    text.push_str(&render_table(
        &["study", "n11", "n10", "n01", "n00", "point", "theta-hat", "sigma2-hat", "corrected"],
        &study_rows,
    ));

    if let Some(het) = &report.heterogeneity {
        text.push_str(&format!(
            "\nheterogeneity ({}): tau2 = {}, Q = {}\n",
            het.method,
            format_sig(het.tau2, 4),
            format_sig(het.q, 4),
        ));
    }

    let pooled_rows: Vec<Vec<String>> = report
        .pooled
        .iter()
        .map(|p| {
            vec![
                p.method.to_string(),
                format_sig(p.point, 4),
                format!("[{}, {}]", format_sig(p.ci_low, 4), format_sig(p.ci_high, 4)),
                p.weights.iter().map(|w| format_sig(*w, 4)).collect::<Vec<_>>().join(", "),
            ]
        })
        .collect();
    text.push('\n');
    text.push_str(&render_table(
        &["method", "point", &format!("{pct}% CI"), "weights"],
        &pooled_rows,
    ));

    let warnings: Vec<String> = report
        .pooled
        .iter()
        .flat_map(|p| p.warnings.iter().map(move |w| format!("  {}: {w}\n", p.method)))
        .collect();
    if !warnings.is_empty() {
        text.push_str("\nwarnings:\n");
        for w in warnings {
            text.push_str(&w);
        }
    }
    text
}

pub fn correction_name(policy: CorrectionPolicy) -> &'static str {
    match policy {
        CorrectionPolicy::Reject => "reject",
        CorrectionPolicy::Haldane => "haldane",
    }
}
