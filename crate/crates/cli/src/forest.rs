//! `metabin forest`: forest plot of per-study intervals plus the requested
//! pooled rows, as text or SVG.

use std::path::PathBuf;

use clap::Args;
use metabin::causal::{pool_causal, CausalConfig, WeightScheme};
use metabin::classical::{pool_fixed, pool_random, tau2_dersimonian_laird, tau2_paule_mandel};
use metabin::effects::{study_effects, CorrectionPolicy};
use metabin::forest::{pooled_row, render_svg_forest, render_text_forest, study_rows};
use metabin::io::read_dataset;
use metabin::model::{validate_dataset, Measure};

use crate::output::emit;
use crate::{check_ci_level, CliError, CorrectionArg, MeasureArg, ModelArg, Tau2Arg};

#[derive(Debug, Args)]
pub struct ForestArgs {
    /// Dataset file, .csv or .json
    pub input: PathBuf,
    /// Effect measure
    #[arg(long, value_enum, default_value_t = MeasureArg::Rd)]
    pub measure: MeasureArg,
    /// Which pooled rows to append
    #[arg(long, value_enum, default_value_t = ModelArg::All)]
    pub model: ModelArg,
    /// Study weights for the causal row: uniform, pooled or custom:w1,w2,...
    #[arg(long, default_value = "pooled")]
    pub weights: String,
    /// Two-sided confidence level
    #[arg(long, default_value_t = 0.95)]
    pub ci_level: f64,
    /// Zero-cell handling: reject the study or add 0.5 to every cell
    #[arg(long, value_enum, default_value_t = CorrectionArg::Haldane)]
    pub correction: CorrectionArg,
    /// Between-study variance estimator for the random-effects row
    #[arg(long = "tau2", value_enum, default_value_t = Tau2Arg::Dl)]
    pub tau2: Tau2Arg,
    /// Plot format
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    pub output: OutputFormat,
    /// Character width of the text axis track
    #[arg(long, default_value_t = 41)]
    pub width: usize,
    /// Write the plot to this file instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Text,
    Svg,
}

pub fn run(args: ForestArgs) -> Result<(), CliError> {
    check_ci_level(args.ci_level)?;
    if args.width < 5 {
        return Err(CliError::usage(format!("--width must be at least 5, got {}", args.width)));
    }
    let measure: Measure = args.measure.into();
    let correction: CorrectionPolicy = args.correction.into();
    let scheme: WeightScheme = args.weights.parse().map_err(CliError::Usage)?;

    let dataset = read_dataset(&args.input)
        .map_err(|e| CliError::usage(format!("{}: {e}", args.input.display())))
        .and_then(|d| Ok(validate_dataset(d)?))?;
    let mut rows = study_rows(&dataset, measure, correction, args.ci_level)?;

    let effects = study_effects(&dataset, measure, correction)?;
    if args.model.wants_fixed() {
        rows.push(pooled_row(&pool_fixed(&effects, args.ci_level)?));
    }
    if args.model.wants_random() {
        let het = match args.tau2 {
            Tau2Arg::Dl => tau2_dersimonian_laird(&effects)?,
            Tau2Arg::Pm => tau2_paule_mandel(&effects)?,
        };
        rows.push(pooled_row(&pool_random(&effects, &het, args.ci_level)?));
    }
    if args.model.wants_causal() {
        let config = CausalConfig { ci_level: args.ci_level, correction, ..CausalConfig::default() };
        rows.push(pooled_row(&pool_causal(&dataset, measure, &scheme, &config)?));
    }

    let body = match args.output {
        OutputFormat::Text => render_text_forest(&rows, measure, args.width),
        OutputFormat::Svg => {
            let title = format!("{} ({})", dataset.name, measure);
            render_svg_forest(&rows, measure, &title)
        }
    };
    emit(args.out.as_deref(), &body)
}
