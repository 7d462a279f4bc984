//! Batch comparison of classical random-effects pooling against the
//! arm-based causal estimator: per-dataset discrepancy, interval lengths
//! and interval overlap, plus mean/sd aggregation across a directory of
//! datasets. All metrics live on the natural scale (ratio intervals are
//! exponentiated before lengths and overlaps are taken).

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::causal::{pool_causal, CausalConfig, CausalError, WeightScheme};
use crate::classical::{pool_random_dl, PoolError};
use crate::effects::{study_effects, CorrectionPolicy, EffectError};
use crate::forest::format_sig;
use crate::io::{read_dataset_csv, IngestError};
use crate::model::{validate_dataset, DatasetError, Measure, MetaDataset};

#[derive(Debug, Error)]
pub enum CompareError {
    #[error(transparent)]
    Effect(#[from] EffectError),
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Causal(#[from] CausalError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("directory `{0}` yielded no comparable datasets")]
    NoValidDatasets(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Settings shared by every comparison in a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub ci_level: f64,
    pub correction: CorrectionPolicy,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self { ci_level: 0.95, correction: CorrectionPolicy::Haldane }
    }
}

/// A closed interval `[low, high]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    pub fn len(&self) -> f64 {
        (self.high - self.low).max(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.high < self.low
    }
}

/// Intersection length over union length. Two zero-length intervals are
/// fully overlapping (1) when identical and disjoint (0) otherwise; for
/// nondegenerate intervals the union length is positive.
pub fn jaccard(a: Interval, b: Interval) -> f64 {
    let inter = (a.high.min(b.high) - a.low.max(b.low)).max(0.0);
    let union = a.len() + b.len() - inter;
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    inter / union
}

/// How the two pooling philosophies compare on one dataset. Everything is
/// on the natural scale of the measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub dataset: String,
    pub measure: Measure,
    pub point_re: f64,
    pub point_causal: f64,
    pub ci_re: Interval,
    pub ci_causal: Interval,
    pub discrepancy: f64,
    pub len_re: f64,
    pub len_causal: f64,
    pub jaccard: f64,
}

/// Natural-scale twin of a measure (log variants report exponentiated).
fn natural_measure(measure: Measure) -> Measure {
    match measure {
        Measure::LogRr => Measure::Rr,
        Measure::LogOr => Measure::Or,
        other => other,
    }
}

/// Random-effects (DerSimonian-Laird) versus causal pooling
/// (size-proportional weights) on one dataset.
pub fn compare_one(
    dataset: &MetaDataset,
    measure: Measure,
    config: &CompareConfig,
) -> Result<ComparisonRecord, CompareError> {
    let measure = natural_measure(measure);
    let effects = study_effects(dataset, measure, config.correction)?;
    let re = pool_random_dl(&effects, config.ci_level)?;
    let causal_cfg = CausalConfig {
        ci_level: config.ci_level,
        correction: config.correction,
        ..CausalConfig::default()
    };
    let causal = pool_causal(dataset, measure, &WeightScheme::Pooled, &causal_cfg)?;

    let ci_re = Interval::new(re.ci_low, re.ci_high);
    let ci_causal = Interval::new(causal.ci_low, causal.ci_high);
    Ok(ComparisonRecord {
        dataset: dataset.name.clone(),
        measure,
        point_re: re.point,
        point_causal: causal.point,
        discrepancy: (re.point - causal.point).abs(),
        len_re: ci_re.len(),
        len_causal: ci_causal.len(),
        jaccard: jaccard(ci_re, ci_causal),
        ci_re,
        ci_causal,
    })
}

/// Mean and sample standard deviation (zero for a single value).
fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One aggregated row of the batch summary (per measure).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummaryRow {
    pub measure: Measure,
    pub datasets: usize,
    pub mean_discrepancy: f64,
    pub sd_discrepancy: f64,
    pub mean_len_re: f64,
    pub sd_len_re: f64,
    pub mean_len_causal: f64,
    pub sd_len_causal: f64,
    pub mean_jaccard: f64,
    pub sd_jaccard: f64,
}

/// A file (or file-measure pair) that could not be compared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedInput {
    pub path: String,
    pub reason: String,
}

/// Everything a batch run produces: per-measure summaries, per-dataset
/// records sorted by (dataset, measure), and the skipped inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub summary: Vec<BatchSummaryRow>,
    pub records: Vec<ComparisonRecord>,
    pub skipped: Vec<SkippedInput>,
}

/// Aggregates records into per-measure summary rows. Measures keep the
/// order of `measures`; measures without records produce no row.
pub fn summarize_records(records: &[ComparisonRecord], measures: &[Measure]) -> Vec<BatchSummaryRow> {
    let mut rows = Vec::new();
    for &measure in measures {
        let measure = natural_measure(measure);
        let of: Vec<&ComparisonRecord> =
            records.iter().filter(|r| r.measure == measure).collect();
        if of.is_empty() {
            continue;
        }
        let col = |f: fn(&ComparisonRecord) -> f64| -> Vec<f64> {
            of.iter().map(|r| f(r)).collect()
        };
        let (mean_discrepancy, sd_discrepancy) = mean_sd(&col(|r| r.discrepancy));
        let (mean_len_re, sd_len_re) = mean_sd(&col(|r| r.len_re));
        let (mean_len_causal, sd_len_causal) = mean_sd(&col(|r| r.len_causal));
        let (mean_jaccard, sd_jaccard) = mean_sd(&col(|r| r.jaccard));
        rows.push(BatchSummaryRow {
            measure,
            datasets: of.len(),
            mean_discrepancy,
            sd_discrepancy,
            mean_len_re,
            sd_len_re,
            mean_len_causal,
            sd_len_causal,
            mean_jaccard,
            sd_jaccard,
        });
    }
    rows
}

/// Runs [`compare_one`] for every CSV file in `dir` and every measure.
/// Unreadable or unpoolable inputs are skipped with a diagnostic, not
/// fatal; failing everything is the error case.
pub fn compare_batch(
    dir: impl AsRef<Path>,
    measures: &[Measure],
    config: &CompareConfig,
) -> Result<BatchReport, CompareError> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("csv"))
        .collect();
    paths.sort();

    let per_file: Vec<(Vec<ComparisonRecord>, Vec<SkippedInput>)> = paths
        .par_iter()
        .map(|path| {
            let display = path.display().to_string();
            let mut records = Vec::new();
            let mut skipped = Vec::new();
            let dataset = match read_dataset_csv(path).map_err(CompareError::from).and_then(|d| {
                validate_dataset(d).map_err(CompareError::from)
            }) {
                Ok(d) => d,
                Err(err) => {
                    skipped.push(SkippedInput { path: display, reason: err.to_string() });
                    return (records, skipped);
                }
            };
            for &measure in measures {
                match compare_one(&dataset, measure, config) {
                    Ok(rec) => records.push(rec),
                    Err(err) => skipped.push(SkippedInput {
                        path: format!("{display} [{measure}]"),
                        reason: err.to_string(),
                    }),
                }
            }
            (records, skipped)
        })
        .collect();

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (r, s) in per_file {
        records.extend(r);
        skipped.extend(s);
    }
    if records.is_empty() {
        return Err(CompareError::NoValidDatasets(dir.display().to_string()));
    }
    records.sort_by(|a, b| {
        a.dataset.cmp(&b.dataset).then(a.measure.to_string().cmp(&b.measure.to_string()))
    });
    let summary = summarize_records(&records, measures);
    Ok(BatchReport { summary, records, skipped })
}

/// Per-dataset records as CSV (one row per dataset-measure pair).
pub fn write_records_csv(records: &[ComparisonRecord], out: impl Write) -> Result<(), CompareError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "dataset",
        "measure",
        "point_re",
        "point_causal",
        "ci_re_low",
        "ci_re_high",
        "ci_causal_low",
        "ci_causal_high",
        "discrepancy",
        "len_re",
        "len_causal",
        "jaccard",
    ])?;
    for r in records {
        w.write_record([
            r.dataset.clone(),
            r.measure.to_string(),
            r.point_re.to_string(),
            r.point_causal.to_string(),
            r.ci_re.low.to_string(),
            r.ci_re.high.to_string(),
            r.ci_causal.low.to_string(),
            r.ci_causal.high.to_string(),
            r.discrepancy.to_string(),
            r.len_re.to_string(),
            r.len_causal.to_string(),
            r.jaccard.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned `mean +/- sd` text table of the batch summary. The overlap
/// column is displayed as a percentage; the underlying records keep the
/// Jaccard index in [0, 1].
pub fn render_summary_table(report: &BatchReport) -> String {
    let headers =
        ["measure", "datasets", "discrepancy", "ci length (re)", "ci length (causal)", "ci overlap %"];
    let pm = |mean: f64, sd: f64| format!("{} +/- {}", format_sig(mean, 4), format_sig(sd, 4));
    let rows: Vec<[String; 6]> = report
        .summary
        .iter()
        .map(|r| {
            [
                r.measure.to_string(),
                r.datasets.to_string(),
                pm(r.mean_discrepancy, r.sd_discrepancy),
                pm(r.mean_len_re, r.sd_len_re),
                pm(r.mean_len_causal, r.sd_len_causal),
                pm(100.0 * r.mean_jaccard, 100.0 * r.sd_jaccard),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut push_row = |cells: &[String]| {
        let line: Vec<String> =
            cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    };
    push_row(&headers.iter().map(|h| h.to_string()).collect::<Vec<_>>());
    push_row(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>());
    for row in &rows {
        push_row(row);
    }
    if !report.skipped.is_empty() {
        out.push_str(&format!("\nskipped {} input(s):\n", report.skipped.len()));
        for s in &report.skipped {
            out.push_str(&format!("  {}: {}\n", s.path, s.reason));
        }
    }
    out
}
