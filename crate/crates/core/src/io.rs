//! Dataset ingestion and serialization.
//!
//! CSV files carry one study per row under the header
//! `label,n11,n10,n01,n00`. JSON files mirror [`MetaDataset`] directly
//! (`{"name": ..., "studies": [...]}`) or may be a bare array of studies.
//! Counts are parsed through signed integers so a negative value is
//! reported as a validation problem with its line, not as a type error.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MetaDataset, StudyTable};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("line {line}: negative count {value} in column `{field}` (study `{label}`)")]
    NegativeCount { line: u64, label: String, field: &'static str, value: i64 },
    #[error("csv header must be `label,n11,n10,n01,n00`, got `{found}`")]
    BadHeader { found: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("json: negative count {value} in field `{field}` (study `{label}`)")]
    JsonNegativeCount { label: String, field: &'static str, value: i64 },
}

#[derive(Debug, Deserialize, Serialize)]
struct RawRow {
    label: String,
    n11: i64,
    n10: i64,
    n01: i64,
    n00: i64,
}

impl RawRow {
    fn into_table(self, line: Option<u64>) -> Result<StudyTable, IngestError> {
        let RawRow { label, n11, n10, n01, n00 } = self;
        for (field, value) in [("n11", n11), ("n10", n10), ("n01", n01), ("n00", n00)] {
            if value < 0 {
                return Err(match line {
                    Some(line) => IngestError::NegativeCount { line, label, field, value },
                    None => IngestError::JsonNegativeCount { label, field, value },
                });
            }
        }
        Ok(StudyTable {
            label,
            n11: n11 as u64,
            n10: n10 as u64,
            n01: n01 as u64,
            n00: n00 as u64,
        })
    }
}

const CSV_HEADER: [&str; 5] = ["label", "n11", "n10", "n01", "n00"];

/// Parses a dataset from CSV text. `name` labels the dataset (callers
/// typically pass the file stem).
pub fn parse_dataset_csv(input: impl Read, name: &str) -> Result<MetaDataset, IngestError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(IngestError::BadHeader { found: headers.iter().collect::<Vec<_>>().join(",") });
    }
    let mut studies = Vec::new();
    for result in reader.deserialize::<RawRow>() {
        let row = result.map_err(csv_error)?;
        // csv positions are byte-oriented; recover the 1-based line from the
        // record count (header is line 1).
        let line = studies.len() as u64 + 2;
        studies.push(row.into_table(Some(line))?);
    }
    Ok(MetaDataset::new(name, studies))
}

fn csv_error(err: csv::Error) -> IngestError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    IngestError::Csv { line, message: err.to_string() }
}

/// Reads and parses a CSV dataset file; the dataset is named after the
/// file stem.
pub fn read_dataset_csv(path: impl AsRef<Path>) -> Result<MetaDataset, IngestError> {
    let path = path.as_ref();
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_dataset_csv(File::open(path)?, &name)
}

/// Writes a dataset as CSV with the canonical header.
pub fn write_dataset_csv(dataset: &MetaDataset, out: impl Write) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(CSV_HEADER).map_err(csv_error)?;
    for study in &dataset.studies {
        writer
            .write_record([
                study.label.as_str(),
                &study.n11.to_string(),
                &study.n10.to_string(),
                &study.n01.to_string(),
                &study.n00.to_string(),
            ])
            .map_err(csv_error)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawJson {
    Named { name: String, studies: Vec<RawRow> },
    Bare(Vec<RawRow>),
}

/// Parses a dataset from JSON text. A bare array of studies is accepted
/// and given the fallback `name`.
pub fn parse_dataset_json(input: impl Read, name: &str) -> Result<MetaDataset, IngestError> {
    let raw: RawJson = serde_json::from_reader(input)?;
    let (name, rows) = match raw {
        RawJson::Named { name, studies } => (name, studies),
        RawJson::Bare(rows) => (name.to_string(), rows),
    };
    let studies =
        rows.into_iter().map(|row| row.into_table(None)).collect::<Result<Vec<_>, _>>()?;
    Ok(MetaDataset::new(name, studies))
}

/// Reads and parses a JSON dataset file.
pub fn read_dataset_json(path: impl AsRef<Path>) -> Result<MetaDataset, IngestError> {
    let path = path.as_ref();
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_dataset_json(File::open(path)?, &name)
}

/// Writes a dataset as pretty-printed JSON.
pub fn write_dataset_json(dataset: &MetaDataset, out: impl Write) -> Result<(), IngestError> {
    serde_json::to_writer_pretty(out, dataset)?;
    Ok(())
}

/// Reads a dataset, dispatching on the file extension (`.json` is JSON,
/// anything else is treated as CSV).
pub fn read_dataset(path: impl AsRef<Path>) -> Result<MetaDataset, IngestError> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => read_dataset_json(path),
        _ => read_dataset_csv(path),
    }
}
