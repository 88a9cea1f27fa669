//! Reading and hashing input tables.

use std::path::{Path, PathBuf};

use phqfuse_core::scorelog::{
    parse_chunk_scores, parse_labels, parse_splits, validate_dataset, DatasetIssue, ModalitySet, ScoreLogError,
    Severity, ValidatedDataset, ValidationOptions,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{io_error, CliError};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputHashes {
    pub chunk_scores: String,
    pub labels: String,
    pub splits: String,
}

pub struct LoadedDataset {
    pub dataset: ValidatedDataset,
    pub warnings: Vec<DatasetIssue>,
    pub hashes: InputHashes,
}

fn read(what: &str, path: Option<&PathBuf>, flag: &str) -> Result<Vec<u8>, String> {
    let path = path.ok_or_else(|| format!("{what}: no path given (use {flag} or the config file)"))?;
    std::fs::read(path).map_err(|e| io_error(what, &e).to_string())
}

fn tagged(file: &str, err: &ScoreLogError) -> String {
    let text = err.to_string();
    if text.starts_with(&format!("{file}:")) {
        text
    } else {
        format!("{file}: {text}")
    }
}

/// How dataset-level problems map onto exit codes.
pub enum IssuePolicy {
    /// Every problem is an input error.
    AllInput,
    /// A fit split without both classes is a fitting error.
    FitClassIsFitting,
}

/// Reads, parses and cross-validates the three tables, reporting every
/// problem it can find at once.
pub fn load_dataset(cfg: &RunConfig, policy: IssuePolicy) -> Result<LoadedDataset, CliError> {
    let chunks = read("chunk_scores", cfg.chunks.as_ref(), "--chunks");
    let labels = read("labels", cfg.labels.as_ref(), "--labels");
    let splits = read("splits", cfg.splits.as_ref(), "--splits");
    let errors: Vec<String> = [&chunks, &labels, &splits]
        .iter()
        .filter_map(|r| r.as_ref().err().cloned())
        .collect();
    if !errors.is_empty() {
        return Err(CliError::Input(errors));
    }
    let (chunks, labels, splits) = (chunks.unwrap(), labels.unwrap(), splits.unwrap());
    let hashes = InputHashes {
        chunk_scores: sha256_hex(&chunks),
        labels: sha256_hex(&labels),
        splits: sha256_hex(&splits),
    };

    let modalities = ModalitySet::from_names(&cfg.modalities).map_err(|e| CliError::input(format!("modalities: {e}")))?;
    let parsed_chunks = parse_chunk_scores(chunks.as_slice(), &modalities);
    let parsed_labels = parse_labels(labels.as_slice(), cfg.phq8_threshold);
    let parsed_splits = parse_splits(splits.as_slice());
    let mut errors = Vec::new();
    if let Err(e) = &parsed_chunks {
        errors.push(tagged("chunk_scores", e));
    }
    if let Err(e) = &parsed_labels {
        errors.push(tagged("labels", e));
    }
    if let Err(e) = &parsed_splits {
        errors.push(tagged("splits", e));
    }
    if !errors.is_empty() {
        return Err(CliError::Input(errors));
    }

    let options = ValidationOptions {
        orphan_records: if cfg.strict_orphans { Severity::Error } else { Severity::Warning },
    };
    match validate_dataset(
        parsed_chunks.unwrap(),
        parsed_labels.unwrap(),
        parsed_splits.unwrap(),
        &modalities,
        options,
    ) {
        Ok((dataset, warnings)) => Ok(LoadedDataset {
            dataset,
            warnings,
            hashes,
        }),
        Err(ScoreLogError::Dataset(issues)) => {
            let only_fit_class = issues
                .iter()
                .all(|i| matches!(i, DatasetIssue::FitSplitLacksClass { .. }));
            let messages = issues.iter().map(|i| format!("dataset: {i}")).collect::<Vec<_>>();
            match policy {
                IssuePolicy::FitClassIsFitting if only_fit_class => Err(CliError::Fit(messages.join("; "))),
                _ => Err(CliError::Input(messages)),
            }
        }
        Err(e) => Err(CliError::input(format!("dataset: {e}"))),
    }
}

/// One row of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub patient_id: String,
    pub label: u8,
    pub raw: f64,
    pub probability: f64,
}

pub fn write_predictions(path: &Path, rows: &[PredictionRecord]) -> Result<(), CliError> {
    let fail = |e: csv::Error| crate::error::write_error(path, e);
    let mut w = csv::Writer::from_path(path).map_err(fail)?;
    for r in rows {
        w.serialize(r).map_err(fail)?;
    }
    w.flush().map_err(|e| crate::error::write_error(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, CliError> {
    let bytes = std::fs::read(path).map_err(|e| io_error("predictions", &e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes.as_slice());
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for (i, rec) in reader.deserialize::<PredictionRecord>().enumerate() {
        match rec {
            Ok(r) if r.label > 1 => errors.push(format!("predictions: row {}: label must be 0 or 1", i + 1)),
            Ok(r) if !(0.0..=1.0).contains(&r.probability) || !(0.0..=1.0).contains(&r.raw) => {
                errors.push(format!("predictions: row {}: score outside [0, 1]", i + 1))
            }
            Ok(r) => rows.push(r),
            Err(e) => errors.push(format!("predictions: row {}: {e}", i + 1)),
        }
    }
    if rows.is_empty() && errors.is_empty() {
        errors.push("predictions: no rows".into());
    }
    if errors.is_empty() {
        Ok(rows)
    } else {
        Err(CliError::Input(errors))
    }
}
