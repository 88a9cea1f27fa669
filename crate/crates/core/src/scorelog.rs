//! Core data model plus ingestion and validation of the score, label and
//! split tables.
//!
//! All three tables are comma-delimited UTF-8 with a header row. Row numbers
//! in error messages count data rows from 1 (the header is not counted).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// PHQ-8 cutoff: totals strictly above this value are labelled depressed.
pub const DEFAULT_PHQ8_THRESHOLD: u8 = 10;
/// Maximum PHQ-8 total (eight items scored 0..=3).
pub const PHQ8_MAX: u8 = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreLogError {
    #[error("phq8 value {0} outside 0..=24")]
    Phq8OutOfRange(i64),
    #[error("phq8 threshold {0} outside 0..=24")]
    InvalidThreshold(i64),
    #[error("invalid modality name {0:?}")]
    InvalidModality(String),
    #[error("at least one modality is required")]
    EmptyModalitySet,
    #[error("duplicate modality {0}")]
    DuplicateModality(String),
    #[error("{file}: missing column {column:?}")]
    MissingColumn { file: &'static str, column: &'static str },
    #[error("{file}: malformed row {row}: {message}")]
    MalformedRow {
        file: &'static str,
        row: usize,
        message: String,
    },
    #[error("chunk_scores: row {row}: score {value} outside [0, 1]")]
    ScoreOutOfRange { row: usize, value: f64 },
    #[error("chunk_scores: row {row}: unknown modality {name:?}")]
    UnknownModality { row: usize, name: String },
    #[error("chunk_scores: row {row}: duplicate chunk ({patient_id}, {modality}, {chunk_index})")]
    DuplicateChunk {
        row: usize,
        patient_id: String,
        modality: String,
        chunk_index: u32,
    },
    #[error("chunk_scores: non-contiguous chunk indices for ({patient_id}, {modality}): missing {missing:?}")]
    NonContiguousChunks {
        patient_id: String,
        modality: String,
        missing: Vec<u32>,
    },
    #[error("{file}: row {row}: duplicate patient_id {patient_id}")]
    DuplicatePatient {
        file: &'static str,
        row: usize,
        patient_id: String,
    },
    #[error("labels: row {row}: stored label {stored} for {patient_id} disagrees with phq8 (expected {derived})")]
    LabelMismatch {
        row: usize,
        patient_id: String,
        stored: u8,
        derived: u8,
    },
    #[error("{}", format_issues(.0))]
    Dataset(Vec<DatasetIssue>),
}

fn format_issues(issues: &[DatasetIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Returns 1 iff `phq8` exceeds the default cutoff of 10.
pub fn binarize_phq8(phq8: i64) -> Result<u8, ScoreLogError> {
    binarize_phq8_at(phq8, DEFAULT_PHQ8_THRESHOLD)
}

pub fn binarize_phq8_at(phq8: i64, threshold: u8) -> Result<u8, ScoreLogError> {
    if !(0..=PHQ8_MAX as i64).contains(&phq8) {
        return Err(ScoreLogError::Phq8OutOfRange(phq8));
    }
    if threshold > PHQ8_MAX {
        return Err(ScoreLogError::InvalidThreshold(threshold as i64));
    }
    Ok(u8::from(phq8 > threshold as i64))
}

/// A named input stream (audio, text, tabular, ...).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Modality(String);

impl Modality {
    pub fn new(name: impl Into<String>) -> Result<Self, ScoreLogError> {
        let name = name.into();
        let ok = !name.is_empty()
            && name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if ok {
            Ok(Self(name))
        } else {
            Err(ScoreLogError::InvalidModality(name))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Modality {
    type Error = ScoreLogError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<Modality> for String {
    fn from(m: Modality) -> Self {
        m.0
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ordered, non-empty set of unique modalities. Order drives configuration
/// enumeration and tie-breaking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalitySet(Vec<Modality>);

impl ModalitySet {
    pub fn new(items: Vec<Modality>) -> Result<Self, ScoreLogError> {
        if items.is_empty() {
            return Err(ScoreLogError::EmptyModalitySet);
        }
        let mut seen = HashSet::new();
        for m in &items {
            if !seen.insert(m.as_str()) {
                return Err(ScoreLogError::DuplicateModality(m.to_string()));
            }
        }
        Ok(Self(items))
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, ScoreLogError> {
        let items = names
            .iter()
            .map(|n| Modality::new(n.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(items)
    }

    /// `audio`, `text`, `tabular`.
    pub fn default_set() -> Self {
        Self::from_names(&["audio", "text", "tabular"]).expect("static names are valid")
    }

    pub fn position(&self, m: &Modality) -> Option<usize> {
        self.0.iter().position(|x| x == m)
    }

    pub fn position_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|x| x.as_str() == name)
    }

    pub fn contains(&self, m: &Modality) -> bool {
        self.position(m).is_some()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Modality> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Modality] {
        &self.0
    }
}

/// One modality's probability for one chunk of one patient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkScore {
    pub patient_id: String,
    pub modality: Modality,
    pub chunk_index: u32,
    pub score: f64,
    pub start_s: Option<f64>,
    pub duration_s: Option<f64>,
}

/// PHQ-8 total with its derived binary label. The label cannot be set
/// independently of the total.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelRecord {
    patient_id: String,
    phq8: u8,
    depressed: bool,
}

impl LabelRecord {
    pub fn new(patient_id: impl Into<String>, phq8: i64, threshold: u8) -> Result<Self, ScoreLogError> {
        let label = binarize_phq8_at(phq8, threshold)?;
        Ok(Self {
            patient_id: patient_id.into(),
            phq8: phq8 as u8,
            depressed: label == 1,
        })
    }

    pub fn patient_id(&self) -> &str {
        &self.patient_id
    }

    pub fn phq8(&self) -> u8 {
        self.phq8
    }

    pub fn depressed(&self) -> bool {
        self.depressed
    }

    pub fn label(&self) -> u8 {
        u8::from(self.depressed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Fit,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Fit => "fit",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub patient_id: String,
    pub split: Split,
}

// ---------------------------------------------------------------------------
// Parsing

struct Table<R: Read> {
    file: &'static str,
    reader: csv::Reader<R>,
    columns: HashMap<String, usize>,
}

impl<R: Read> Table<R> {
    fn open(file: &'static str, source: R) -> Result<Self, ScoreLogError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(source);
        let headers = reader.headers().map_err(|e| ScoreLogError::MalformedRow {
            file,
            row: 0,
            message: e.to_string(),
        })?;
        let columns = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim_start_matches('\u{feff}').to_string(), i))
            .collect();
        Ok(Self {
            file,
            reader,
            columns,
        })
    }

    fn require(&self, column: &'static str) -> Result<usize, ScoreLogError> {
        self.columns
            .get(column)
            .copied()
            .ok_or(ScoreLogError::MissingColumn {
                file: self.file,
                column,
            })
    }

    fn optional(&self, column: &str) -> Option<usize> {
        self.columns.get(column).copied()
    }

    /// Iterates `(row_number, record)` with 1-based data row numbers.
    fn rows(&mut self) -> impl Iterator<Item = Result<(usize, csv::StringRecord), ScoreLogError>> + '_ {
        let file = self.file;
        self.reader
            .records()
            .enumerate()
            .map(move |(i, rec)| {
                rec.map(|r| (i + 1, r)).map_err(|e| ScoreLogError::MalformedRow {
                    file,
                    row: i + 1,
                    message: e.to_string(),
                })
            })
    }
}

fn malformed(file: &'static str, row: usize, message: impl Into<String>) -> ScoreLogError {
    ScoreLogError::MalformedRow {
        file,
        row,
        message: message.into(),
    }
}

fn field<'a>(file: &'static str, row: usize, rec: &'a csv::StringRecord, idx: usize, name: &str) -> Result<&'a str, ScoreLogError> {
    match rec.get(idx) {
        Some(s) if !s.is_empty() => Ok(s),
        _ => Err(malformed(file, row, format!("empty {name}"))),
    }
}

fn optional_real(row: usize, rec: &csv::StringRecord, idx: Option<usize>, name: &str, strictly_positive: bool) -> Result<Option<f64>, ScoreLogError> {
    let Some(raw) = idx.and_then(|i| rec.get(i)).filter(|s| !s.is_empty()) else {
        return Ok(None);
    };
    let v: f64 = raw
        .parse()
        .map_err(|_| malformed("chunk_scores", row, format!("invalid {name} {raw:?}")))?;
    let ok = v.is_finite() && if strictly_positive { v > 0.0 } else { v >= 0.0 };
    if !ok {
        return Err(malformed("chunk_scores", row, format!("{name} {raw} out of range")));
    }
    Ok(Some(v))
}

/// Parses a chunk score table. Rows are returned in file order.
pub fn parse_chunk_scores<R: Read>(source: R, expected: &ModalitySet) -> Result<Vec<ChunkScore>, ScoreLogError> {
    const FILE: &str = "chunk_scores";
    let mut table = Table::open(FILE, source)?;
    let c_pid = table.require("patient_id")?;
    let c_mod = table.require("modality")?;
    let c_idx = table.require("chunk_index")?;
    let c_score = table.require("score")?;
    let c_start = table.optional("start_s");
    let c_dur = table.optional("duration_s");

    let mut out = Vec::new();
    let mut seen: HashSet<(String, usize, u32)> = HashSet::new();
    for item in table.rows() {
        let (row, rec) = item?;
        let patient_id = field(FILE, row, &rec, c_pid, "patient_id")?.to_string();
        let mod_name = field(FILE, row, &rec, c_mod, "modality")?;
        let Some(mod_pos) = expected.position_of(mod_name) else {
            return Err(ScoreLogError::UnknownModality {
                row,
                name: mod_name.to_string(),
            });
        };
        let raw_idx = field(FILE, row, &rec, c_idx, "chunk_index")?;
        let chunk_index: u32 = raw_idx
            .parse()
            .map_err(|_| malformed(FILE, row, format!("invalid chunk_index {raw_idx:?}")))?;
        let raw_score = field(FILE, row, &rec, c_score, "score")?;
        let score: f64 = raw_score
            .parse()
            .map_err(|_| malformed(FILE, row, format!("invalid score {raw_score:?}")))?;
        if !(0.0..=1.0).contains(&score) {
            // NaN also lands here
            return Err(ScoreLogError::ScoreOutOfRange { row, value: score });
        }
        let start_s = optional_real(row, &rec, c_start, "start_s", false)?;
        let duration_s = optional_real(row, &rec, c_dur, "duration_s", true)?;

        if !seen.insert((patient_id.clone(), mod_pos, chunk_index)) {
            return Err(ScoreLogError::DuplicateChunk {
                row,
                patient_id,
                modality: mod_name.to_string(),
                chunk_index,
            });
        }
        out.push(ChunkScore {
            patient_id,
            modality: expected.as_slice()[mod_pos].clone(),
            chunk_index,
            score,
            start_s,
            duration_s,
        });
    }
    check_contiguous(&out, expected)?;
    Ok(out)
}

fn check_contiguous(chunks: &[ChunkScore], modalities: &ModalitySet) -> Result<(), ScoreLogError> {
    let mut groups: BTreeMap<(&str, usize), Vec<u32>> = BTreeMap::new();
    for c in chunks {
        let pos = modalities.position(&c.modality).unwrap_or(usize::MAX);
        groups
            .entry((c.patient_id.as_str(), pos))
            .or_default()
            .push(c.chunk_index);
    }
    for ((pid, pos), mut idx) in groups {
        idx.sort_unstable();
        let max = *idx.last().expect("groups are non-empty");
        if max as usize + 1 != idx.len() {
            let present: BTreeSet<u32> = idx.into_iter().collect();
            let missing = (0..max).filter(|i| !present.contains(i)).collect();
            return Err(ScoreLogError::NonContiguousChunks {
                patient_id: pid.to_string(),
                modality: modalities.as_slice()[pos].to_string(),
                missing,
            });
        }
    }
    Ok(())
}

/// Parses a label table (`patient_id,phq8[,label]`). Labels are always
/// recomputed from `phq8`; a stored `label` column is cross-checked.
pub fn parse_labels<R: Read>(source: R, threshold: u8) -> Result<Vec<LabelRecord>, ScoreLogError> {
    const FILE: &str = "labels";
    if threshold > PHQ8_MAX {
        return Err(ScoreLogError::InvalidThreshold(threshold as i64));
    }
    let mut table = Table::open(FILE, source)?;
    let c_pid = table.require("patient_id")?;
    let c_phq = table.require("phq8")?;
    let c_label = table.optional("label");

    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for item in table.rows() {
        let (row, rec) = item?;
        let patient_id = field(FILE, row, &rec, c_pid, "patient_id")?.to_string();
        let raw = field(FILE, row, &rec, c_phq, "phq8")?;
        let phq8: i64 = raw
            .parse()
            .map_err(|_| malformed(FILE, row, format!("invalid phq8 {raw:?}")))?;
        let record = LabelRecord::new(patient_id.clone(), phq8, threshold)?;
        if let Some(stored) = c_label.and_then(|i| rec.get(i)).filter(|s| !s.is_empty()) {
            let stored: u8 = match stored {
                "0" => 0,
                "1" => 1,
                other => return Err(malformed(FILE, row, format!("invalid label {other:?}"))),
            };
            if stored != record.label() {
                return Err(ScoreLogError::LabelMismatch {
                    row,
                    patient_id,
                    stored,
                    derived: record.label(),
                });
            }
        }
        if !seen.insert(patient_id.clone()) {
            return Err(ScoreLogError::DuplicatePatient {
                file: FILE,
                row,
                patient_id,
            });
        }
        out.push(record);
    }
    Ok(out)
}

/// Parses a split table (`patient_id,split` with `fit` | `test`).
pub fn parse_splits<R: Read>(source: R) -> Result<Vec<SplitAssignment>, ScoreLogError> {
    const FILE: &str = "splits";
    let mut table = Table::open(FILE, source)?;
    let c_pid = table.require("patient_id")?;
    let c_split = table.require("split")?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for item in table.rows() {
        let (row, rec) = item?;
        let patient_id = field(FILE, row, &rec, c_pid, "patient_id")?.to_string();
        let split = match field(FILE, row, &rec, c_split, "split")? {
            "fit" => Split::Fit,
            "test" => Split::Test,
            other => return Err(malformed(FILE, row, format!("invalid split {other:?} (expected fit or test)"))),
        };
        if !seen.insert(patient_id.clone()) {
            return Err(ScoreLogError::DuplicatePatient {
                file: FILE,
                row,
                patient_id,
            });
        }
        out.push(SplitAssignment { patient_id, split });
    }
    Ok(out)
}

fn write_err(e: impl fmt::Display) -> std::io::Error {
    std::io::Error::other(e.to_string())
}

/// Writes chunk scores in the ingestion format. The optional timing columns
/// are emitted when any chunk carries them.
pub fn write_chunk_scores<W: Write>(sink: W, chunks: &[ChunkScore]) -> std::io::Result<()> {
    let timed = chunks
        .iter()
        .any(|c| c.start_s.is_some() || c.duration_s.is_some());
    let mut w = csv::Writer::from_writer(sink);
    if timed {
        w.write_record(["patient_id", "modality", "chunk_index", "score", "start_s", "duration_s"])
    } else {
        w.write_record(["patient_id", "modality", "chunk_index", "score"])
    }
    .map_err(write_err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for c in chunks {
        let mut rec = vec![
            c.patient_id.clone(),
            c.modality.to_string(),
            c.chunk_index.to_string(),
            c.score.to_string(),
        ];
        if timed {
            rec.push(opt(c.start_s));
            rec.push(opt(c.duration_s));
        }
        w.write_record(&rec).map_err(write_err)?;
    }
    w.flush()
}

pub fn write_labels<W: Write>(sink: W, labels: &[LabelRecord]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["patient_id", "phq8"]).map_err(write_err)?;
    for l in labels {
        w.write_record([l.patient_id(), &l.phq8().to_string()])
            .map_err(write_err)?;
    }
    w.flush()
}

pub fn write_splits<W: Write>(sink: W, splits: &[SplitAssignment]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["patient_id", "split"]).map_err(write_err)?;
    for s in splits {
        w.write_record([s.patient_id.as_str(), s.split.as_str()])
            .map_err(write_err)?;
    }
    w.flush()
}

// ---------------------------------------------------------------------------
// Cross-table validation

/// Referential problems found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum DatasetIssue {
    UnlabeledPatient(String),
    UnassignedPatient(String),
    LabelWithoutChunks(String),
    SplitWithoutChunks(String),
    EmptySplit(Split),
    FitSplitLacksClass { positive: bool },
}

impl fmt::Display for DatasetIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetIssue::UnlabeledPatient(p) => write!(f, "unlabeled patient {p}"),
            DatasetIssue::UnassignedPatient(p) => write!(f, "patient {p} has no split assignment"),
            DatasetIssue::LabelWithoutChunks(p) => write!(f, "labeled patient {p} has no chunk scores"),
            DatasetIssue::SplitWithoutChunks(p) => write!(f, "split assignment for {p} has no chunk scores"),
            DatasetIssue::EmptySplit(s) => write!(f, "empty {s} split"),
            DatasetIssue::FitSplitLacksClass { positive: true } => f.write_str("fit split lacks positive class"),
            DatasetIssue::FitSplitLacksClass { positive: false } => f.write_str("fit split lacks negative class"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Severity {
    #[default]
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ValidationOptions {
    /// How to treat labels or split rows for patients that have no chunks.
    pub orphan_records: Severity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModalityCount {
    pub modality: Modality,
    pub patients: usize,
    pub chunks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub patients: usize,
    pub depressed: usize,
    pub controls: usize,
    pub prevalence: f64,
    pub fit_patients: usize,
    pub test_patients: usize,
    pub modalities: Vec<ModalityCount>,
}

/// Cross-checked dataset in canonical order: chunks by (patient, modality
/// order, chunk index); labels and splits by patient id. Only patients with
/// at least one chunk are retained.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedDataset {
    chunks: Vec<ChunkScore>,
    labels: Vec<LabelRecord>,
    splits: Vec<SplitAssignment>,
    modalities: ModalitySet,
}

impl ValidatedDataset {
    pub fn chunks(&self) -> &[ChunkScore] {
        &self.chunks
    }

    pub fn labels(&self) -> &[LabelRecord] {
        &self.labels
    }

    pub fn splits(&self) -> &[SplitAssignment] {
        &self.splits
    }

    pub fn modalities(&self) -> &ModalitySet {
        &self.modalities
    }

    pub fn patient_ids(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(|l| l.patient_id())
    }

    pub fn label_of(&self, patient_id: &str) -> Option<&LabelRecord> {
        self.labels
            .binary_search_by(|l| l.patient_id().cmp(patient_id))
            .ok()
            .map(|i| &self.labels[i])
    }

    pub fn split_of(&self, patient_id: &str) -> Option<Split> {
        self.splits
            .binary_search_by(|s| s.patient_id.as_str().cmp(patient_id))
            .ok()
            .map(|i| self.splits[i].split)
    }

    pub fn summary(&self) -> DatasetSummary {
        let patients = self.labels.len();
        let depressed = self.labels.iter().filter(|l| l.depressed()).count();
        let fit_patients = self.splits.iter().filter(|s| s.split == Split::Fit).count();
        let modalities = self
            .modalities
            .iter()
            .map(|m| {
                let mine = self.chunks.iter().filter(|c| &c.modality == m);
                let pids: BTreeSet<&str> = mine.clone().map(|c| c.patient_id.as_str()).collect();
                ModalityCount {
                    modality: m.clone(),
                    patients: pids.len(),
                    chunks: mine.count(),
                }
            })
            .collect();
        DatasetSummary {
            patients,
            depressed,
            controls: patients - depressed,
            prevalence: depressed as f64 / patients as f64,
            fit_patients,
            test_patients: patients - fit_patients,
            modalities,
        }
    }
}

/// Cross-validates parsed tables. Returns the dataset plus any non-fatal
/// issues; fatal issues are all reported together in [`ScoreLogError::Dataset`].
pub fn validate_dataset(
    chunks: Vec<ChunkScore>,
    labels: Vec<LabelRecord>,
    splits: Vec<SplitAssignment>,
    modalities: &ModalitySet,
    options: ValidationOptions,
) -> Result<(ValidatedDataset, Vec<DatasetIssue>), ScoreLogError> {
    for c in &chunks {
        if !modalities.contains(&c.modality) {
            return Err(ScoreLogError::InvalidModality(c.modality.to_string()));
        }
    }
    check_contiguous(&chunks, modalities)?;

    let chunk_patients: BTreeSet<String> = chunks.iter().map(|c| c.patient_id.clone()).collect();
    let label_map: BTreeMap<&str, &LabelRecord> = labels.iter().map(|l| (l.patient_id(), l)).collect();
    let split_map: BTreeMap<&str, Split> = splits.iter().map(|s| (s.patient_id.as_str(), s.split)).collect();

    let mut errors = Vec::new();
    let mut warnings = Vec::new();
    for pid in chunk_patients.iter().map(String::as_str) {
        if !label_map.contains_key(pid) {
            errors.push(DatasetIssue::UnlabeledPatient(pid.to_string()));
        }
        if !split_map.contains_key(pid) {
            errors.push(DatasetIssue::UnassignedPatient(pid.to_string()));
        }
    }
    let orphans = label_map
        .keys()
        .filter(|p| !chunk_patients.contains(**p))
        .map(|p| DatasetIssue::LabelWithoutChunks(p.to_string()))
        .chain(
            split_map
                .keys()
                .filter(|p| !chunk_patients.contains(**p))
                .map(|p| DatasetIssue::SplitWithoutChunks(p.to_string())),
        );
    match options.orphan_records {
        Severity::Warning => warnings.extend(orphans),
        Severity::Error => errors.extend(orphans),
    }

    let mut fit_classes = [0usize; 2];
    let mut split_sizes = [0usize; 2];
    for pid in chunk_patients.iter().map(String::as_str) {
        if let (Some(label), Some(split)) = (label_map.get(pid), split_map.get(pid)) {
            split_sizes[*split as usize] += 1;
            if *split == Split::Fit {
                fit_classes[label.label() as usize] += 1;
            }
        }
    }
    for split in [Split::Fit, Split::Test] {
        if split_sizes[split as usize] == 0 {
            errors.push(DatasetIssue::EmptySplit(split));
        }
    }
    if split_sizes[Split::Fit as usize] > 0 {
        if fit_classes[1] == 0 {
            errors.push(DatasetIssue::FitSplitLacksClass { positive: true });
        }
        if fit_classes[0] == 0 {
            errors.push(DatasetIssue::FitSplitLacksClass { positive: false });
        }
    }
    if !errors.is_empty() {
        return Err(ScoreLogError::Dataset(errors));
    }

    let present: Vec<Modality> = modalities
        .iter()
        .filter(|m| chunks.iter().any(|c| &c.modality == *m))
        .cloned()
        .collect();
    let present = ModalitySet::new(present)?;

    let mut chunks = chunks;
    chunks.sort_by(|a, b| {
        a.patient_id
            .cmp(&b.patient_id)
            .then_with(|| present.position(&a.modality).cmp(&present.position(&b.modality)))
            .then(a.chunk_index.cmp(&b.chunk_index))
    });
    let mut labels: Vec<LabelRecord> = labels
        .into_iter()
        .filter(|l| chunk_patients.contains(l.patient_id()))
        .collect();
    labels.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    let mut splits: Vec<SplitAssignment> = splits
        .into_iter()
        .filter(|s| chunk_patients.contains(s.patient_id.as_str()))
        .collect();
    splits.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));

    Ok((
        ValidatedDataset {
            chunks,
            labels,
            splits,
            modalities: present,
        },
        warnings,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mods() -> ModalitySet {
        ModalitySet::default_set()
    }

    #[test]
    fn binarize_threshold_rule() {
        assert_eq!(binarize_phq8(10), Ok(0));
        assert_eq!(binarize_phq8(11), Ok(1));
        assert_eq!(binarize_phq8(0), Ok(0));
        assert_eq!(binarize_phq8(24), Ok(1));
        assert_eq!(binarize_phq8(25), Err(ScoreLogError::Phq8OutOfRange(25)));
        assert!(binarize_phq8(-1).unwrap_err().to_string().contains("-1"));
    }

    #[test]
    fn binarize_is_monotone() {
        for a in 0..=24 {
            for b in a..=24 {
                assert!(binarize_phq8(a).unwrap() <= binarize_phq8(b).unwrap());
            }
        }
    }

    #[test]
    fn configurable_threshold() {
        assert_eq!(binarize_phq8_at(10, 9), Ok(1));
        assert_eq!(binarize_phq8_at(10, 10), Ok(0));
        assert!(binarize_phq8_at(5, 30).is_err());
    }

    #[test]
    fn modality_names() {
        assert!(Modality::new("audio").is_ok());
        assert!(Modality::new("").is_err());
        assert!(Modality::new("a,b").is_err());
        assert!(ModalitySet::from_names(&["a", "a"]).is_err());
        assert!(ModalitySet::from_names::<&str>(&[]).is_err());
    }

    #[test]
    fn parses_valid_chunks_in_file_order() {
        let csv = "patient_id,modality,chunk_index,score\np1,audio,0,0.1\np1,audio,1,0.2\np1,audio,2,0.3\n";
        let chunks = parse_chunk_scores(csv.as_bytes(), &mods()).unwrap();
        assert_eq!(chunks.len(), 3);
        assert_eq!(chunks.iter().map(|c| c.chunk_index).collect::<Vec<_>>(), [0, 1, 2]);
        assert_eq!(chunks[2].score, 0.3);
        assert_eq!(chunks[0].start_s, None);
    }

    #[test]
    fn score_out_of_range_cites_row() {
        let csv = "patient_id,modality,chunk_index,score\np1,audio,0,0.1\np1,audio,1,1.3\n";
        let err = parse_chunk_scores(csv.as_bytes(), &mods()).unwrap_err();
        assert_eq!(err, ScoreLogError::ScoreOutOfRange { row: 2, value: 1.3 });
        assert!(err.to_string().contains("row 2") && err.to_string().contains("1.3"));
    }

    #[test]
    fn nan_score_rejected() {
        let csv = "patient_id,modality,chunk_index,score\np1,audio,0,NaN\n";
        assert!(matches!(
            parse_chunk_scores(csv.as_bytes(), &mods()),
            Err(ScoreLogError::ScoreOutOfRange { row: 1, .. })
        ));
    }

    #[test]
    fn non_contiguous_indices() {
        let csv = "patient_id,modality,chunk_index,score\np1,audio,0,0.1\np1,audio,2,0.2\n";
        let err = parse_chunk_scores(csv.as_bytes(), &mods()).unwrap_err();
        assert!(err.to_string().contains("non-contiguous chunk indices"));
        assert!(matches!(err, ScoreLogError::NonContiguousChunks { ref missing, .. } if missing == &vec![1]));
        let csv = "patient_id,modality,chunk_index,score\np1,audio,1,0.1\n";
        assert!(matches!(
            parse_chunk_scores(csv.as_bytes(), &mods()),
            Err(ScoreLogError::NonContiguousChunks { .. })
        ));
    }

    #[test]
    fn duplicate_unknown_and_malformed_rows() {
        let dup = "patient_id,modality,chunk_index,score\np1,audio,0,0.1\np1,audio,0,0.2\n";
        assert!(matches!(
            parse_chunk_scores(dup.as_bytes(), &mods()),
            Err(ScoreLogError::DuplicateChunk { row: 2, .. })
        ));
        let unknown = "patient_id,modality,chunk_index,score\np1,video,0,0.1\n";
        assert!(matches!(
            parse_chunk_scores(unknown.as_bytes(), &mods()),
            Err(ScoreLogError::UnknownModality { row: 1, .. })
        ));
        let bad = "patient_id,modality,chunk_index,score\np1,audio,x,0.1\n";
        assert!(matches!(
            parse_chunk_scores(bad.as_bytes(), &mods()),
            Err(ScoreLogError::MalformedRow { row: 1, .. })
        ));
        let short = "patient_id,modality,chunk_index,score\np1,audio,0\n";
        assert!(matches!(
            parse_chunk_scores(short.as_bytes(), &mods()),
            Err(ScoreLogError::MalformedRow { row: 1, .. })
        ));
        let missing = "patient_id,modality,score\n";
        assert!(matches!(
            parse_chunk_scores(missing.as_bytes(), &mods()),
            Err(ScoreLogError::MissingColumn { column: "chunk_index", .. })
        ));
    }

    #[test]
    fn optional_timing_columns() {
        let csv = "patient_id,modality,chunk_index,score,start_s,duration_s\np1,text,0,0.5,0,30\np1,text,1,0.5,15,\n";
        let chunks = parse_chunk_scores(csv.as_bytes(), &mods()).unwrap();
        assert_eq!(chunks[0].duration_s, Some(30.0));
        assert_eq!(chunks[1].start_s, Some(15.0));
        assert_eq!(chunks[1].duration_s, None);
        let bad = "patient_id,modality,chunk_index,score,start_s,duration_s\np1,text,0,0.5,0,0\n";
        assert!(parse_chunk_scores(bad.as_bytes(), &mods()).is_err());
    }

    #[test]
    fn labels_derive_from_phq8() {
        let recs = parse_labels("patient_id,phq8\np1,14\np2,10\n".as_bytes(), 10).unwrap();
        assert_eq!(recs[0].label(), 1);
        assert_eq!(recs[1].label(), 0);
        let dup = parse_labels("patient_id,phq8\np1,14\np1,14\n".as_bytes(), 10).unwrap_err();
        assert!(matches!(dup, ScoreLogError::DuplicatePatient { row: 2, .. }));
        assert!(parse_labels("patient_id,phq8\np1,25\n".as_bytes(), 10).is_err());
        assert!(matches!(
            parse_labels("patient_id\np1\n".as_bytes(), 10),
            Err(ScoreLogError::MissingColumn { column: "phq8", .. })
        ));
    }

    #[test]
    fn stored_label_cross_checked() {
        assert!(parse_labels("patient_id,phq8,label\np1,14,1\n".as_bytes(), 10).is_ok());
        assert!(matches!(
            parse_labels("patient_id,phq8,label\np1,10,1\n".as_bytes(), 10),
            Err(ScoreLogError::LabelMismatch { row: 1, .. })
        ));
    }

    #[test]
    fn splits_parse() {
        let s = parse_splits("patient_id,split\np1,fit\np2,test\n".as_bytes()).unwrap();
        assert_eq!(s[1].split, Split::Test);
        assert!(parse_splits("patient_id,split\np1,train\n".as_bytes()).is_err());
    }

    fn toy() -> (Vec<ChunkScore>, Vec<LabelRecord>, Vec<SplitAssignment>) {
        let mut chunks = Vec::new();
        for (i, pid) in ["p1", "p2", "p3", "p4"].iter().enumerate() {
            for k in 0..2 {
                chunks.push(ChunkScore {
                    patient_id: pid.to_string(),
                    modality: Modality::new("audio").unwrap(),
                    chunk_index: k,
                    score: 0.1 * (i + 1) as f64,
                    start_s: None,
                    duration_s: None,
                });
            }
        }
        let labels = vec![
            LabelRecord::new("p1", 3, 10).unwrap(),
            LabelRecord::new("p2", 15, 10).unwrap(),
            LabelRecord::new("p3", 5, 10).unwrap(),
            LabelRecord::new("p4", 20, 10).unwrap(),
        ];
        let splits = ["fit", "fit", "test", "test"]
            .iter()
            .zip(["p1", "p2", "p3", "p4"])
            .map(|(s, p)| SplitAssignment {
                patient_id: p.to_string(),
                split: if *s == "fit" { Split::Fit } else { Split::Test },
            })
            .collect();
        (chunks, labels, splits)
    }

    #[test]
    fn validates_consistent_toy_set() {
        let (c, l, s) = toy();
        let (ds, warnings) = validate_dataset(c, l, s, &mods(), Default::default()).unwrap();
        assert!(warnings.is_empty());
        let summary = ds.summary();
        assert_eq!(summary.patients, 4);
        assert_eq!(summary.depressed, 2);
        assert_eq!(summary.fit_patients, 2);
        assert_eq!(ds.modalities().len(), 1);
        assert_eq!(summary.modalities[0].chunks, 8);
        assert_eq!(ds.split_of("p3"), Some(Split::Test));
        assert!(ds.label_of("p2").unwrap().depressed());
    }

    #[test]
    fn unlabeled_patient_reported() {
        let (mut c, l, mut s) = toy();
        c.push(ChunkScore {
            patient_id: "p9".into(),
            modality: Modality::new("audio").unwrap(),
            chunk_index: 0,
            score: 0.5,
            start_s: None,
            duration_s: None,
        });
        s.push(SplitAssignment {
            patient_id: "p9".into(),
            split: Split::Test,
        });
        let err = validate_dataset(c, l, s, &mods(), Default::default()).unwrap_err();
        assert!(err.to_string().contains("unlabeled patient p9"), "{err}");
    }

    #[test]
    fn degenerate_fit_split() {
        let (c, mut l, s) = toy();
        l[1] = LabelRecord::new("p2", 2, 10).unwrap();
        let err = validate_dataset(c, l, s, &mods(), Default::default()).unwrap_err();
        assert!(err.to_string().contains("fit split lacks positive class"), "{err}");
    }

    #[test]
    fn empty_split() {
        let (c, l, mut s) = toy();
        for a in &mut s {
            a.split = Split::Fit;
        }
        let err = validate_dataset(c, l, s, &mods(), Default::default()).unwrap_err();
        assert!(err.to_string().contains("empty test split"), "{err}");
    }

    #[test]
    fn orphan_labels_warn_or_fail() {
        let (c, mut l, s) = toy();
        l.push(LabelRecord::new("p7", 1, 10).unwrap());
        let (ds, warnings) =
            validate_dataset(c.clone(), l.clone(), s.clone(), &mods(), Default::default()).unwrap();
        assert_eq!(warnings, vec![DatasetIssue::LabelWithoutChunks("p7".into())]);
        assert_eq!(ds.labels().len(), 4);
        let strict = ValidationOptions {
            orphan_records: Severity::Error,
        };
        assert!(validate_dataset(c, l, s, &mods(), strict).is_err());
    }
}
