//! Deterministic synthetic cohorts in the input table formats.
//!
//! Patient `p` with latent class `z = ±1` receives, for modality `m` and chunk
//! `c`, the score `σ(α_m·z + τ_m·η_pm + σ_m·ε_pmc)` where `η` and `ε` are
//! independent standard normals. `τ_m` is a per-patient offset shared by all
//! chunks of one modality; with `τ_m = 0` chunk noise is the only nuisance.
//!
//! Every random quantity is drawn from its own named stream (see
//! [`crate::rng::streams`]), so the cohort depends only on the configuration.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunkops::{plan_chunks, DEFAULT_CHUNK_LEN_S, DEFAULT_OVERLAP};
use crate::numeric::sigmoid;
use crate::rng::{stream_rng, streams};
use crate::scorelog::{
    write_chunk_scores, write_labels, write_splits, ChunkScore, LabelRecord, Modality, Split, SplitAssignment,
    DEFAULT_PHQ8_THRESHOLD, PHQ8_MAX,
};

pub const CHUNK_SCORES_FILE: &str = "chunk_scores.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const SPLITS_FILE: &str = "splits.csv";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("n_patients must be at least 2, got {0}")]
    TooFewPatients(usize),
    #[error("prevalence must be in (0, 1), got {0}")]
    InvalidPrevalence(f64),
    #[error("round(n_patients * prevalence) = {positives} leaves a class empty (n_patients = {n})")]
    EmptyClass { positives: usize, n: usize },
    #[error("at least one modality is required")]
    NoModalities,
    #[error("modality {0} configured twice")]
    DuplicateModality(String),
    #[error("modality {modality}: {message}")]
    InvalidModality { modality: String, message: String },
    #[error("chunks_per_patient must satisfy 1 <= min <= max, got {min}..={max}")]
    InvalidChunkRange { min: u32, max: u32 },
}

/// Score-generating parameters for one modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalitySignal {
    pub modality: Modality,
    /// Class separation `α ≥ 0` on the logit scale.
    pub signal: f64,
    /// Per-chunk noise scale `σ > 0`.
    pub noise: f64,
    /// Per-patient offset scale `τ ≥ 0`.
    #[serde(default)]
    pub patient_noise: f64,
}

impl ModalitySignal {
    pub fn new(modality: &str, signal: f64, noise: f64, patient_noise: f64) -> Result<Self, SynthError> {
        let modality = Modality::new(modality).map_err(|e| SynthError::InvalidModality {
            modality: modality.to_string(),
            message: e.to_string(),
        })?;
        Ok(Self {
            modality,
            signal,
            noise,
            patient_noise,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkRange {
    pub min: u32,
    pub max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub prevalence: f64,
    pub modalities: Vec<ModalitySignal>,
    pub chunks_per_patient: ChunkRange,
    pub seed: u64,
}

impl SynthConfig {
    /// Number of depressed patients, `round(n_patients · prevalence)`.
    pub fn positives(&self) -> usize {
        (self.n_patients as f64 * self.prevalence).round() as usize
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_patients < 2 {
            return Err(SynthError::TooFewPatients(self.n_patients));
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(SynthError::InvalidPrevalence(self.prevalence));
        }
        let positives = self.positives();
        if positives == 0 || positives >= self.n_patients {
            return Err(SynthError::EmptyClass {
                positives,
                n: self.n_patients,
            });
        }
        if self.modalities.is_empty() {
            return Err(SynthError::NoModalities);
        }
        for (i, m) in self.modalities.iter().enumerate() {
            if self.modalities[..i].iter().any(|o| o.modality == m.modality) {
                return Err(SynthError::DuplicateModality(m.modality.to_string()));
            }
            let bad = |message: &str| SynthError::InvalidModality {
                modality: m.modality.to_string(),
                message: message.to_string(),
            };
            if !(m.signal.is_finite() && m.signal >= 0.0) {
                return Err(bad("signal must be finite and >= 0"));
            }
            if !(m.noise.is_finite() && m.noise > 0.0) {
                return Err(bad("noise must be finite and > 0"));
            }
            if !(m.patient_noise.is_finite() && m.patient_noise >= 0.0) {
                return Err(bad("patient_noise must be finite and >= 0"));
            }
        }
        let ChunkRange { min, max } = self.chunks_per_patient;
        if min == 0 || min > max {
            return Err(SynthError::InvalidChunkRange { min, max });
        }
        Ok(())
    }
}

/// Three weakly informative modalities, each perturbed by its own patient-level
/// offset. Averaging them cancels part of that offset, so fused scores separate
/// the classes better than any single modality.
pub fn complementary_scenario(seed: u64) -> SynthConfig {
    let modality = |name| ModalitySignal::new(name, 0.4, 0.5, 1.0).expect("preset names are valid");
    SynthConfig {
        n_patients: 2000,
        prevalence: 0.30,
        modalities: vec![modality("audio"), modality("text"), modality("tabular")],
        chunks_per_patient: ChunkRange { min: 8, max: 16 },
        seed,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub chunks: Vec<ChunkScore>,
    pub labels: Vec<LabelRecord>,
    pub splits: Vec<SplitAssignment>,
}

fn patient_id(index: usize, n: usize) -> String {
    let width = n.to_string().len().max(3);
    format!("p{:0width$}", index + 1)
}

pub fn generate_cohort(config: &SynthConfig) -> Result<Cohort, SynthError> {
    config.validate()?;
    let n = config.n_patients;
    let positives = config.positives();

    let mut depressed: Vec<bool> = (0..n).map(|i| i < positives).collect();
    depressed.shuffle(&mut stream_rng(config.seed, streams::LABELS));

    let mut phq_rng = stream_rng(config.seed, streams::PHQ8);
    let cut = i64::from(DEFAULT_PHQ8_THRESHOLD);
    let labels: Vec<LabelRecord> = depressed
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let phq8 = if d {
                phq_rng.random_range(cut + 1..=i64::from(PHQ8_MAX))
            } else {
                phq_rng.random_range(0..=cut)
            };
            LabelRecord::new(patient_id(i, n), phq8, DEFAULT_PHQ8_THRESHOLD).expect("phq8 drawn within range")
        })
        .collect();

    let mut count_rng = stream_rng(config.seed, streams::CHUNK_COUNTS);
    let mut latent_rng = stream_rng(config.seed, streams::PATIENT_LATENT);
    let mut noise_rng = stream_rng(config.seed, streams::CHUNK_NOISE);
    let ChunkRange { min, max } = config.chunks_per_patient;
    let mut chunks = Vec::new();
    for (i, &d) in depressed.iter().enumerate() {
        let pid = patient_id(i, n);
        let z = if d { 1.0 } else { -1.0 };
        let k = count_rng.random_range(min..=max);
        let duration = DEFAULT_CHUNK_LEN_S * (1.0 + (k - 1) as f64 * (1.0 - DEFAULT_OVERLAP));
        let plan = plan_chunks(duration, DEFAULT_CHUNK_LEN_S, DEFAULT_OVERLAP).expect("positive duration");
        debug_assert_eq!(plan.windows.len(), k as usize);
        for m in &config.modalities {
            let eta: f64 = latent_rng.sample(StandardNormal);
            let offset = m.signal * z + m.patient_noise * eta;
            for (c, w) in plan.windows.iter().enumerate() {
                let eps: f64 = noise_rng.sample(StandardNormal);
                chunks.push(ChunkScore {
                    patient_id: pid.clone(),
                    modality: m.modality.clone(),
                    chunk_index: c as u32,
                    score: sigmoid(offset + m.noise * eps),
                    start_s: Some(w.start_s),
                    duration_s: Some(w.len()),
                });
            }
        }
    }

    // alternate fit/test within each class, in patient order
    let mut seen = [0usize; 2];
    let splits = depressed
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let slot = &mut seen[usize::from(d)];
            let split = if *slot % 2 == 0 { Split::Fit } else { Split::Test };
            *slot += 1;
            SplitAssignment {
                patient_id: patient_id(i, n),
                split,
            }
        })
        .collect();

    Ok(Cohort { chunks, labels, splits })
}

/// Paths of the three tables written by [`write_cohort`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CohortFiles {
    pub chunk_scores: PathBuf,
    pub labels: PathBuf,
    pub splits: PathBuf,
}

pub fn write_cohort(cohort: &Cohort, dir: &Path) -> std::io::Result<CohortFiles> {
    std::fs::create_dir_all(dir)?;
    let files = CohortFiles {
        chunk_scores: dir.join(CHUNK_SCORES_FILE),
        labels: dir.join(LABELS_FILE),
        splits: dir.join(SPLITS_FILE),
    };
    write_chunk_scores(BufWriter::new(File::create(&files.chunk_scores)?), &cohort.chunks)?;
    write_labels(BufWriter::new(File::create(&files.labels)?), &cohort.labels)?;
    write_splits(BufWriter::new(File::create(&files.splits)?), &cohort.splits)?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorelog::binarize_phq8;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_patients: 189,
            prevalence: 0.30,
            modalities: vec![
                ModalitySignal::new("audio", 1.0, 0.5, 0.0).unwrap(),
                ModalitySignal::new("text", 0.5, 1.0, 0.5).unwrap(),
            ],
            chunks_per_patient: ChunkRange { min: 2, max: 5 },
            seed,
        }
    }

    #[test]
    fn table_one_shape() {
        let cohort = generate_cohort(&small(7)).unwrap();
        assert_eq!(cohort.labels.len(), 189);
        assert_eq!(cohort.labels.iter().filter(|l| l.depressed()).count(), 57);
        for l in &cohort.labels {
            assert_eq!(binarize_phq8(i64::from(l.phq8())).unwrap(), l.label());
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        assert_eq!(generate_cohort(&small(7)).unwrap(), generate_cohort(&small(7)).unwrap());
        assert_ne!(generate_cohort(&small(7)).unwrap(), generate_cohort(&small(8)).unwrap());
    }

    #[test]
    fn chunk_timing_follows_window_plan() {
        let cohort = generate_cohort(&small(1)).unwrap();
        for c in &cohort.chunks {
            assert_eq!(c.start_s, Some(15.0 * c.chunk_index as f64));
            assert_eq!(c.duration_s, Some(30.0));
            assert!(c.score > 0.0 && c.score < 1.0);
        }
    }

    #[test]
    fn splits_are_stratified() {
        let cohort = generate_cohort(&small(3)).unwrap();
        let count = |d: bool, s: Split| {
            cohort
                .labels
                .iter()
                .zip(&cohort.splits)
                .filter(|(l, a)| l.depressed() == d && a.split == s)
                .count() as i64
        };
        assert!((count(true, Split::Fit) - count(true, Split::Test)).abs() <= 1);
        assert!((count(false, Split::Fit) - count(false, Split::Test)).abs() <= 1);
    }

    #[test]
    fn invalid_configs() {
        let mut c = small(0);
        c.prevalence = 0.0;
        assert_eq!(generate_cohort(&c), Err(SynthError::InvalidPrevalence(0.0)));
        let mut c = small(0);
        c.n_patients = 3;
        c.prevalence = 0.1;
        assert!(matches!(c.validate(), Err(SynthError::EmptyClass { .. })));
        let mut c = small(0);
        c.modalities.clear();
        assert_eq!(c.validate(), Err(SynthError::NoModalities));
        let mut c = small(0);
        c.modalities[0].noise = 0.0;
        assert!(matches!(c.validate(), Err(SynthError::InvalidModality { .. })));
        let mut c = small(0);
        c.chunks_per_patient = ChunkRange { min: 3, max: 2 };
        assert!(matches!(c.validate(), Err(SynthError::InvalidChunkRange { .. })));
        let mut c = small(0);
        c.modalities[1] = c.modalities[0].clone();
        assert!(matches!(c.validate(), Err(SynthError::DuplicateModality(_))));
    }

    #[test]
    fn patient_ids_sort_numerically() {
        assert_eq!(patient_id(0, 189), "p001");
        assert_eq!(patient_id(1999, 2000), "p2000");
        assert_eq!(patient_id(0, 2000), "p0001");
    }
}
