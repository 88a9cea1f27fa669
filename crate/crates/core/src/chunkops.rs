//! Chunk window geometry and chunk-to-patient score aggregation.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::compensated_sum;
use crate::scorelog::{ChunkScore, Modality, ValidatedDataset};

pub const DEFAULT_CHUNK_LEN_S: f64 = 30.0;
pub const DEFAULT_OVERLAP: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChunkError {
    #[error("duration must be positive and finite, got {0}")]
    InvalidDuration(f64),
    #[error("chunk length must be positive and finite, got {0}")]
    InvalidChunkLength(f64),
    #[error("overlap fraction must be in [0, 1), got {0}")]
    InvalidOverlap(f64),
    #[error("cannot aggregate an empty chunk list")]
    Empty,
    #[error("chunks mix patients or modalities ({0})")]
    Mixed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start_s: f64,
    pub end_s: f64,
}

impl Window {
    pub fn len(&self) -> f64 {
        self.end_s - self.start_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkPlan {
    pub windows: Vec<Window>,
    pub chunk_len_s: f64,
    pub overlap_fraction: f64,
}

impl ChunkPlan {
    pub fn hop_s(&self) -> f64 {
        self.chunk_len_s * (1.0 - self.overlap_fraction)
    }
}

/// Lays out fixed-length windows with the given overlap. Regular windows start
/// at multiples of the hop while they fit; leftover audio is covered by one
/// end-anchored tail window. Inputs shorter than one chunk yield a single
/// truncated window.
pub fn plan_chunks(duration_s: f64, chunk_len_s: f64, overlap_fraction: f64) -> Result<ChunkPlan, ChunkError> {
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(ChunkError::InvalidDuration(duration_s));
    }
    if !(chunk_len_s.is_finite() && chunk_len_s > 0.0) {
        return Err(ChunkError::InvalidChunkLength(chunk_len_s));
    }
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(ChunkError::InvalidOverlap(overlap_fraction));
    }
    let plan = |windows| ChunkPlan {
        windows,
        chunk_len_s,
        overlap_fraction,
    };
    if duration_s < chunk_len_s {
        return Ok(plan(vec![Window {
            start_s: 0.0,
            end_s: duration_s,
        }]));
    }
    let hop = chunk_len_s * (1.0 - overlap_fraction);
    // Absorbs representation error in hop multiples (e.g. 0.1-second hops).
    let tol = 1e-9 * chunk_len_s;
    let n_regular = ((duration_s - chunk_len_s + tol) / hop).floor() as usize + 1;
    let mut windows: Vec<Window> = (0..n_regular)
        .map(|k| {
            let start_s = k as f64 * hop;
            Window {
                start_s,
                end_s: start_s + chunk_len_s,
            }
        })
        .collect();
    let covered = windows.last().map_or(0.0, |w| w.end_s);
    if covered < duration_s - tol {
        windows.push(Window {
            start_s: duration_s - chunk_len_s,
            end_s: duration_s,
        });
    } else if let Some(last) = windows.last_mut() {
        // snap the final edge so coverage is exact
        last.end_s = last.end_s.min(duration_s);
    }
    Ok(plan(windows))
}

/// Mean chunk score for one (patient, modality) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientScore {
    pub patient_id: String,
    pub modality: Modality,
    pub score: f64,
    pub n_chunks: usize,
}

/// Unweighted mean of the chunk scores. Values are summed in ascending order
/// with compensation, so the result does not depend on input order.
pub fn aggregate_patient(chunks: &[ChunkScore]) -> Result<PatientScore, ChunkError> {
    let first = chunks.first().ok_or(ChunkError::Empty)?;
    if let Some(other) = chunks
        .iter()
        .find(|c| c.patient_id != first.patient_id || c.modality != first.modality)
    {
        return Err(ChunkError::Mixed(format!(
            "{}/{} vs {}/{}",
            first.patient_id, first.modality, other.patient_id, other.modality
        )));
    }
    let mut values: Vec<f64> = chunks.iter().map(|c| c.score).collect();
    values.sort_by(f64::total_cmp);
    let (lo, hi) = (values[0], values[values.len() - 1]);
    let mean = compensated_sum(values.iter().copied()) / values.len() as f64;
    Ok(PatientScore {
        patient_id: first.patient_id.clone(),
        modality: first.modality.clone(),
        score: mean.clamp(lo, hi),
        n_chunks: chunks.len(),
    })
}

/// One [`PatientScore`] per (patient, modality) pair, in the dataset's
/// canonical order.
pub fn aggregate_dataset(dataset: &ValidatedDataset) -> Vec<PatientScore> {
    dataset
        .chunks()
        .chunk_by(|a, b| a.patient_id == b.patient_id && a.modality == b.modality)
        .map(|group| aggregate_patient(group).expect("validated groups are non-empty and homogeneous"))
        .collect()
}

/// Writes `patient_id,modality,score,n_chunks`.
pub fn write_patient_scores<W: Write>(sink: W, scores: &[PatientScore]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| std::io::Error::other(e.to_string());
    w.write_record(["patient_id", "modality", "score", "n_chunks"])
        .map_err(io)?;
    for s in scores {
        w.write_record([
            s.patient_id.as_str(),
            s.modality.as_str(),
            &s.score.to_string(),
            &s.n_chunks.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()
}
