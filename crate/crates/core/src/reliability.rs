//! Reliability curves and expected calibration error.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{compensated_sum, quantile_sorted};

pub const DEFAULT_BINS: usize = 10;
pub const DEFAULT_DEAD_BAND: f64 = 0.02;
pub const ECE_FORMULA: &str = "ECE = sum_b (n_b / N) * |mean_predicted_b - observed_frequency_b|";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReliabilityError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} probabilities vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("at least 2 bins are required, got {0}")]
    InvalidBins(usize),
    #[error("probability {value} at index {index} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binning {
    #[default]
    EqualWidth,
    /// Edges at empirical quantiles; duplicate edges are merged.
    Quantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `None` for empty bins.
    pub mean_predicted: Option<f64>,
    pub observed_frequency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bins: Vec<ReliabilityBin>,
    pub ece: f64,
    pub n_samples: usize,
    pub binning: Binning,
    pub formula: String,
}

impl CalibrationReport {
    /// Largest absolute gap over non-empty bins.
    pub fn max_gap(&self) -> f64 {
        self.bins
            .iter()
            .filter_map(|b| Some((b.mean_predicted? - b.observed_frequency?).abs()))
            .fold(0.0, f64::max)
    }
}

fn bin_edges(sorted: &[f64], n_bins: usize, binning: Binning) -> Vec<f64> {
    match binning {
        Binning::EqualWidth => (0..=n_bins).map(|k| k as f64 / n_bins as f64).collect(),
        Binning::Quantile => {
            let mut edges = vec![0.0];
            for k in 1..n_bins {
                let e = quantile_sorted(sorted, k as f64 / n_bins as f64);
                if e > *edges.last().unwrap() && e < 1.0 {
                    edges.push(e);
                }
            }
            edges.push(1.0);
            edges
        }
    }
}

/// Equal-width reliability curve over `[0, 1]`.
pub fn reliability_curve(probs: &[f64], labels: &[bool], n_bins: usize) -> Result<CalibrationReport, ReliabilityError> {
    reliability_curve_with(probs, labels, n_bins, Binning::EqualWidth)
}

/// Bins are half-open `[lo, hi)` except the last, which also holds 1.0; a
/// sample on an interior edge belongs to the higher bin.
pub fn reliability_curve_with(
    probs: &[f64],
    labels: &[bool],
    n_bins: usize,
    binning: Binning,
) -> Result<CalibrationReport, ReliabilityError> {
    if probs.len() != labels.len() {
        return Err(ReliabilityError::LengthMismatch(probs.len(), labels.len()));
    }
    if probs.is_empty() {
        return Err(ReliabilityError::Empty);
    }
    if n_bins < 2 {
        return Err(ReliabilityError::InvalidBins(n_bins));
    }
    if let Some((index, &value)) = probs
        .iter()
        .enumerate()
        .find(|(_, p)| !(0.0..=1.0).contains(*p))
    {
        return Err(ReliabilityError::OutOfRange { index, value });
    }

    // Canonical order makes every sum independent of input order.
    let mut samples: Vec<(f64, bool)> = probs.iter().copied().zip(labels.iter().copied()).collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let sorted: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let edges = bin_edges(&sorted, n_bins, binning);
    let n_out = edges.len() - 1;
    let interior = &edges[1..n_out];

    let mut members: Vec<Vec<(f64, bool)>> = vec![Vec::new(); n_out];
    for &(p, y) in &samples {
        members[interior.partition_point(|&e| e <= p)].push((p, y));
    }
    let n = samples.len() as f64;
    let bins: Vec<ReliabilityBin> = members
        .iter()
        .enumerate()
        .map(|(k, m)| {
            let count = m.len();
            let (mean_predicted, observed_frequency) = if count == 0 {
                (None, None)
            } else {
                let mean = compensated_sum(m.iter().map(|s| s.0)) / count as f64;
                let pos = m.iter().filter(|s| s.1).count();
                (
                    Some(mean.clamp(edges[k], edges[k + 1])),
                    Some(pos as f64 / count as f64),
                )
            };
            ReliabilityBin {
                lo: edges[k],
                hi: edges[k + 1],
                count,
                mean_predicted,
                observed_frequency,
            }
        })
        .collect();
    let ece = compensated_sum(bins.iter().filter_map(|b| {
        Some(b.count as f64 / n * (b.mean_predicted? - b.observed_frequency?).abs())
    }));
    Ok(CalibrationReport {
        bins,
        ece: ece.clamp(0.0, 1.0),
        n_samples: samples.len(),
        binning,
        formula: ECE_FORMULA.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Observed frequency above prediction: the model underestimates risk.
    Underconfident,
    Overconfident,
    Calibrated,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Underconfident => "underconfident",
            Verdict::Overconfident => "overconfident",
            Verdict::Calibrated => "calibrated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinReading {
    pub lo: f64,
    pub hi: f64,
    pub mean_predicted: f64,
    pub observed_frequency: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub dead_band: f64,
    pub readings: Vec<BinReading>,
    pub text: String,
}

/// Classifies every non-empty bin against the diagonal with a symmetric
/// dead band, and renders a per-region summary.
pub fn interpret_calibration(report: &CalibrationReport, dead_band: f64) -> CalibrationSummary {
    let readings: Vec<BinReading> = report
        .bins
        .iter()
        .filter_map(|b| {
            let (pred, obs) = (b.mean_predicted?, b.observed_frequency?);
            let gap = obs - pred;
            let verdict = if gap > dead_band {
                Verdict::Underconfident
            } else if gap < -dead_band {
                Verdict::Overconfident
            } else {
                Verdict::Calibrated
            };
            Some(BinReading {
                lo: b.lo,
                hi: b.hi,
                mean_predicted: pred,
                observed_frequency: obs,
                verdict,
            })
        })
        .collect();

    let mut text = format!("ECE {:.4} over {} samples ({})\n", report.ece, report.n_samples, report.formula);
    let mut i = 0;
    while i < readings.len() {
        let mut j = i;
        while j + 1 < readings.len() && readings[j + 1].verdict == readings[i].verdict {
            j += 1;
        }
        let _ = writeln!(
            text,
            "  [{:.2}, {:.2}]: {} ({} bin{})",
            readings[i].lo,
            readings[j].hi,
            readings[i].verdict.as_str(),
            j - i + 1,
            if j > i { "s" } else { "" }
        );
        i = j + 1;
    }
    CalibrationSummary {
        dead_band,
        readings,
        text,
    }
}

/// Writes `lo,hi,count,mean_predicted,observed_frequency`; empty bins leave
/// the last two fields blank.
pub fn write_bins<W: Write>(sink: W, report: &CalibrationReport) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| std::io::Error::other(e.to_string());
    w.write_record(["lo", "hi", "count", "mean_predicted", "observed_frequency"])
        .map_err(io)?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for b in &report.bins {
        w.write_record([
            format!("{:.6}", b.lo),
            format!("{:.6}", b.hi),
            b.count.to_string(),
            opt(b.mean_predicted),
            opt(b.observed_frequency),
        ])
        .map_err(io)?;
    }
    w.flush()
}
