//! Decision curve analysis.
//!
//! Net benefit at threshold probability `t` is `TP/N − (FP/N)·t/(1−t)` with a
//! patient referred when `score >= t`. The reference strategies refer every
//! patient (treat-all) or nobody (treat-none, identically zero).

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NET_BENEFIT_FORMULA: &str = "NB(t) = TP/N - (FP/N) * t/(1-t), referred iff score >= t";
pub const DEFAULT_T_MIN: f64 = 0.05;
pub const DEFAULT_T_MAX: f64 = 0.60;
pub const DEFAULT_T_STEP: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecisionError {
    #[error("threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("invalid threshold grid: {0}")]
    InvalidGrid(String),
    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(), DecisionError> {
    if scores.len() != labels.len() {
        return Err(DecisionError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(DecisionError::Empty);
    }
    Ok(())
}

fn check_threshold(t: f64) -> Result<(), DecisionError> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(DecisionError::InvalidThreshold(t))
    }
}

/// `rate · t/(1−t)`, evaluated left to right so every caller rounds alike.
fn weighted_harm(rate: f64, t: f64) -> f64 {
    rate * t / (1.0 - t)
}

/// Net benefit of referring the patients with `score >= t`.
pub fn net_benefit(scores: &[f64], labels: &[bool], t: f64) -> Result<f64, DecisionError> {
    check_inputs(scores, labels)?;
    check_threshold(t)?;
    let n = scores.len() as f64;
    let (mut tp, mut referred) = (0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        if s >= t {
            referred += 1;
            tp += usize::from(y);
        }
    }
    if referred == 0 {
        return Ok(0.0);
    }
    // FP/N is taken as (referred/N − TP/N): when everyone is referred this is
    // bit-for-bit the treat-all expression (1 − prevalence).
    let tp_rate = tp as f64 / n;
    let fp_rate = referred as f64 / n - tp_rate;
    Ok(tp_rate - weighted_harm(fp_rate, t))
}

/// `prevalence − (1 − prevalence)·t/(1−t)`.
pub fn treat_all_net_benefit(prevalence: f64, t: f64) -> Result<f64, DecisionError> {
    check_threshold(t)?;
    Ok(prevalence - weighted_harm(1.0 - prevalence, t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetBenefitCurve {
    pub thresholds: Vec<f64>,
    pub nb_model: Vec<f64>,
    pub nb_treat_all: Vec<f64>,
    pub nb_treat_none: Vec<f64>,
    pub prevalence: f64,
    pub formula: String,
}

/// Inclusive grid `t_min, t_min + step, …, t_max`. Points are computed as
/// `t_min + k·step` so rounding does not accumulate.
pub fn threshold_grid(t_min: f64, t_max: f64, step: f64) -> Result<Vec<f64>, DecisionError> {
    if !(t_min > 0.0 && t_min < t_max && t_max < 1.0) {
        return Err(DecisionError::InvalidGrid(format!(
            "need 0 < t_min < t_max < 1, got [{t_min}, {t_max}]"
        )));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(DecisionError::InvalidGrid(format!("step must be positive, got {step}")));
    }
    let span = (t_max - t_min) / step;
    let count = (span + 1e-9).floor() as usize + 1;
    Ok((0..count)
        .map(|k| (t_min + k as f64 * step).min(t_max))
        .collect())
}

pub fn decision_curve(scores: &[f64], labels: &[bool], t_min: f64, t_max: f64, step: f64) -> Result<NetBenefitCurve, DecisionError> {
    check_inputs(scores, labels)?;
    let thresholds = threshold_grid(t_min, t_max, step)?;
    let prevalence = labels.iter().filter(|&&y| y).count() as f64 / labels.len() as f64;
    let nb_model = thresholds
        .iter()
        .map(|&t| net_benefit(scores, labels, t))
        .collect::<Result<Vec<_>, _>>()?;
    let nb_treat_all = thresholds
        .iter()
        .map(|&t| treat_all_net_benefit(prevalence, t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(NetBenefitCurve {
        nb_treat_none: vec![0.0; thresholds.len()],
        thresholds,
        nb_model,
        nb_treat_all,
        prevalence,
        formula: NET_BENEFIT_FORMULA.to_string(),
    })
}

/// A maximal run of consecutive grid thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRange {
    pub start: f64,
    pub end: f64,
    pub n_points: usize,
    /// Model strictly above both baselines at every point of the run.
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceSummary {
    /// Runs where `nb_model >= max(nb_treat_all, 0)`.
    pub dominant: Vec<ThresholdRange>,
    /// Runs where `nb_model > max(nb_treat_all, 0)`.
    pub strictly_dominant: Vec<ThresholdRange>,
    pub n_thresholds: usize,
}

fn runs(curve: &NetBenefitCurve, keep: impl Fn(f64, f64) -> bool) -> Vec<ThresholdRange> {
    let mut out: Vec<ThresholdRange> = Vec::new();
    let mut open = false;
    for (i, &t) in curve.thresholds.iter().enumerate() {
        let baseline = curve.nb_treat_all[i].max(curve.nb_treat_none[i]);
        let model = curve.nb_model[i];
        if keep(model, baseline) {
            let strict = model > baseline;
            match out.last_mut() {
                Some(r) if open => {
                    r.end = t;
                    r.n_points += 1;
                    r.strict &= strict;
                }
                _ => out.push(ThresholdRange {
                    start: t,
                    end: t,
                    n_points: 1,
                    strict,
                }),
            }
            open = true;
        } else {
            open = false;
        }
    }
    out
}

pub fn dominance_summary(curve: &NetBenefitCurve) -> DominanceSummary {
    DominanceSummary {
        dominant: runs(curve, |m, b| m >= b),
        strictly_dominant: runs(curve, |m, b| m > b),
        n_thresholds: curve.thresholds.len(),
    }
}

/// Writes `threshold,nb_model,nb_treat_all,nb_treat_none`.
pub fn write_curve<W: Write>(sink: W, curve: &NetBenefitCurve) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| std::io::Error::other(e.to_string());
    w.write_record(["threshold", "nb_model", "nb_treat_all", "nb_treat_none"])
        .map_err(io)?;
    for i in 0..curve.thresholds.len() {
        w.write_record([
            format!("{:.4}", curve.thresholds[i]),
            format!("{:.6}", curve.nb_model[i]),
            format!("{:.6}", curve.nb_treat_all[i]),
            format!("{:.6}", curve.nb_treat_none[i]),
        ])
        .map_err(io)?;
    }
    w.flush()
}
