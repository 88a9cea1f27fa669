//! Threshold metrics, ROC/AUROC and percentile bootstrap intervals.
//!
//! Labels are `true` for the depressed (positive) class. A sample is predicted
//! positive when `score >= threshold`.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::quantile_sorted;
use crate::rng::stream_rng;

pub const DEFAULT_CLASSIFICATION_THRESHOLD: f64 = 0.5;
pub const DEFAULT_RESAMPLES: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {scores} scores vs {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("empty input")]
    Empty,
    #[error("AUROC undefined: labels contain a single class")]
    SingleClass,
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("n_resamples must be at least 1")]
    NoResamples,
    #[error("confidence level must be in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("bootstrap gave up after {attempts} draws ({discarded} single-class resamples discarded)")]
    AttemptCapExceeded { attempts: usize, discarded: usize },
}

fn check_pair(scores: &[f64], labels: &[bool]) -> Result<(), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion_at_threshold(scores: &[f64], labels: &[bool], threshold: f64) -> Result<ConfusionCounts, MetricError> {
    check_pair(scores, labels)?;
    let mut c = ConfusionCounts::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// A metric that hit a zero denominator and was set to 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroDivision {
    ControlPrecision,
    ControlRecall,
    ControlF1,
    DepressedPrecision,
    DepressedRecall,
    DepressedF1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub control: ClassScores,
    pub depressed: ClassScores,
    pub macro_f1: f64,
    pub zero_division: Vec<ZeroDivision>,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: usize, den: usize, flag: ZeroDivision, flags: &mut Vec<ZeroDivision>) -> f64 {
    if den == 0 {
        flags.push(flag);
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class precision/recall/F1 for control (negatives as target) and
/// depressed, plus their macro average.
pub fn class_metrics(counts: &ConfusionCounts) -> ClassMetrics {
    use ZeroDivision::*;
    let mut flags = Vec::new();
    let ConfusionCounts { tp, fp, tn, fn_ } = *counts;

    let p_d = ratio(tp, tp + fp, DepressedPrecision, &mut flags);
    let r_d = ratio(tp, tp + fn_, DepressedRecall, &mut flags);
    let p_c = ratio(tn, tn + fn_, ControlPrecision, &mut flags);
    let r_c = ratio(tn, tn + fp, ControlRecall, &mut flags);
    if p_d + r_d == 0.0 {
        flags.push(DepressedF1);
    }
    if p_c + r_c == 0.0 {
        flags.push(ControlF1);
    }
    let control = ClassScores {
        precision: p_c,
        recall: r_c,
        f1: f1_score(p_c, r_c),
    };
    let depressed = ClassScores {
        precision: p_d,
        recall: r_d,
        f1: f1_score(p_d, r_d),
    };
    ClassMetrics {
        macro_f1: (control.f1 + depressed.f1) / 2.0,
        control,
        depressed,
        zero_division: flags,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve from (0,0) to (1,1) with one vertex per distinct score, and the
/// positive-class AUROC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    pub points: Vec<RocPoint>,
    pub auroc: f64,
}

struct RocCounts {
    /// cumulative (fp, tp) after each distinct score, descending
    steps: Vec<(u64, u64)>,
    pos: u64,
    neg: u64,
}

fn roc_counts(scores: &[f64], labels: &[bool]) -> Result<RocCounts, MetricError> {
    check_pair(scores, labels)?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite(i));
    }
    let pos = labels.iter().filter(|&&y| y).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut steps = Vec::with_capacity(scores.len() + 1);
    steps.push((0, 0));
    let (mut fp, mut tp) = (0u64, 0u64);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = order.get(k + 1).is_none_or(|&j| scores[j] != scores[i]);
        if last_of_group {
            steps.push((fp, tp));
        }
    }
    Ok(RocCounts { steps, pos, neg })
}

impl RocCounts {
    /// Trapezoidal area in integer arithmetic: twice the area times P·N equals
    /// 2·wins + ties, so this is the Mann–Whitney statistic exactly.
    fn auroc(&self) -> f64 {
        let twice: u128 = self
            .steps
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) as u128 * (w[1].1 + w[0].1) as u128)
            .sum();
        twice as f64 / (2 * self.pos as u128 * self.neg as u128) as f64
    }
}

/// ROC sweep over distinct scores (ties grouped) and AUROC, where ties
/// between a positive and a negative count one half.
pub fn roc_auroc(scores: &[f64], labels: &[bool]) -> Result<RocResult, MetricError> {
    let counts = roc_counts(scores, labels)?;
    let (p, n) = (counts.pos as f64, counts.neg as f64);
    let points = counts
        .steps
        .iter()
        .map(|&(fp, tp)| RocPoint {
            fpr: fp as f64 / n,
            tpr: tp as f64 / p,
        })
        .collect();
    Ok(RocResult {
        points,
        auroc: counts.auroc(),
    })
}

/// AUROC only, skipping curve materialisation.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    roc_counts(scores, labels).map(|c| c.auroc())
}

/// Trapezoidal area under an arbitrary polyline of ROC points.
pub fn trapezoid_area(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// TPR of the ROC polyline at `fpr`. On vertical segments the highest TPR
/// at that FPR is used.
pub fn interpolate_tpr(points: &[RocPoint], fpr: f64) -> f64 {
    let idx = points.partition_point(|p| p.fpr <= fpr);
    if idx == 0 {
        return points.first().map_or(0.0, |p| p.tpr);
    }
    let a = points[idx - 1];
    match points.get(idx) {
        None => a.tpr,
        Some(b) => a.tpr + (b.tpr - a.tpr) * (fpr - a.fpr) / (b.fpr - a.fpr),
    }
}

/// Statistics available to the bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Statistic {
    Auroc,
    MacroF1 { threshold: f64 },
    DepressedF1 { threshold: f64 },
}

impl Statistic {
    pub fn evaluate(&self, scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
        match *self {
            Statistic::Auroc => auroc(scores, labels),
            Statistic::MacroF1 { threshold } => {
                confusion_at_threshold(scores, labels, threshold).map(|c| class_metrics(&c).macro_f1)
            }
            Statistic::DepressedF1 { threshold } => {
                confusion_at_threshold(scores, labels, threshold).map(|c| class_metrics(&c).depressed.f1)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub point_estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub n_resamples: usize,
    pub seed: u64,
    pub n_degenerate_discarded: usize,
}

/// Draws `n_resamples` patient-level resamples (with replacement, original
/// size) and maps each through `f`.
///
/// Resample `i` uses its own random stream derived from `(seed, i)`, so the
/// output is identical for any thread pool. Single-class draws are discarded
/// and redrawn from the same stream; the run fails once total draws exceed
/// ten times `n_resamples`. Returns the mapped values in resample order and
/// the number of discarded draws.
pub fn bootstrap_map<T, F>(labels: &[bool], n_resamples: usize, seed: u64, f: F) -> Result<(Vec<T>, usize), MetricError>
where
    T: Send,
    F: Fn(&[usize]) -> T + Sync,
{
    if n_resamples == 0 {
        return Err(MetricError::NoResamples);
    }
    if labels.is_empty() {
        return Err(MetricError::Empty);
    }
    let pos = labels.iter().filter(|&&y| y).count();
    if pos == 0 || pos == labels.len() {
        return Err(MetricError::SingleClass);
    }
    let cap = n_resamples.saturating_mul(10);
    let n = labels.len();
    let drawn: Vec<Result<(T, usize), usize>> = (0..n_resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let mut idx = vec![0usize; n];
            let mut discarded = 0usize;
            loop {
                for slot in idx.iter_mut() {
                    *slot = rng.random_range(0..n);
                }
                let pos = idx.iter().filter(|&&j| labels[j]).count();
                if pos > 0 && pos < n {
                    return Ok((f(&idx), discarded));
                }
                discarded += 1;
                if discarded >= cap {
                    return Err(discarded);
                }
            }
        })
        .collect();
    let mut values = Vec::with_capacity(n_resamples);
    let mut discarded = 0usize;
    for r in drawn {
        match r {
            Ok((v, d)) => {
                values.push(v);
                discarded += d;
            }
            Err(d) => discarded += d,
        }
    }
    let attempts = values.len() + discarded;
    if values.len() < n_resamples || attempts > cap {
        return Err(MetricError::AttemptCapExceeded { attempts, discarded });
    }
    Ok((values, discarded))
}

/// Percentile bootstrap interval for `statistic`.
pub fn bootstrap_ci(
    statistic: Statistic,
    scores: &[f64],
    labels: &[bool],
    n_resamples: usize,
    seed: u64,
    level: f64,
) -> Result<BootstrapCI, MetricError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricError::InvalidLevel(level));
    }
    check_pair(scores, labels)?;
    let point_estimate = statistic.evaluate(scores, labels)?;
    let (values, discarded) = bootstrap_map(labels, n_resamples, seed, |idx| {
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let y: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        statistic.evaluate(&s, &y)
    })?;
    let mut values = values.into_iter().collect::<Result<Vec<f64>, _>>()?;
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(BootstrapCI {
        point_estimate,
        lower: quantile_sorted(&values, alpha),
        upper: quantile_sorted(&values, 1.0 - alpha),
        level,
        n_resamples,
        seed,
        n_degenerate_discarded: discarded,
    })
}

/// One report row with the per-class and global columns of the results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub configuration: String,
    pub metrics: ClassMetrics,
    pub auroc: f64,
    pub auroc_ci: BootstrapCI,
}

pub const METRIC_ROW_HEADER: [&str; 11] = [
    "configuration",
    "P_C",
    "P_D",
    "R_C",
    "R_D",
    "F1_C",
    "F1_D",
    "macro_F1",
    "AUROC",
    "AUROC_CI_low",
    "AUROC_CI_high",
];

pub fn write_metric_rows<W: Write>(sink: W, rows: &[MetricRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let io = |e: csv::Error| std::io::Error::other(e.to_string());
    w.write_record(METRIC_ROW_HEADER).map_err(io)?;
    for r in rows {
        let m = &r.metrics;
        let cells = [
            m.control.precision,
            m.depressed.precision,
            m.control.recall,
            m.depressed.recall,
            m.control.f1,
            m.depressed.f1,
            m.macro_f1,
            r.auroc,
            r.auroc_ci.lower,
            r.auroc_ci.upper,
        ];
        let mut rec = vec![r.configuration.clone()];
        rec.extend(cells.iter().map(|v| format!("{v:.6}")));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_hand_tally() {
        let c = confusion_at_threshold(&[0.9, 0.6, 0.4, 0.2], &[true, true, false, true], 0.5).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 2, fp: 0, tn: 1, fn_: 1 });
        assert_eq!(c.total(), 4);
    }

    #[test]
    fn confusion_saturated_and_boundary() {
        let c = confusion_at_threshold(&[1.0; 5], &[true; 5], 0.5).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 5, ..Default::default() });
        let c = confusion_at_threshold(&[0.5], &[false], 0.5).unwrap();
        assert_eq!(c.fp, 1);
    }

    #[test]
    fn confusion_errors() {
        assert_eq!(
            confusion_at_threshold(&[0.1], &[true, false], 0.5),
            Err(MetricError::LengthMismatch { scores: 1, labels: 2 })
        );
        assert_eq!(confusion_at_threshold(&[], &[], 0.5), Err(MetricError::Empty));
    }

    #[test]
    fn f1_from_reported_precision_recall() {
        // audio row: P = R per class
        assert!((f1_score(0.66, 0.66) - 0.66).abs() < 1e-12);
        assert!((f1_score(0.21, 0.21) - 0.21).abs() < 1e-12);
        assert!(((0.66 + 0.21) / 2.0 - 0.435f64).abs() < 1e-12);
        // text row, control class
        assert!((f1_score(0.76, 0.69) - 0.723).abs() < 5e-4);
    }

    #[test]
    fn zero_denominators_flagged() {
        let m = class_metrics(&ConfusionCounts { tp: 0, fp: 0, tn: 3, fn_: 2 });
        assert_eq!(m.depressed.precision, 0.0);
        assert_eq!(m.depressed.f1, 0.0);
        assert!(m.zero_division.contains(&ZeroDivision::DepressedPrecision));
        assert!(m.zero_division.contains(&ZeroDivision::DepressedF1));
        assert!(!m.zero_division.contains(&ZeroDivision::ControlPrecision));
        assert!((m.control.precision - 0.6).abs() < 1e-15);
        assert_eq!(m.control.recall, 1.0);
    }

    #[test]
    fn class_metrics_symmetric() {
        let m = class_metrics(&ConfusionCounts { tp: 4, fp: 1, tn: 10, fn_: 3 });
        assert!((m.depressed.precision - 0.8).abs() < 1e-15);
        assert!((m.depressed.recall - 4.0 / 7.0).abs() < 1e-15);
        assert!((m.control.precision - 10.0 / 13.0).abs() < 1e-15);
        assert!((m.control.recall - 10.0 / 11.0).abs() < 1e-15);
        assert_eq!(m.macro_f1, (m.control.f1 + m.depressed.f1) / 2.0);
    }

    #[test]
    fn auroc_examples() {
        let r = roc_auroc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap();
        assert_eq!(r.auroc, 1.0);
        let r = roc_auroc(&[0.5; 4], &[false, true, false, true]).unwrap();
        assert_eq!(r.auroc, 0.5);
        assert_eq!(r.points.len(), 2);
        let r = roc_auroc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert_eq!(r.auroc, 0.75);
        assert_eq!(r.points.first(), Some(&RocPoint { fpr: 0.0, tpr: 0.0 }));
        assert_eq!(r.points.last(), Some(&RocPoint { fpr: 1.0, tpr: 1.0 }));
        assert!((trapezoid_area(&r.points) - r.auroc).abs() < 1e-12);
    }

    #[test]
    fn auroc_errors() {
        assert_eq!(roc_auroc(&[0.1, 0.2], &[true, true]), Err(MetricError::SingleClass));
        assert_eq!(roc_auroc(&[0.1, f64::NAN], &[true, false]), Err(MetricError::NonFinite(1)));
    }

    #[test]
    fn tpr_interpolation() {
        let pts = [
            RocPoint { fpr: 0.0, tpr: 0.0 },
            RocPoint { fpr: 0.0, tpr: 0.5 },
            RocPoint { fpr: 0.5, tpr: 0.5 },
            RocPoint { fpr: 1.0, tpr: 1.0 },
        ];
        assert_eq!(interpolate_tpr(&pts, 0.0), 0.5);
        assert_eq!(interpolate_tpr(&pts, 0.25), 0.5);
        assert!((interpolate_tpr(&pts, 0.75) - 0.75).abs() < 1e-15);
        assert_eq!(interpolate_tpr(&pts, 1.0), 1.0);
    }

    #[test]
    fn bootstrap_constant_statistic() {
        let scores = [0.4; 10];
        let labels = [true, false, true, false, false, false, true, false, false, true];
        let ci = bootstrap_ci(Statistic::Auroc, &scores, &labels, 200, 11, 0.95).unwrap();
        assert_eq!((ci.lower, ci.upper, ci.point_estimate), (0.5, 0.5, 0.5));
    }

    #[test]
    fn bootstrap_preconditions() {
        let s = [0.1, 0.9];
        let y = [false, true];
        assert_eq!(bootstrap_ci(Statistic::Auroc, &s, &y, 0, 1, 0.95), Err(MetricError::NoResamples));
        assert_eq!(
            bootstrap_ci(Statistic::Auroc, &s, &[true, true], 10, 1, 0.95),
            Err(MetricError::SingleClass)
        );
        assert!(matches!(
            bootstrap_ci(Statistic::Auroc, &s, &y, 10, 1, 1.0),
            Err(MetricError::InvalidLevel(_))
        ));
    }

    #[test]
    fn bootstrap_discards_degenerate_draws() {
        // with n = 2, half of all draws are single-class
        let ci = bootstrap_ci(Statistic::Auroc, &[0.2, 0.8], &[false, true], 100, 5, 0.9).unwrap();
        assert!(ci.n_degenerate_discarded > 0);
        assert_eq!(ci.n_resamples, 100);
        assert_eq!((ci.lower, ci.upper), (1.0, 1.0));
    }

    #[test]
    fn bootstrap_attempt_cap() {
        // n = 2 makes half of all draws single-class; with one resample the
        // budget is ten draws, so roughly one seed in a thousand exhausts it
        let failing = (0..20_000u64).find_map(|seed| bootstrap_map(&[false, true], 1, seed, |_| ()).err());
        assert_eq!(
            failing,
            Some(MetricError::AttemptCapExceeded { attempts: 10, discarded: 10 })
        );
    }
}
