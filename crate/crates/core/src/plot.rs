//! Self-contained SVG figures: ROC with bootstrap band, reliability diagram
//! and decision curve.
//!
//! Output is plain text with fixed-precision coordinates, so identical inputs
//! give byte-identical files.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::decision::NetBenefitCurve;
use crate::metrics::{bootstrap_map, interpolate_tpr, roc_auroc, MetricError, RocPoint};
use crate::numeric::quantile_sorted;
use crate::reliability::CalibrationReport;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 180.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 52.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

pub const DEFAULT_ROC_GRID: usize = 101;

/// Pointwise bootstrap band of TPR over a fixed FPR grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocBand {
    pub fpr: Vec<f64>,
    pub mean_tpr: Vec<f64>,
    pub lower_tpr: Vec<f64>,
    pub upper_tpr: Vec<f64>,
    pub mean_auroc: f64,
    pub level: f64,
}

/// Vertically averages bootstrap ROC curves at `n_grid` evenly spaced FPR
/// values. Resamples follow the same streams as [`crate::bootstrap_ci`].
pub fn roc_band(
    scores: &[f64],
    labels: &[bool],
    n_resamples: usize,
    seed: u64,
    level: f64,
    n_grid: usize,
) -> Result<RocBand, MetricError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricError::InvalidLevel(level));
    }
    roc_auroc(scores, labels)?;
    let n_grid = n_grid.max(2);
    let fpr: Vec<f64> = (0..n_grid).map(|k| k as f64 / (n_grid - 1) as f64).collect();
    let (curves, _) = bootstrap_map(labels, n_resamples, seed, |idx| {
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let y: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        roc_auroc(&s, &y).map(|roc| {
            let tprs: Vec<f64> = fpr.iter().map(|&x| interpolate_tpr(&roc.points, x)).collect();
            (tprs, roc.auroc)
        })
    })?;
    let curves = curves.into_iter().collect::<Result<Vec<_>, _>>()?;
    let alpha = (1.0 - level) / 2.0;
    let n = curves.len() as f64;
    let mut mean_tpr = Vec::with_capacity(n_grid);
    let mut lower_tpr = Vec::with_capacity(n_grid);
    let mut upper_tpr = Vec::with_capacity(n_grid);
    let mut column = Vec::with_capacity(curves.len());
    for g in 0..n_grid {
        column.clear();
        column.extend(curves.iter().map(|(t, _)| t[g]));
        column.sort_by(f64::total_cmp);
        mean_tpr.push(column.iter().sum::<f64>() / n);
        lower_tpr.push(quantile_sorted(&column, alpha));
        upper_tpr.push(quantile_sorted(&column, 1.0 - alpha));
    }
    Ok(RocBand {
        fpr,
        mean_tpr,
        lower_tpr,
        upper_tpr,
        mean_auroc: curves.iter().map(|(_, a)| a).sum::<f64>() / n,
        level,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocSeries {
    pub label: String,
    pub auroc: f64,
    pub points: Vec<RocPoint>,
    pub band: Option<RocBand>,
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * w
    }

    fn py(&self, y: f64) -> f64 {
        let h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        let y = y.clamp(self.y_min, self.y_max);
        HEIGHT - MARGIN_BOTTOM - (y - self.y_min) / (self.y_max - self.y_min) * h
    }

    fn path(&self, pts: impl IntoIterator<Item = (f64, f64)>) -> String {
        let mut d = String::new();
        for (i, (x, y)) in pts.into_iter().enumerate() {
            let cmd = if i == 0 { 'M' } else { 'L' };
            let _ = write!(d, "{cmd}{:.2},{:.2} ", self.px(x), self.py(y));
        }
        d.trim_end().to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn open_svg(out: &mut String, title: &str, x_label: &str, y_label: &str, frame: &Frame, ticks: usize) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        (MARGIN_LEFT + WIDTH - MARGIN_RIGHT) / 2.0,
        escape(title)
    );
    let (x0, x1) = (frame.px(frame.x_min), frame.px(frame.x_max));
    let (y0, y1) = (frame.py(frame.y_min), frame.py(frame.y_max));
    let _ = writeln!(
        out,
        r##"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#333"/>"##,
        x1 - x0,
        y0 - y1
    );
    for k in 0..=ticks {
        let f = k as f64 / ticks as f64;
        let xv = frame.x_min + f * (frame.x_max - frame.x_min);
        let yv = frame.y_min + f * (frame.y_max - frame.y_min);
        let (xp, yp) = (frame.px(xv), frame.py(yv));
        let _ = writeln!(
            out,
            r##"<line x1="{xp:.2}" y1="{y0:.2}" x2="{xp:.2}" y2="{:.2}" stroke="#333"/><text x="{xp:.2}" y="{:.2}" text-anchor="middle">{xv:.2}</text>"##,
            y0 + 5.0,
            y0 + 18.0
        );
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{yp:.2}" x2="{x0:.2}" y2="{yp:.2}" stroke="#333"/><text x="{:.2}" y="{:.2}" text-anchor="end">{yv:.2}</text>"##,
            x0 - 5.0,
            x0 - 8.0,
            yp + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn legend_entry(out: &mut String, slot: usize, color: &str, dashed: bool, text: &str) {
    let x = WIDTH - MARGIN_RIGHT + 14.0;
    let y = MARGIN_TOP + 14.0 + slot as f64 * 20.0;
    let dash = if dashed { r#" stroke-dasharray="5,4""# } else { "" };
    let _ = writeln!(
        out,
        r#"<line x1="{x:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
        x + 22.0,
        x + 28.0,
        y + 4.0,
        escape(text)
    );
}

fn unit_frame() -> Frame {
    Frame {
        x_min: 0.0,
        x_max: 1.0,
        y_min: 0.0,
        y_max: 1.0,
    }
}

/// ROC curves with optional shaded bootstrap bands and the chance diagonal.
pub fn roc_svg(title: &str, series: &[RocSeries]) -> String {
    let frame = unit_frame();
    let mut out = String::new();
    open_svg(&mut out, title, "False positive rate", "True positive rate", &frame, 5);
    for (i, s) in series.iter().enumerate() {
        let Some(band) = &s.band else { continue };
        let color = PALETTE[i % PALETTE.len()];
        let upper = band.fpr.iter().copied().zip(band.upper_tpr.iter().copied());
        let lower = band.fpr.iter().copied().zip(band.lower_tpr.iter().copied()).rev();
        let d = frame.path(upper.chain(lower));
        let _ = writeln!(out, r#"<path d="{d} Z" fill="{color}" fill-opacity="0.15" stroke="none"/>"#);
    }
    let diag = frame.path([(0.0, 0.0), (1.0, 1.0)]);
    let _ = writeln!(out, r##"<path d="{diag}" fill="none" stroke="#999" stroke-dasharray="5,4"/>"##);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let d = frame.path(s.points.iter().map(|p| (p.fpr, p.tpr)));
        let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="2"/>"#);
        let text = match &s.band {
            Some(b) => format!(
                "{} (AUROC {:.2}, band {:.0}%)",
                s.label,
                s.auroc,
                b.level * 100.0
            ),
            None => format!("{} (AUROC {:.2})", s.label, s.auroc),
        };
        legend_entry(&mut out, i, color, false, &text);
    }
    legend_entry(&mut out, series.len(), "#999", true, "chance");
    out.push_str("</svg>\n");
    out
}

/// Observed frequency against mean predicted probability per non-empty bin,
/// with the perfect-calibration diagonal.
pub fn reliability_svg(title: &str, series: &[(&str, &CalibrationReport)]) -> String {
    let frame = unit_frame();
    let mut out = String::new();
    open_svg(&mut out, title, "Mean predicted probability", "Observed frequency", &frame, 5);
    let diag = frame.path([(0.0, 0.0), (1.0, 1.0)]);
    let _ = writeln!(out, r##"<path d="{diag}" fill="none" stroke="#999" stroke-dasharray="5,4"/>"##);
    for (i, (label, report)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = report
            .bins
            .iter()
            .filter_map(|b| Some((b.mean_predicted?, b.observed_frequency?)))
            .collect();
        let d = frame.path(pts.iter().copied());
        let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="2"/>"#);
        for (x, y) in &pts {
            let _ = writeln!(
                out,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                frame.px(*x),
                frame.py(*y)
            );
        }
        legend_entry(&mut out, i, color, false, &format!("{label} (ECE {:.3})", report.ece));
    }
    legend_entry(&mut out, series.len(), "#999", true, "perfect calibration");
    out.push_str("</svg>\n");
    out
}

/// Net benefit of the model against treat-all and treat-none.
pub fn dca_svg(title: &str, model_label: &str, curve: &NetBenefitCurve) -> String {
    let (Some(&x_min), Some(&x_max)) = (curve.thresholds.first(), curve.thresholds.last()) else {
        return String::new();
    };
    let top = curve
        .nb_model
        .iter()
        .chain(&curve.nb_treat_all)
        .fold(curve.prevalence, |m, &v| m.max(v));
    let frame = Frame {
        x_min,
        x_max: if x_max > x_min { x_max } else { x_min + 1e-3 },
        y_min: -0.05,
        y_max: (top * 1.1).max(0.05),
    };
    let mut out = String::new();
    open_svg(&mut out, title, "Threshold probability", "Net benefit", &frame, 5);
    let zip = |ys: &[f64]| -> Vec<(f64, f64)> { curve.thresholds.iter().copied().zip(ys.iter().copied()).collect() };
    let series = [
        (model_label, &curve.nb_model, PALETTE[0], false),
        ("Treat all", &curve.nb_treat_all, PALETTE[7], true),
        ("Treat none", &curve.nb_treat_none, "#000000", false),
    ];
    for (i, (label, ys, color, dashed)) in series.into_iter().enumerate() {
        let d = frame.path(zip(ys));
        let dash = if dashed { r#" stroke-dasharray="5,4""# } else { "" };
        let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="2"{dash}/>"#);
        legend_entry(&mut out, i, color, dashed, label);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::decision_curve;
    use crate::reliability::reliability_curve;

    fn toy() -> (Vec<f64>, Vec<bool>) {
        let scores = vec![0.1, 0.3, 0.35, 0.4, 0.6, 0.65, 0.8, 0.9, 0.2, 0.7];
        let labels = vec![false, false, true, false, true, false, true, true, false, true];
        (scores, labels)
    }

    #[test]
    fn band_is_ordered_and_deterministic() {
        let (s, y) = toy();
        let band = roc_band(&s, &y, 200, 3, 0.95, 21).unwrap();
        assert_eq!(band.fpr.len(), 21);
        for g in 0..21 {
            assert!(band.lower_tpr[g] <= band.upper_tpr[g]);
            assert!((0.0..=1.0).contains(&band.lower_tpr[g]));
            assert!((0.0..=1.0).contains(&band.mean_tpr[g]));
        }
        assert_eq!(band.upper_tpr[20], 1.0);
        assert_eq!(band, roc_band(&s, &y, 200, 3, 0.95, 21).unwrap());
    }

    #[test]
    fn svgs_are_well_formed() {
        let (s, y) = toy();
        let roc = roc_auroc(&s, &y).unwrap();
        let series = [RocSeries {
            label: "a<b".into(),
            auroc: roc.auroc,
            points: roc.points,
            band: Some(roc_band(&s, &y, 50, 1, 0.95, 11).unwrap()),
        }];
        let svg = roc_svg("ROC", &series);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a&lt;b"));
        assert!(svg.contains("fill-opacity"));

        let rel = reliability_curve(&s, &y, 5).unwrap();
        let svg = reliability_svg("Calibration", &[("full", &rel)]);
        assert!(svg.contains("<circle"));

        let curve = decision_curve(&s, &y, 0.05, 0.6, 0.05).unwrap();
        let svg = dca_svg("DCA", "model", &curve);
        assert_eq!(svg.matches("<path").count(), 3);
        assert!(svg.contains("Treat all") && svg.contains("Treat none"));
    }
}
