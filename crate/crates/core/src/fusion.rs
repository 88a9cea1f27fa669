//! Late fusion: convex modality weights chosen by exhaustive simplex grid
//! search, followed by a Platt-style logistic calibrator
//! `σ(a·logit(p) + b)` fitted by damped Newton.
//!
//! Fitting only accepts a [`SplitScores`] table for the fit split; test-split
//! labels never reach this module.

use std::collections::HashMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunkops::PatientScore;
use crate::metrics::{auroc, MetricError};
use crate::numeric::{logit, sigmoid, softplus};
use crate::scorelog::{Modality, ModalitySet, Split, ValidatedDataset};

pub const DEFAULT_GRID_STEP: f64 = 0.05;
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-6;
pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const MAX_NEWTON_ITERATIONS: usize = 100;
pub const GRADIENT_TOLERANCE: f64 = 1e-8;
const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("at least one modality is required")]
    EmptyModalities,
    #[error("patient {patient_id} has no score for modality {modality}")]
    MissingScore { patient_id: String, modality: String },
    #[error("missing score for weighted modality {0}")]
    MissingModality(String),
    #[error("modality {0} is not present in the dataset")]
    UnknownModality(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("degenerate labels: both classes are required")]
    DegenerateLabels,
    #[error("numerical failure at iteration {iteration}")]
    NumericalFailure { iteration: usize },
    #[error("at least 2 samples are required, got {0}")]
    TooFewSamples(usize),
    #[error("grid step {0} must lie in (0, 1] and divide 1 exactly")]
    InvalidGridStep(f64),
    #[error("empty weight grid")]
    EmptyGrid,
    #[error("epsilon must lie in (0, 0.5), got {0}")]
    InvalidEpsilon(f64),
    #[error("ridge lambda must be finite and non-negative, got {0}")]
    InvalidRidge(f64),
    #[error("raw score {0} outside [0, 1]")]
    ScoreOutOfRange(f64),
    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("fusion can only be fitted on the fit split, got {0}")]
    WrongSplit(Split),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// An ordered, non-empty subset of modalities evaluated together.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration(Vec<Modality>);

impl Configuration {
    pub fn new(modalities: Vec<Modality>) -> Result<Self, FusionError> {
        if modalities.is_empty() {
            return Err(FusionError::EmptyModalities);
        }
        Ok(Self(modalities))
    }

    pub fn modalities(&self) -> &[Modality] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Modality names joined with `+`, e.g. `audio+text`.
    pub fn name(&self) -> String {
        self.0
            .iter()
            .map(Modality::as_str)
            .collect::<Vec<_>>()
            .join("+")
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Index combinations of size `k` from `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// All non-empty subsets: singletons first, then pairs, up to the full set,
/// each size in lexicographic order of the input positions.
pub fn enumerate_configurations(modalities: &[Modality]) -> Result<Vec<Configuration>, FusionError> {
    let n = modalities.len();
    if n == 0 {
        return Err(FusionError::EmptyModalities);
    }
    Ok((1..=n)
        .flat_map(|k| combinations(n, k))
        .map(|c| Configuration(c.into_iter().map(|i| modalities[i].clone()).collect()))
        .collect())
}

fn check_weights(weights: &[f64]) -> Result<(), FusionError> {
    if weights.is_empty() {
        return Err(FusionError::EmptyModalities);
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(FusionError::InvalidWeights(format!("weight {w} is negative or non-finite")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(FusionError::InvalidWeights(format!("weights sum to {sum}, expected 1")));
    }
    Ok(())
}

/// Weighted average `Σ w_m · p_m`. A missing score is an error unless its
/// modality carries zero weight.
pub fn fuse_raw<F>(modalities: &[Modality], weights: &[f64], score_of: F) -> Result<f64, FusionError>
where
    F: Fn(&Modality) -> Option<f64>,
{
    if modalities.len() != weights.len() {
        return Err(FusionError::InvalidWeights(format!(
            "{} weights for {} modalities",
            weights.len(),
            modalities.len()
        )));
    }
    check_weights(weights)?;
    let mut fused = 0.0;
    for (m, &w) in modalities.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let p = score_of(m).ok_or_else(|| FusionError::MissingModality(m.to_string()))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(FusionError::ScoreOutOfRange(p));
        }
        fused += w * p;
    }
    Ok(fused.clamp(0.0, 1.0))
}

fn fuse_row(weights: &[f64], row: impl Iterator<Item = f64>) -> f64 {
    weights
        .iter()
        .zip(row)
        .map(|(w, p)| w * p)
        .sum::<f64>()
        .clamp(0.0, 1.0)
}

fn check_epsilon(epsilon: f64) -> Result<(), FusionError> {
    if epsilon > 0.0 && epsilon < 0.5 {
        Ok(())
    } else {
        Err(FusionError::InvalidEpsilon(epsilon))
    }
}

/// `σ(a·logit(clamp(raw, ε, 1−ε)) + b)`.
pub fn apply_calibrator(a: f64, b: f64, raw: f64, epsilon: f64) -> f64 {
    let p = raw.clamp(epsilon, 1.0 - epsilon);
    sigmoid(a * logit(p) + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibrator {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratorFitReport {
    pub a: f64,
    pub b: f64,
    pub n_iterations: usize,
    /// Unpenalised Bernoulli log-likelihood at (a, b).
    pub final_log_likelihood: f64,
    pub gradient_max_norm: f64,
    pub converged: bool,
    pub ridge_lambda: f64,
}

/// Bernoulli log-likelihood of `σ(a·x + b)` for logits `x`.
pub fn calibrator_log_likelihood(logits: &[f64], labels: &[bool], a: f64, b: f64) -> f64 {
    logits
        .iter()
        .zip(labels)
        .map(|(&x, &y)| {
            let z = a * x + b;
            if y {
                -softplus(-z)
            } else {
                -softplus(z)
            }
        })
        .sum()
}

struct NewtonState {
    objective: f64,
    grad: [f64; 2],
    /// (aa, ab, bb) entries of the negative Hessian
    hess: [f64; 3],
}

fn newton_state(x: &[f64], y: &[bool], a: f64, b: f64, lambda: f64) -> NewtonState {
    let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&xi, &yi) in x.iter().zip(y) {
        let mu = sigmoid(a * xi + b);
        let r = f64::from(u8::from(yi)) - mu;
        let w = mu * (1.0 - mu);
        ga += r * xi;
        gb += r;
        haa += w * xi * xi;
        hab += w * xi;
        hbb += w;
    }
    NewtonState {
        objective: calibrator_log_likelihood(x, y, a, b) - lambda * a * a / 2.0,
        grad: [ga - lambda * a, gb],
        hess: [haa + lambda, hab, hbb],
    }
}

/// Solves the 2×2 Newton system, adding Levenberg damping when the
/// curvature matrix is (near-)singular.
fn newton_direction(s: &NewtonState) -> [f64; 2] {
    let [haa, hab, hbb] = s.hess;
    let scale = (haa + hbb).max(f64::MIN_POSITIVE);
    let mut damping = 0.0;
    loop {
        let (p, q) = (haa + damping, hbb + damping);
        let det = p * q - hab * hab;
        if det > 1e-14 * scale * scale && det.is_finite() {
            return [(q * s.grad[0] - hab * s.grad[1]) / det, (p * s.grad[1] - hab * s.grad[0]) / det];
        }
        damping = if damping == 0.0 { 1e-10 * scale + 1e-12 } else { damping * 10.0 };
        if !damping.is_finite() {
            return s.grad;
        }
    }
}

/// Fits `(a, b)` by maximising the log-likelihood of `σ(a·logit(p̃) + b)`
/// minus `λ·a²/2`, with `p̃ = clamp(p, ε, 1−ε)`. Stops when the gradient
/// max-norm drops below [`GRADIENT_TOLERANCE`] or after
/// [`MAX_NEWTON_ITERATIONS`] steps.
pub fn fit_calibrator(raw: &[f64], labels: &[bool], ridge_lambda: f64, epsilon: f64) -> Result<CalibratorFitReport, FusionError> {
    if raw.len() != labels.len() {
        return Err(FusionError::LengthMismatch(raw.len(), labels.len()));
    }
    if raw.len() < 2 {
        return Err(FusionError::TooFewSamples(raw.len()));
    }
    if !(ridge_lambda.is_finite() && ridge_lambda >= 0.0) {
        return Err(FusionError::InvalidRidge(ridge_lambda));
    }
    check_epsilon(epsilon)?;
    let pos = labels.iter().filter(|&&y| y).count();
    if pos == 0 || pos == labels.len() {
        return Err(FusionError::DegenerateLabels);
    }
    if let Some(&p) = raw.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(FusionError::ScoreOutOfRange(p));
    }
    let x: Vec<f64> = raw
        .iter()
        .map(|&p| logit(p.clamp(epsilon, 1.0 - epsilon)))
        .collect();

    let (mut a, mut b) = (1.0f64, 0.0f64);
    let mut state = newton_state(&x, labels, a, b, ridge_lambda);
    let mut iterations = 0;
    let grad_norm = |s: &NewtonState| s.grad[0].abs().max(s.grad[1].abs());
    while iterations < MAX_NEWTON_ITERATIONS && grad_norm(&state) >= GRADIENT_TOLERANCE {
        iterations += 1;
        let dir = newton_direction(&state);
        let slack = 1e-12 * (1.0 + state.objective.abs());
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let (na, nb) = (a + step * dir[0], b + step * dir[1]);
            let next = newton_state(&x, labels, na, nb, ridge_lambda);
            if !(next.objective.is_finite() && na.is_finite() && nb.is_finite()) {
                step /= 2.0;
                continue;
            }
            if next.objective >= state.objective - slack {
                accepted = Some((na, nb, next));
                break;
            }
            step /= 2.0;
        }
        match accepted {
            Some((na, nb, next)) => {
                a = na;
                b = nb;
                state = next;
            }
            None if !state.objective.is_finite() => {
                return Err(FusionError::NumericalFailure { iteration: iterations })
            }
            None => break,
        }
        if !(state.grad[0].is_finite() && state.grad[1].is_finite()) {
            return Err(FusionError::NumericalFailure { iteration: iterations });
        }
    }
    let gradient_max_norm = grad_norm(&state);
    Ok(CalibratorFitReport {
        a,
        b,
        n_iterations: iterations,
        final_log_likelihood: calibrator_log_likelihood(&x, labels, a, b),
        gradient_max_norm,
        converged: gradient_max_norm < GRADIENT_TOLERANCE,
        ridge_lambda,
    })
}

/// Result of the weight grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSearch {
    pub weights: Vec<f64>,
    pub auroc: f64,
    pub n_candidates: usize,
}

fn grid_units(step: f64) -> Result<usize, FusionError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(FusionError::InvalidGridStep(step));
    }
    let units = (1.0 / step).round();
    if (units * step - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(FusionError::InvalidGridStep(step));
    }
    Ok(units as usize)
}

/// Compositions of `total` into `parts` non-negative integers, ordered
/// lexicographically from largest to smallest (first part descending).
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    (0..=total)
        .rev()
        .flat_map(|first| {
            compositions(total - first, parts - 1).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

/// Shannon entropy of integer weights, summed in sorted order so equal
/// multisets give bitwise-equal values.
fn weight_entropy(units: &[usize], total: usize) -> f64 {
    let mut parts: Vec<usize> = units.iter().copied().filter(|&u| u > 0).collect();
    parts.sort_unstable();
    parts
        .iter()
        .map(|&u| {
            let p = u as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}

/// Exhaustive search over simplex grid points (multiples of `grid_step`)
/// for the weights that maximise AUROC of the fused raw score. Ties go to the
/// higher-entropy vector, then to the lexicographically largest one over the
/// modality order.
///
/// `columns[m][i]` is modality `m`'s score for patient `i`.
pub fn fit_fusion_weights(columns: &[Vec<f64>], labels: &[bool], grid_step: f64) -> Result<WeightSearch, FusionError> {
    if columns.is_empty() {
        return Err(FusionError::EmptyModalities);
    }
    if let Some(c) = columns.iter().find(|c| c.len() != labels.len()) {
        return Err(FusionError::LengthMismatch(c.len(), labels.len()));
    }
    let pos = labels.iter().filter(|&&y| y).count();
    if pos == 0 || pos == labels.len() {
        return Err(FusionError::DegenerateLabels);
    }
    let total = grid_units(grid_step)?;
    let grid = compositions(total, columns.len());
    if grid.is_empty() {
        return Err(FusionError::EmptyGrid);
    }
    let n = labels.len();
    let scored: Vec<Result<(f64, f64), MetricError>> = grid
        .par_iter()
        .map(|units| {
            let weights: Vec<f64> = units.iter().map(|&u| u as f64 / total as f64).collect();
            let fused: Vec<f64> = (0..n)
                .map(|i| fuse_row(&weights, columns.iter().map(|c| c[i])))
                .collect();
            auroc(&fused, labels).map(|a| (a, weight_entropy(units, total)))
        })
        .collect();

    let mut best: Option<(usize, f64, f64)> = None;
    for (i, r) in scored.into_iter().enumerate() {
        let (auc, entropy) = r?;
        let better = match best {
            None => true,
            Some((_, b_auc, b_ent)) => auc > b_auc || (auc == b_auc && entropy > b_ent),
        };
        if better {
            best = Some((i, auc, entropy));
        }
    }
    let (i, auc, _) = best.ok_or(FusionError::EmptyGrid)?;
    Ok(WeightSearch {
        weights: grid[i].iter().map(|&u| u as f64 / total as f64).collect(),
        auroc: auc,
        n_candidates: grid.len(),
    })
}

/// Patient-level scores of one split, laid out as a patients × modalities
/// table with the matching labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitScores {
    split: Split,
    patient_ids: Vec<String>,
    modalities: ModalitySet,
    scores: Vec<Vec<Option<f64>>>,
    labels: Vec<bool>,
}

impl SplitScores {
    /// Collects the patients assigned to `split`, in canonical patient order.
    pub fn from_dataset(dataset: &ValidatedDataset, patient_scores: &[PatientScore], split: Split) -> Self {
        let modalities = dataset.modalities().clone();
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut patient_ids = Vec::new();
        let mut labels = Vec::new();
        for label in dataset.labels() {
            if dataset.split_of(label.patient_id()) == Some(split) {
                index.insert(label.patient_id(), patient_ids.len());
                patient_ids.push(label.patient_id().to_string());
                labels.push(label.depressed());
            }
        }
        let mut scores = vec![vec![None; modalities.len()]; patient_ids.len()];
        for ps in patient_scores {
            if let (Some(&row), Some(col)) = (index.get(ps.patient_id.as_str()), modalities.position(&ps.modality)) {
                scores[row][col] = Some(ps.score);
            }
        }
        Self {
            split,
            patient_ids,
            modalities,
            scores,
            labels,
        }
    }

    /// Builds a table directly. `scores[i][m]` is patient `i`'s score for modality `m`.
    pub fn from_parts(
        split: Split,
        patient_ids: Vec<String>,
        modalities: ModalitySet,
        scores: Vec<Vec<Option<f64>>>,
        labels: Vec<bool>,
    ) -> Result<Self, FusionError> {
        if patient_ids.len() != labels.len() || scores.len() != labels.len() {
            return Err(FusionError::LengthMismatch(scores.len(), labels.len()));
        }
        if scores.iter().any(|r| r.len() != modalities.len()) {
            return Err(FusionError::InvalidWeights("score row width differs from modality count".into()));
        }
        Ok(Self {
            split,
            patient_ids,
            modalities,
            scores,
            labels,
        })
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn patient_ids(&self) -> &[String] {
        &self.patient_ids
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-modality score columns for `modalities`, failing on any gap.
    pub fn columns(&self, modalities: &[Modality]) -> Result<Vec<Vec<f64>>, FusionError> {
        modalities
            .iter()
            .map(|m| {
                let col = self
                    .modalities
                    .position(m)
                    .ok_or_else(|| FusionError::UnknownModality(m.to_string()))?;
                self.scores
                    .iter()
                    .zip(&self.patient_ids)
                    .map(|(row, pid)| {
                        row[col].ok_or_else(|| FusionError::MissingScore {
                            patient_id: pid.clone(),
                            modality: m.to_string(),
                        })
                    })
                    .collect()
            })
            .collect()
    }

    /// Raw fused and calibrated probabilities for every patient.
    pub fn predict(&self, spec: &FusionSpec) -> Result<Vec<Prediction>, FusionError> {
        let columns = self.columns(&spec.modalities)?;
        Ok((0..self.len())
            .map(|i| {
                let raw = fuse_row(&spec.weights, columns.iter().map(|c| c[i]));
                Prediction {
                    raw,
                    calibrated: spec.calibrate(raw),
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub raw: f64,
    pub calibrated: f64,
}

/// Persisted fusion model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionSpec {
    pub modalities: Vec<Modality>,
    pub weights: Vec<f64>,
    pub calibrator: Calibrator,
    pub epsilon: f64,
    pub grid_step: f64,
    pub ridge_lambda: f64,
}

impl FusionSpec {
    pub fn validate(&self) -> Result<(), FusionError> {
        if self.modalities.len() != self.weights.len() {
            return Err(FusionError::InvalidWeights(format!(
                "{} weights for {} modalities",
                self.weights.len(),
                self.modalities.len()
            )));
        }
        check_weights(&self.weights)?;
        check_epsilon(self.epsilon)?;
        if !(self.calibrator.a.is_finite() && self.calibrator.b.is_finite()) {
            return Err(FusionError::NumericalFailure { iteration: 0 });
        }
        Ok(())
    }

    pub fn raw<F>(&self, score_of: F) -> Result<f64, FusionError>
    where
        F: Fn(&Modality) -> Option<f64>,
    {
        fuse_raw(&self.modalities, &self.weights, score_of)
    }

    pub fn calibrate(&self, raw: f64) -> f64 {
        apply_calibrator(self.calibrator.a, self.calibrator.b, raw, self.epsilon)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("FusionSpec serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        let spec: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionOptions {
    pub grid_step: f64,
    pub ridge_lambda: f64,
    pub epsilon: f64,
}

impl Default for FusionOptions {
    fn default() -> Self {
        Self {
            grid_step: DEFAULT_GRID_STEP,
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

/// Fitted model plus the diagnostics of both fitting stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedFusion {
    pub spec: FusionSpec,
    pub weight_search: WeightSearch,
    pub calibrator_fit: CalibratorFitReport,
}

/// Weight search then calibrator fit, both on the fit split.
pub fn fit_fusion(fit: &SplitScores, configuration: &Configuration, options: FusionOptions) -> Result<FittedFusion, FusionError> {
    if fit.split != Split::Fit {
        return Err(FusionError::WrongSplit(fit.split));
    }
    check_epsilon(options.epsilon)?;
    let columns = fit.columns(configuration.modalities())?;
    let search = fit_fusion_weights(&columns, &fit.labels, options.grid_step)?;
    let raw: Vec<f64> = (0..fit.len())
        .map(|i| fuse_row(&search.weights, columns.iter().map(|c| c[i])))
        .collect();
    let cal = fit_calibrator(&raw, &fit.labels, options.ridge_lambda, options.epsilon)?;
    Ok(FittedFusion {
        spec: FusionSpec {
            modalities: configuration.modalities().to_vec(),
            weights: search.weights.clone(),
            calibrator: Calibrator { a: cal.a, b: cal.b },
            epsilon: options.epsilon,
            grid_step: options.grid_step,
            ridge_lambda: options.ridge_lambda,
        },
        weight_search: search,
        calibrator_fit: cal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(name: &str) -> Modality {
        Modality::new(name).unwrap()
    }

    #[test]
    fn configurations_in_reporting_order() {
        let mods = [m("audio"), m("text"), m("tabular")];
        let names: Vec<String> = enumerate_configurations(&mods)
            .unwrap()
            .iter()
            .map(Configuration::name)
            .collect();
        assert_eq!(
            names,
            [
                "audio",
                "text",
                "tabular",
                "audio+text",
                "audio+tabular",
                "text+tabular",
                "audio+text+tabular"
            ]
        );
        assert_eq!(enumerate_configurations(&[m("audio")]).unwrap().len(), 1);
        let two: Vec<String> = enumerate_configurations(&[m("a"), m("b")])
            .unwrap()
            .iter()
            .map(Configuration::name)
            .collect();
        assert_eq!(two, ["a", "b", "a+b"]);
        assert_eq!(enumerate_configurations(&[]), Err(FusionError::EmptyModalities));
    }

    #[test]
    fn configuration_count_is_two_pow_n_minus_one() {
        for n in 1..=6 {
            let mods: Vec<Modality> = (0..n).map(|i| m(&format!("m{i}"))).collect();
            assert_eq!(enumerate_configurations(&mods).unwrap().len(), (1 << n) - 1);
        }
    }

    #[test]
    fn fuse_raw_examples() {
        let ab = [m("a"), m("b")];
        let scores = |vals: [f64; 2]| move |x: &Modality| Some(if x.as_str() == "a" { vals[0] } else { vals[1] });
        assert_eq!(fuse_raw(&ab, &[1.0, 0.0], scores([0.73, 0.1])).unwrap(), 0.73);
        assert_eq!(fuse_raw(&ab, &[0.5, 0.5], scores([0.2, 0.8])).unwrap(), 0.5);
        let abc = [m("a"), m("b"), m("c")];
        let vals = [0.9, 0.6, 0.1];
        let got = fuse_raw(&abc, &[0.5, 0.3, 0.2], |x| abc.iter().position(|y| y == x).map(|i| vals[i])).unwrap();
        assert!((got - 0.65).abs() < 1e-15);
    }

    #[test]
    fn fuse_raw_missing_and_invalid() {
        let ab = [m("a"), m("b")];
        let only_a = |x: &Modality| (x.as_str() == "a").then_some(0.4);
        assert_eq!(fuse_raw(&ab, &[0.5, 0.5], only_a), Err(FusionError::MissingModality("b".into())));
        assert_eq!(fuse_raw(&ab, &[1.0, 0.0], only_a).unwrap(), 0.4);
        assert!(matches!(fuse_raw(&ab, &[0.7, 0.7], only_a), Err(FusionError::InvalidWeights(_))));
        assert!(matches!(fuse_raw(&ab, &[1.5, -0.5], only_a), Err(FusionError::InvalidWeights(_))));
    }

    #[test]
    fn calibrator_application() {
        assert!((apply_calibrator(1.0, 0.0, 0.3, 1e-6) - 0.3).abs() < 1e-12);
        let eps = 1e-6;
        assert!((apply_calibrator(1.0, 0.0, 0.0, eps) - eps).abs() < 1e-18);
        assert!((apply_calibrator(1.0, 0.0, 1.0, eps) - (1.0 - eps)).abs() < 1e-15);
        let p = sigmoid(1.0); // 0.7310585786...
        assert!((apply_calibrator(2.0, 0.0, p, eps) - 0.880_797_077_977_882_3).abs() < 1e-12);
    }

    #[test]
    fn calibrator_degenerate_labels() {
        assert_eq!(
            fit_calibrator(&[0.2, 0.4, 0.6], &[false; 3], 0.0, 1e-6),
            Err(FusionError::DegenerateLabels)
        );
        assert_eq!(fit_calibrator(&[0.2], &[true], 0.0, 1e-6), Err(FusionError::TooFewSamples(1)));
        assert!(matches!(
            fit_calibrator(&[0.2, 0.3], &[true, false], 0.0, 0.5),
            Err(FusionError::InvalidEpsilon(_))
        ));
    }

    #[test]
    fn calibrator_converges_on_separable_data() {
        let raw = [0.1, 0.2, 0.3, 0.45, 0.55, 0.7, 0.8, 0.9];
        let labels = [false, false, false, false, true, true, true, true];
        let fit = fit_calibrator(&raw, &labels, DEFAULT_RIDGE_LAMBDA, DEFAULT_EPSILON).unwrap();
        assert!(fit.converged, "{fit:?}");
        assert!(fit.a > 10.0);
    }

    #[test]
    fn calibrator_handles_constant_input() {
        let raw = [0.4; 6];
        let labels = [true, false, false, true, false, false];
        let fit = fit_calibrator(&raw, &labels, DEFAULT_RIDGE_LAMBDA, DEFAULT_EPSILON).unwrap();
        assert!(fit.converged, "{fit:?}");
        let p = apply_calibrator(fit.a, fit.b, 0.4, DEFAULT_EPSILON);
        assert!((p - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(compositions(10, 3).len(), 66);
        assert_eq!(compositions(20, 3).len(), 231);
        assert_eq!(compositions(20, 1), vec![vec![20]]);
        assert_eq!(compositions(2, 2), vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert!(grid_units(0.3).is_err());
        assert!(grid_units(0.0).is_err());
        assert_eq!(grid_units(0.05).unwrap(), 20);
        assert_eq!(grid_units(1.0).unwrap(), 1);
    }

    #[test]
    fn weight_search_basics() {
        let labels = [false, true, false, true];
        let single = fit_fusion_weights(&[vec![0.1, 0.9, 0.2, 0.3]], &labels, 0.05).unwrap();
        assert_eq!(single.weights, vec![1.0]);
        assert_eq!(single.n_candidates, 1);
        let three = fit_fusion_weights(
            &[vec![0.1, 0.9, 0.2, 0.3], vec![0.5, 0.4, 0.3, 0.2], vec![0.5; 4]],
            &labels,
            0.1,
        )
        .unwrap();
        assert_eq!(three.n_candidates, 66);
        assert!((three.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(
            fit_fusion_weights(&[vec![0.1, 0.2]], &[true, true], 0.1),
            Err(FusionError::DegenerateLabels)
        );
    }

    #[test]
    fn weight_search_ties_prefer_entropy() {
        // identical columns: every grid point gives the same ranking
        let col = vec![0.1, 0.8, 0.3, 0.6];
        let labels = [false, true, false, true];
        let r = fit_fusion_weights(&[col.clone(), col], &labels, 0.1).unwrap();
        assert_eq!(r.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn weight_search_ties_then_lexicographic() {
        // three identical columns at step 0.5: best entropy is achieved by
        // (0.5, 0.5, 0), (0.5, 0, 0.5), (0, 0.5, 0.5); the first wins
        let col = vec![0.1, 0.8, 0.3, 0.6];
        let labels = [false, true, false, true];
        let r = fit_fusion_weights(&[col.clone(), col.clone(), col], &labels, 0.5).unwrap();
        assert_eq!(r.weights, vec![0.5, 0.5, 0.0]);
    }

    #[test]
    fn fit_fusion_rejects_test_split() {
        let mods = ModalitySet::from_names(&["audio"]).unwrap();
        let t = SplitScores::from_parts(
            Split::Test,
            vec!["p1".into(), "p2".into()],
            mods.clone(),
            vec![vec![Some(0.2)], vec![Some(0.7)]],
            vec![false, true],
        )
        .unwrap();
        let cfg = Configuration::new(vec![m("audio")]).unwrap();
        assert_eq!(
            fit_fusion(&t, &cfg, FusionOptions::default()).unwrap_err(),
            FusionError::WrongSplit(Split::Test)
        );
    }

    #[test]
    fn fit_fusion_single_modality_and_roundtrip() {
        let mods = ModalitySet::from_names(&["audio", "text"]).unwrap();
        let raw = [0.1, 0.35, 0.3, 0.6, 0.55, 0.9, 0.2, 0.7];
        let labels = vec![false, false, true, true, false, true, false, true];
        let fit = SplitScores::from_parts(
            Split::Fit,
            (0..8).map(|i| format!("p{i}")).collect(),
            mods,
            raw.iter().map(|&p| vec![Some(p), None]).collect(),
            labels.clone(),
        )
        .unwrap();
        let cfg = Configuration::new(vec![m("audio")]).unwrap();
        let fitted = fit_fusion(&fit, &cfg, FusionOptions::default()).unwrap();
        assert_eq!(fitted.spec.weights, vec![1.0]);
        let direct = fit_calibrator(&raw, &labels, DEFAULT_RIDGE_LAMBDA, DEFAULT_EPSILON).unwrap();
        assert_eq!(fitted.calibrator_fit, direct);

        let reloaded = FusionSpec::from_json(&fitted.spec.to_json()).unwrap();
        assert_eq!(reloaded, fitted.spec);
        let a = fit.predict(&fitted.spec).unwrap();
        let b = fit.predict(&reloaded).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.calibrated - y.calibrated).abs() <= 1e-12);
        }

        let both = Configuration::new(vec![m("audio"), m("text")]).unwrap();
        assert!(matches!(
            fit_fusion(&fit, &both, FusionOptions::default()),
            Err(FusionError::MissingScore { .. })
        ));
    }

    #[test]
    fn spec_json_layout() {
        let spec = FusionSpec {
            modalities: vec![m("audio"), m("text")],
            weights: vec![0.25, 0.75],
            calibrator: Calibrator { a: 1.5, b: -0.4 },
            epsilon: 1e-6,
            grid_step: 0.05,
            ridge_lambda: 1e-6,
        };
        let v: serde_json::Value = serde_json::from_str(&spec.to_json()).unwrap();
        assert_eq!(v["modalities"][1], "text");
        assert_eq!(v["calibrator"]["a"], 1.5);
        assert_eq!(v["grid_step"], 0.05);
        let mut bad = spec.clone();
        bad.weights = vec![0.5, 0.6];
        assert!(FusionSpec::from_json(&bad.to_json()).is_err());
    }
}
