//! The `evaluate` pipeline: fit on the fit split, score the test split, and
//! write tables, JSON and figures.

use std::path::{Path, PathBuf};

use phqfuse_core::chunkops::aggregate_dataset;
use phqfuse_core::decision::{decision_curve, dominance_summary, write_curve, DominanceSummary, NetBenefitCurve, NET_BENEFIT_FORMULA};
use phqfuse_core::fusion::{
    enumerate_configurations, fit_fusion, CalibratorFitReport, Configuration, FusionOptions, FusionSpec, SplitScores,
    WeightSearch,
};
use phqfuse_core::metrics::{
    bootstrap_ci, class_metrics, confusion_at_threshold, roc_auroc, write_metric_rows, ConfusionCounts, MetricRow,
    RocResult, Statistic,
};
use phqfuse_core::plot::{dca_svg, reliability_svg, roc_band, roc_svg, RocSeries};
use phqfuse_core::reliability::{
    interpret_calibration, reliability_curve_with, write_bins, CalibrationReport, CalibrationSummary, ECE_FORMULA,
};
use phqfuse_core::scorelog::{DatasetSummary, Modality, Split};
use serde::Serialize;

use crate::config::{DcaGrid, RunConfig, Selection};
use crate::error::{write_error, CliError};
use crate::inputs::{load_dataset, sha256_hex, write_predictions, InputHashes, IssuePolicy, PredictionRecord};

pub const METRICS_CSV: &str = "metrics.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const ROC_SVG: &str = "roc.svg";
pub const RELIABILITY_SVG: &str = "reliability.svg";
pub const DCA_SVG: &str = "dca.svg";
pub const DCA_CSV: &str = "dca.csv";
pub const CALIBRATION_CSV: &str = "calibration_bins.csv";
pub const RUN_CONFIG_JSON: &str = "run_config.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub phq8_threshold: u8,
    pub classification_threshold: f64,
    pub grid_step: f64,
    pub ridge_lambda: f64,
    pub epsilon: f64,
    pub n_resamples: usize,
    pub level: f64,
    pub n_bins: usize,
    pub binning: phqfuse_core::reliability::Binning,
    pub dead_band: f64,
    pub dca_grid: DcaGrid,
    pub roc_grid: usize,
    pub net_benefit_formula: &'static str,
    pub ece_formula: &'static str,
    pub input_sha256: InputHashes,
    /// SHA-256 of the effective configuration with file paths removed.
    pub config_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigurationReport {
    pub configuration: String,
    pub fusion: FusionSpec,
    pub weight_search: WeightSearch,
    pub calibrator_fit: CalibratorFitReport,
    pub confusion: ConfusionCounts,
    pub calibration: CalibrationReport,
    pub calibration_summary: CalibrationSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionSection {
    pub configuration: String,
    pub curve: NetBenefitCurve,
    pub dominance: DominanceSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub provenance: Provenance,
    pub dataset: DatasetSummary,
    pub warnings: Vec<String>,
    pub rows: Vec<MetricRow>,
    pub configurations: Vec<ConfigurationReport>,
    pub decision_curve: DecisionSection,
}

/// Everything `evaluate` produces, before it is written.
pub struct Evaluation {
    pub report: EvaluationReport,
    pub predictions: Vec<(String, Vec<PredictionRecord>)>,
    pub roc_series: Vec<RocSeries>,
}

fn resolve_configurations(selection: &Selection, present: &[Modality]) -> Result<Vec<Configuration>, CliError> {
    let all = enumerate_configurations(present).map_err(|e| CliError::input(e.to_string()))?;
    let names = match selection {
        Selection::All => return Ok(all),
        Selection::List(names) => names,
    };
    let mut out: Vec<Configuration> = Vec::new();
    let mut errors = Vec::new();
    for name in names {
        let mods: Result<Vec<Modality>, _> = name.split('+').map(|m| Modality::new(m.trim())).collect();
        let found = mods
            .ok()
            .and_then(|mods| all.iter().find(|c| {
                c.len() == mods.len() && mods.iter().all(|m| c.modalities().contains(m))
            }));
        match found {
            Some(c) if out.contains(c) => errors.push(format!("configurations: {name:?} requested twice")),
            Some(c) => out.push(c.clone()),
            None => errors.push(format!("configurations: {name:?} does not match the dataset modalities")),
        }
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(CliError::Input(errors))
    }
}

fn fit_err(configuration: &Configuration, e: impl std::fmt::Display) -> CliError {
    CliError::Fit(format!("{}: {e}", configuration.name()))
}

pub fn config_hash(cfg: &RunConfig) -> String {
    let canonical = serde_json::to_vec(&cfg.without_paths()).expect("config serialises");
    sha256_hex(&canonical)
}

pub fn run_evaluation(cfg: &RunConfig) -> Result<Evaluation, CliError> {
    let loaded = load_dataset(cfg, IssuePolicy::FitClassIsFitting)?;
    let dataset = &loaded.dataset;
    let patient_scores = aggregate_dataset(dataset);
    let fit = SplitScores::from_dataset(dataset, &patient_scores, Split::Fit);
    let test = SplitScores::from_dataset(dataset, &patient_scores, Split::Test);
    let test_labels = test.labels();
    let positives = test_labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == test_labels.len() {
        let missing = if positives == 0 { "positive" } else { "negative" };
        return Err(CliError::input(format!("dataset: test split lacks {missing} class")));
    }

    let configurations = resolve_configurations(&cfg.configurations, dataset.modalities().as_slice())?;
    let options = FusionOptions {
        grid_step: cfg.grid_step,
        ridge_lambda: cfg.ridge_lambda,
        epsilon: cfg.epsilon,
    };

    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut predictions = Vec::new();
    let mut roc_series = Vec::new();
    let mut probabilities = Vec::new();
    for configuration in &configurations {
        let fitted = fit_fusion(&fit, configuration, options).map_err(|e| fit_err(configuration, e))?;
        let preds = test.predict(&fitted.spec).map_err(|e| fit_err(configuration, e))?;
        let probs: Vec<f64> = preds.iter().map(|p| p.calibrated).collect();

        let confusion = confusion_at_threshold(&probs, test_labels, cfg.classification_threshold)
            .map_err(|e| fit_err(configuration, e))?;
        let roc: RocResult = roc_auroc(&probs, test_labels).map_err(|e| fit_err(configuration, e))?;
        let auroc_ci = bootstrap_ci(Statistic::Auroc, &probs, test_labels, cfg.n_resamples, cfg.seed, cfg.level)
            .map_err(|e| fit_err(configuration, e))?;
        let calibration = reliability_curve_with(&probs, test_labels, cfg.n_bins, cfg.binning)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        let name = configuration.name();

        rows.push(MetricRow {
            configuration: name.clone(),
            metrics: class_metrics(&confusion),
            auroc: roc.auroc,
            auroc_ci,
        });
        reports.push(ConfigurationReport {
            configuration: name.clone(),
            calibration_summary: interpret_calibration(&calibration, cfg.dead_band),
            calibration,
            fusion: fitted.spec,
            weight_search: fitted.weight_search,
            calibrator_fit: fitted.calibrator_fit,
            confusion,
        });
        predictions.push((
            name.clone(),
            test.patient_ids()
                .iter()
                .zip(test_labels)
                .zip(&preds)
                .map(|((pid, &y), p)| PredictionRecord {
                    patient_id: pid.clone(),
                    label: u8::from(y),
                    raw: p.raw,
                    probability: p.calibrated,
                })
                .collect(),
        ));
        roc_series.push(RocSeries {
            label: name,
            auroc: roc.auroc,
            points: roc.points,
            band: None,
        });
        probabilities.push(probs);
    }

    // The figures and decision curve follow the largest configuration.
    let primary = (0..configurations.len())
        .max_by_key(|&i| (configurations[i].len(), std::cmp::Reverse(i)))
        .expect("at least one configuration");
    let primary_probs = &probabilities[primary];
    roc_series[primary].band = Some(
        roc_band(primary_probs, test_labels, cfg.n_resamples, cfg.seed, cfg.level, cfg.roc_grid)
            .map_err(|e| fit_err(&configurations[primary], e))?,
    );
    let curve = decision_curve(primary_probs, test_labels, cfg.dca.t_min, cfg.dca.t_max, cfg.dca.step)
        .map_err(|e| CliError::input(format!("dca: {e}")))?;

    let report = EvaluationReport {
        provenance: Provenance {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            phq8_threshold: cfg.phq8_threshold,
            classification_threshold: cfg.classification_threshold,
            grid_step: cfg.grid_step,
            ridge_lambda: cfg.ridge_lambda,
            epsilon: cfg.epsilon,
            n_resamples: cfg.n_resamples,
            level: cfg.level,
            n_bins: cfg.n_bins,
            binning: cfg.binning,
            dead_band: cfg.dead_band,
            dca_grid: cfg.dca,
            roc_grid: cfg.roc_grid,
            net_benefit_formula: NET_BENEFIT_FORMULA,
            ece_formula: ECE_FORMULA,
            input_sha256: loaded.hashes.clone(),
            config_sha256: config_hash(cfg),
        },
        dataset: dataset.summary(),
        warnings: loaded.warnings.iter().map(ToString::to_string).collect(),
        rows,
        decision_curve: DecisionSection {
            configuration: configurations[primary].name(),
            dominance: dominance_summary(&curve),
            curve,
        },
        configurations: reports,
    };
    Ok(Evaluation {
        report,
        predictions,
        roc_series,
    })
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| write_error(path, e))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(buf)
}

/// Writes every artefact into `out` and returns the paths in write order.
pub fn write_outputs(evaluation: &Evaluation, cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out).map_err(|e| write_error(out, e))?;
    let report = &evaluation.report;
    let mut written = Vec::new();
    let mut emit = |name: String, bytes: Vec<u8>| -> Result<(), CliError> {
        let path = out.join(name);
        write_file(&path, &bytes)?;
        written.push(path);
        Ok(())
    };

    emit(METRICS_CSV.into(), csv_bytes(|b| write_metric_rows(b, &report.rows))?)?;
    let mut json = serde_json::to_string_pretty(report).map_err(|e| CliError::Internal(e.to_string()))?;
    json.push('\n');
    emit(METRICS_JSON.into(), json.into_bytes())?;
    let mut run_config = serde_json::to_string_pretty(cfg).map_err(|e| CliError::Internal(e.to_string()))?;
    run_config.push('\n');
    emit(RUN_CONFIG_JSON.into(), run_config.into_bytes())?;

    for c in &report.configurations {
        let mut spec = c.fusion.to_json();
        spec.push('\n');
        emit(format!("fusion_{}.json", c.configuration), spec.into_bytes())?;
    }
    for (name, rows) in &evaluation.predictions {
        let path = out.join(format!("predictions_{name}.csv"));
        write_predictions(&path, rows)?;
        written.push(path);
    }

    let decision = &report.decision_curve;
    let primary = report
        .configurations
        .iter()
        .find(|c| c.configuration == decision.configuration)
        .expect("primary configuration present");
    let mut emit = |name: &str, bytes: Vec<u8>| -> Result<(), CliError> {
        let path = out.join(name);
        write_file(&path, &bytes)?;
        written.push(path);
        Ok(())
    };
    emit(DCA_CSV, csv_bytes(|b| write_curve(b, &decision.curve))?)?;
    emit(CALIBRATION_CSV, csv_bytes(|b| write_bins(b, &primary.calibration))?)?;
    emit(
        ROC_SVG,
        roc_svg("ROC on the test split", &evaluation.roc_series).into_bytes(),
    )?;
    emit(
        RELIABILITY_SVG,
        reliability_svg(
            "Reliability on the test split",
            &[(primary.configuration.as_str(), &primary.calibration)],
        )
        .into_bytes(),
    )?;
    emit(
        DCA_SVG,
        dca_svg("Decision curve on the test split", &decision.configuration, &decision.curve).into_bytes(),
    )?;
    Ok(written)
}
