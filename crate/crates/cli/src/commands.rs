use std::fmt::Write as _;
use std::path::Path;

use phqfuse_core::decision::{decision_curve, dominance_summary, write_curve, DominanceSummary, NET_BENEFIT_FORMULA};
use phqfuse_core::plot::{dca_svg, reliability_svg};
use phqfuse_core::reliability::{interpret_calibration, reliability_curve_with, write_bins};
use phqfuse_core::scorelog::DatasetSummary;
use phqfuse_core::synthgen::{generate_cohort, write_cohort, ChunkRange, ModalitySignal, SynthConfig};
use serde::Serialize;

use crate::args::{CalibrationArgs, DcaArgs, EvaluateArgs, PredictionArgs, ScoreColumn, SynthArgs, ValidateArgs};
use crate::error::{write_error, CliError};
use crate::evaluate::{run_evaluation, write_outputs};
use crate::inputs::{load_dataset, read_predictions, sha256_hex, IssuePolicy};
use crate::term::Style;

fn summary_text(summary: &DatasetSummary, style: &Style) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} {} patients ({} depressed, {} controls), prevalence {:.2}",
        style.ok("dataset ok:"),
        summary.patients,
        summary.depressed,
        summary.controls,
        summary.prevalence
    );
    let _ = writeln!(s, "splits: fit {}, test {}", summary.fit_patients, summary.test_patients);
    for m in &summary.modalities {
        let _ = writeln!(s, "modality {}: {} patients, {} chunks", m.modality, m.patients, m.chunks);
    }
    s
}

#[derive(Serialize)]
struct ValidateJson<'a> {
    status: &'static str,
    summary: &'a DatasetSummary,
    warnings: Vec<String>,
}

pub fn validate(args: &ValidateArgs, style: &Style) -> Result<(), CliError> {
    let cfg = args.config()?;
    let loaded = load_dataset(&cfg, IssuePolicy::AllInput)?;
    let summary = loaded.dataset.summary();
    let warnings: Vec<String> = loaded.warnings.iter().map(ToString::to_string).collect();
    if args.json {
        let doc = ValidateJson {
            status: "ok",
            summary: &summary,
            warnings,
        };
        println!("{}", serde_json::to_string_pretty(&doc).map_err(|e| CliError::Internal(e.to_string()))?);
    } else {
        print!("{}", summary_text(&summary, style));
        for w in warnings {
            println!("{} {w}", style.warn("warning:"));
        }
    }
    Ok(())
}

/// Expands a one-value list to `n` entries, or checks it already has `n`.
fn per_modality(name: &str, values: &[f64], n: usize) -> Result<Vec<f64>, String> {
    match values.len() {
        1 => Ok(vec![values[0]; n]),
        k if k == n => Ok(values.to_vec()),
        k => Err(format!("--{name}: expected 1 or {n} values, got {k}")),
    }
}

pub fn synth_config(args: &SynthArgs) -> Result<SynthConfig, CliError> {
    let n = args.modalities.len();
    let mut errors = Vec::new();
    let mut pick = |name: &str, values: &[f64]| {
        per_modality(name, values, n).unwrap_or_else(|e| {
            errors.push(e);
            vec![0.0; n]
        })
    };
    let signal = pick("signal", &args.signal);
    let noise = pick("noise", &args.noise);
    let patient_noise = pick("patient-noise", &args.patient_noise);
    let mut modalities = Vec::new();
    for (i, name) in args.modalities.iter().enumerate() {
        match ModalitySignal::new(name, signal[i], noise[i], patient_noise[i]) {
            Ok(m) => modalities.push(m),
            Err(e) => errors.push(e.to_string()),
        }
    }
    if !errors.is_empty() {
        return Err(CliError::Input(errors));
    }
    let config = SynthConfig {
        n_patients: args.n,
        prevalence: args.prevalence,
        modalities,
        chunks_per_patient: ChunkRange {
            min: args.chunks_min,
            max: args.chunks_max,
        },
        seed: args.seed,
    };
    config.validate().map_err(|e| CliError::input(format!("synth: {e}")))?;
    Ok(config)
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct SynthManifest<'a> {
    config: &'a SynthConfig,
    patients: usize,
    depressed: usize,
    chunks: usize,
    files: Vec<ManifestEntry>,
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let config = synth_config(args)?;
    let cohort = generate_cohort(&config).map_err(|e| CliError::input(format!("synth: {e}")))?;
    let files = write_cohort(&cohort, &args.out).map_err(|e| write_error(&args.out, e))?;
    let mut entries = Vec::new();
    for path in [&files.chunk_scores, &files.labels, &files.splits] {
        let bytes = std::fs::read(path).map_err(|e| write_error(path, e))?;
        entries.push(ManifestEntry {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = SynthManifest {
        config: &config,
        patients: cohort.labels.len(),
        depressed: cohort.labels.iter().filter(|l| l.depressed()).count(),
        chunks: cohort.chunks.len(),
        files: entries,
    };
    println!("{}", serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Internal(e.to_string()))?);
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs, style: &Style) -> Result<(), CliError> {
    let cfg = args.config()?;
    let out = cfg
        .out_dir
        .clone()
        .ok_or_else(|| CliError::input("out: no output directory given (use --out or out_dir in the config file)"))?;
    let evaluation = run_evaluation(&cfg)?;
    let written = write_outputs(&evaluation, &cfg, &out)?;
    let report = &evaluation.report;

    print!("{}", summary_text(&report.dataset, style));
    for w in &report.warnings {
        println!("{} {w}", style.warn("warning:"));
    }
    println!(
        "{}",
        style.bold(&format!(
            "{:<22} {:>5} {:>5} {:>5} {:>5} {:>5} {:>5} {:>6} {:>6}  {:.0}% CI",
            "configuration", "P_C", "P_D", "R_C", "R_D", "F1_C", "F1_D", "macro", "AUROC", report.provenance.level * 100.0
        ))
    );
    for r in &report.rows {
        let m = &r.metrics;
        println!(
            "{:<22} {:>5.2} {:>5.2} {:>5.2} {:>5.2} {:>5.2} {:>5.2} {:>6.2} {:>6.2}  [{:.2}, {:.2}]",
            r.configuration,
            m.control.precision,
            m.depressed.precision,
            m.control.recall,
            m.depressed.recall,
            m.control.f1,
            m.depressed.f1,
            m.macro_f1,
            r.auroc,
            r.auroc_ci.lower,
            r.auroc_ci.upper
        );
    }
    let d = &report.decision_curve;
    println!("{}", NET_BENEFIT_FORMULA);
    println!("{}: {}", d.configuration, dominance_text(&d.dominance));
    println!("wrote {} files to {}", written.len(), out.display());
    Ok(())
}

fn dominance_text(d: &DominanceSummary) -> String {
    if d.dominant.is_empty() {
        return "no threshold where the model matches or beats both reference strategies".into();
    }
    let ranges: Vec<String> = d
        .dominant
        .iter()
        .map(|r| {
            format!(
                "[{:.2}, {:.2}]{}",
                r.start,
                r.end,
                if r.strict { "" } else { " (not strict)" }
            )
        })
        .collect();
    format!("net benefit >= max(treat all, treat none) on {}", ranges.join(", "))
}

fn load_scores(input: &PredictionArgs) -> Result<(Vec<f64>, Vec<bool>), CliError> {
    let rows = read_predictions(&input.predictions)?;
    let scores = rows
        .iter()
        .map(|r| match input.column {
            ScoreColumn::Probability => r.probability,
            ScoreColumn::Raw => r.raw,
        })
        .collect();
    Ok((scores, rows.iter().map(|r| r.label == 1).collect()))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| write_error(path, e))
}

fn write_csv(path: &Path, f: impl FnOnce(std::fs::File) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = std::fs::File::create(path).map_err(|e| write_error(path, e))?;
    f(file).map_err(|e| write_error(path, e))
}

pub fn dca(args: &DcaArgs) -> Result<(), CliError> {
    let (scores, labels) = load_scores(&args.input)?;
    let curve = decision_curve(&scores, &labels, args.t_min, args.t_max, args.t_step)
        .map_err(|e| CliError::input(format!("dca: {e}")))?;
    println!("{NET_BENEFIT_FORMULA}");
    println!("prevalence {:.4}, {} thresholds", curve.prevalence, curve.thresholds.len());
    println!("{:>9} {:>10} {:>12} {:>13}", "threshold", "nb_model", "nb_treat_all", "nb_treat_none");
    for i in 0..curve.thresholds.len() {
        println!(
            "{:>9.4} {:>10.6} {:>12.6} {:>13.6}",
            curve.thresholds[i], curve.nb_model[i], curve.nb_treat_all[i], curve.nb_treat_none[i]
        );
    }
    println!("{}", dominance_text(&dominance_summary(&curve)));
    if let Some(path) = &args.csv {
        write_csv(path, |f| write_curve(f, &curve))?;
    }
    if let Some(path) = &args.svg {
        write_text(path, &dca_svg("Decision curve", "model", &curve))?;
    }
    Ok(())
}

pub fn calibration(args: &CalibrationArgs) -> Result<(), CliError> {
    let (scores, labels) = load_scores(&args.input)?;
    if !(0.0..0.5).contains(&args.dead_band) {
        return Err(CliError::input(format!("--dead-band must be in [0, 0.5), got {}", args.dead_band)));
    }
    let report = reliability_curve_with(&scores, &labels, args.n_bins, args.binning.into())
        .map_err(|e| CliError::input(format!("calibration: {e}")))?;
    let summary = interpret_calibration(&report, args.dead_band);
    print!("{}", summary.text);
    if let Some(path) = &args.csv {
        write_csv(path, |f| write_bins(f, &report))?;
    }
    if let Some(path) = &args.svg {
        write_text(path, &reliability_svg("Reliability", &[("model", &report)]))?;
    }
    Ok(())
}
