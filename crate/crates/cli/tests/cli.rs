use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn phqfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phqfuse"))
        .args(args)
        .env("NO_COLOR", "1")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Data {
    chunks: PathBuf,
    labels: PathBuf,
    splits: PathBuf,
}

impl Data {
    fn in_dir(dir: &Path) -> Self {
        Self {
            chunks: dir.join("chunk_scores.csv"),
            labels: dir.join("labels.csv"),
            splits: dir.join("splits.csv"),
        }
    }

    fn args<'a>(&'a self, cmd: &'a str) -> Vec<&'a str> {
        vec![
            cmd,
            "--chunks",
            s(&self.chunks),
            "--labels",
            s(&self.labels),
            "--splits",
            s(&self.splits),
        ]
    }
}

fn synth(dir: &Path, extra: &[&str]) -> Data {
    let mut args = vec!["synth", "--out", s(dir)];
    args.extend_from_slice(extra);
    let out = phqfuse(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    Data::in_dir(dir)
}

fn evaluate(data: &Data, out_dir: &Path, extra: &[&str]) -> Value {
    let mut args = data.args("evaluate");
    args.extend_from_slice(&["--out", s(out_dir)]);
    args.extend_from_slice(extra);
    let out = phqfuse(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&std::fs::read(out_dir.join("metrics.json")).unwrap()).unwrap()
}

#[test]
fn missing_labels_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--n", "40"]);
    std::fs::remove_file(&data.labels).unwrap();
    let out = phqfuse(&data.args("validate"));
    assert_eq!(out.status.code(), Some(2));
    let err = error_json(&out);
    assert_eq!(err["status"], "error");
    assert_eq!(err["exit_code"], 2);
    let first = err["errors"][0].as_str().unwrap();
    assert!(first.contains("labels: file not found"), "{first}");
}

#[test]
fn out_of_range_score_cites_its_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), &["--n", "40"]);
    let text = std::fs::read_to_string(&data.chunks).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    // data row 7 is line 8 of the file (after the header)
    let mut fields: Vec<&str> = lines[7].split(',').collect();
    fields[3] = "1.3";
    lines[7] = fields.join(",");
    std::fs::write(&data.chunks, lines.join("\n") + "\n").unwrap();
    let out = phqfuse(&data.args("validate"));
    assert_eq!(out.status.code(), Some(2));
    let err = error_json(&out);
    let msg = err["errors"][0].as_str().unwrap();
    assert!(msg.contains("row 7") && msg.contains("1.3"), "{msg}");
}

#[test]
fn zero_prevalence_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = phqfuse(&["synth", "--out", s(dir.path()), "--prevalence", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["kind"], "input");
}

#[test]
fn fit_split_without_depressed_patients_is_a_fitting_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = Data::in_dir(dir.path());
    let mut chunks = String::from("patient_id,modality,chunk_index,score,start_s,duration_s\n");
    let mut labels = String::from("patient_id,phq8\n");
    let mut splits = String::from("patient_id,split\n");
    for i in 0..12 {
        let fit = i < 6;
        let depressed = !fit && i % 2 == 0;
        let id = format!("p{i:02}");
        for m in ["audio", "text", "tabular"] {
            chunks.push_str(&format!("{id},{m},0,{},0,30\n", if depressed { 0.7 } else { 0.3 }));
        }
        labels.push_str(&format!("{id},{}\n", if depressed { 15 } else { 3 }));
        splits.push_str(&format!("{id},{}\n", if fit { "fit" } else { "test" }));
    }
    std::fs::write(&data.chunks, chunks).unwrap();
    std::fs::write(&data.labels, labels).unwrap();
    std::fs::write(&data.splits, splits).unwrap();
    let mut args = data.args("evaluate");
    let out_dir = dir.path().join("out");
    args.extend_from_slice(&["--out", s(&out_dir)]);
    let out = phqfuse(&args);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(error_json(&out)["kind"], "fit");
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(&dir.path().join("a"), &["--n", "60", "--seed", "3"]);
    let b = synth(&dir.path().join("b"), &["--n", "60", "--seed", "3"]);
    let c = synth(&dir.path().join("c"), &["--n", "60", "--seed", "4"]);
    for (x, y) in [(&a.chunks, &b.chunks), (&a.labels, &b.labels), (&a.splits, &b.splits)] {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    assert_ne!(std::fs::read(&a.chunks).unwrap(), std::fs::read(&c.chunks).unwrap());
}

#[test]
fn single_modality_gives_one_row_with_unit_weight() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(&dir.path().join("data"), &["--n", "80", "--modalities", "audio"]);
    let mut args = data.args("validate");
    args.extend_from_slice(&["--modalities", "audio"]);
    assert!(phqfuse(&args).status.success());
    let report = evaluate(&data, &dir.path().join("out"), &["--modalities", "audio", "--n-resamples", "50"]);
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["configuration"], "audio");
    assert_eq!(report["configurations"][0]["fusion"]["weights"], serde_json::json!([1.0]));
}

#[test]
fn complementary_cohort_ranks_full_configuration_first() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(&dir.path().join("data"), &["--n", "2000", "--seed", "2024"]);
    let report = evaluate(&data, &dir.path().join("out"), &["--n-resamples", "20"]);
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 7);
    let auroc_of = |name: &str| {
        rows.iter()
            .find(|r| r["configuration"] == name)
            .and_then(|r| r["auroc"].as_f64())
            .unwrap()
    };
    let full = auroc_of("audio+text+tabular");
    for r in rows.iter().filter(|r| r["configuration"] != "audio+text+tabular") {
        assert!(full > r["auroc"].as_f64().unwrap(), "{} vs full {full}", r["configuration"]);
    }
}

#[test]
fn every_subcommand_has_help() {
    for cmd in ["validate", "synth", "evaluate", "dca", "calibration"] {
        let out = phqfuse(&[cmd, "--help"]);
        assert!(out.status.success(), "{cmd}");
        assert!(stdout(&out).contains("Usage: phqfuse"), "{cmd}");
    }
    assert!(stdout(&phqfuse(&["--help"])).contains("Exit codes"));
}

#[test]
fn dca_and_calibration_read_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(&dir.path().join("data"), &["--n", "120"]);
    let out_dir = dir.path().join("out");
    evaluate(&data, &out_dir, &["--n-resamples", "20"]);
    let predictions = out_dir.join("predictions_audio+text+tabular.csv");

    let csv = dir.path().join("dca.csv");
    let svg = dir.path().join("dca.svg");
    let out = phqfuse(&[
        "dca",
        "--predictions",
        s(&predictions),
        "--t-min",
        "0.1",
        "--t-max",
        "0.5",
        "--t-step",
        "0.1",
        "--csv",
        s(&csv),
        "--svg",
        s(&svg),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("NB(t) = TP/N - (FP/N) * t/(1-t)"));
    let curve = std::fs::read_to_string(&csv).unwrap();
    assert!(curve.starts_with("threshold,nb_model,nb_treat_all,nb_treat_none\n"));
    assert_eq!(curve.lines().count(), 6);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let bins = dir.path().join("bins.csv");
    let out = phqfuse(&["calibration", "--predictions", s(&predictions), "--n-bins", "5", "--csv", s(&bins)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).starts_with("ECE "));
    assert_eq!(std::fs::read_to_string(&bins).unwrap().lines().count(), 6);

    let out = phqfuse(&["dca", "--predictions", s(&dir.path().join("missing.csv"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_values_apply_and_flags_override_them() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(&dir.path().join("data"), &["--n", "90"]);
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!(
            "chunks = {:?}\nlabels = {:?}\nsplits = {:?}\nseed = 11\nn_resamples = 30\nconfigurations = [\"text\", \"audio+text+tabular\"]\n",
            data.chunks, data.labels, data.splits
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = phqfuse(&["evaluate", "--config", s(&config), "--out", s(&out_dir), "--seed", "12"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&std::fs::read(out_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(report["provenance"]["seed"], 12);
    assert_eq!(report["provenance"]["n_resamples"], 30);
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);

    std::fs::write(&config, "n_resample = 30\n").unwrap();
    let out = phqfuse(&["evaluate", "--config", s(&config), "--out", s(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_json(&out)["errors"][0].as_str().unwrap().starts_with("config:"));
}

#[test]
fn output_has_no_escape_codes_under_no_color() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(&dir.path().join("data"), &["--n", "40"]);
    let out = phqfuse(&data.args("validate"));
    assert!(out.status.success());
    assert!(!stdout(&out).contains('\u{1b}'));
    assert!(stdout(&out).starts_with("dataset ok: 40 patients"));
}

#[test]
fn validate_json_summary() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(&dir.path().join("data"), &["--n", "50", "--prevalence", "0.3"]);
    let mut args = data.args("validate");
    args.push("--json");
    let out = phqfuse(&args);
    let doc: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["status"], "ok");
    assert_eq!(doc["summary"]["patients"], 50);
    assert_eq!(doc["summary"]["depressed"], 15);
}
