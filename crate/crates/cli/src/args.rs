use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use phqfuse_core::reliability::Binning;

use crate::config::{RunConfig, Selection};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "phqfuse",
    version,
    about = "Late fusion of per-modality depression scores with calibration, bootstrap intervals and decision curves",
    long_about = "Late fusion of per-modality depression scores.\n\n\
                  Typical run:\n  \
                  phqfuse synth --out data --n 189 --prevalence 0.30 --seed 7\n  \
                  phqfuse validate --chunks data/chunk_scores.csv --labels data/labels.csv --splits data/splits.csv\n  \
                  phqfuse evaluate --chunks data/chunk_scores.csv --labels data/labels.csv --splits data/splits.csv --out results\n\n\
                  Exit codes: 0 success, 2 input or validation error, 3 fitting error, 4 internal error.\n\
                  Errors are reported on stderr as one JSON object. NO_COLOR disables coloured output."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)] // parsed once per process
pub enum Command {
    /// Check the three input tables and print a dataset summary
    Validate(ValidateArgs),
    /// Write a deterministic synthetic cohort
    Synth(SynthArgs),
    /// Fit every configuration on the fit split and report test-split metrics
    Evaluate(EvaluateArgs),
    /// Decision curve from a predictions file written by `evaluate`
    Dca(DcaArgs),
    /// Reliability curve and ECE from a predictions file written by `evaluate`
    Calibration(CalibrationArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BinningArg {
    EqualWidth,
    Quantile,
}

impl From<BinningArg> for Binning {
    fn from(b: BinningArg) -> Self {
        match b {
            BinningArg::EqualWidth => Binning::EqualWidth,
            BinningArg::Quantile => Binning::Quantile,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Chunk score table (patient_id,modality,chunk_index,score[,start_s,duration_s])
    #[arg(long)]
    pub chunks: Option<PathBuf>,
    /// Label table (patient_id,phq8[,label])
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Split table (patient_id,split) with split in {fit,test}
    #[arg(long)]
    pub splits: Option<PathBuf>,
    /// Expected modalities, in reporting order
    #[arg(long, value_delimiter = ',')]
    pub modalities: Option<Vec<String>>,
    /// PHQ-8 totals above this value are labeled depressed
    #[arg(long)]
    pub phq8_threshold: Option<u8>,
    /// TOML or JSON run configuration; flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fail on labels or split rows for patients without chunk scores
    #[arg(long)]
    pub strict_orphans: bool,
}

impl InputArgs {
    pub fn base_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        set(&mut cfg.chunks, self.chunks.clone().map(Some));
        set(&mut cfg.labels, self.labels.clone().map(Some));
        set(&mut cfg.splits, self.splits.clone().map(Some));
        set(&mut cfg.modalities, self.modalities.clone());
        set(&mut cfg.phq8_threshold, self.phq8_threshold);
        cfg.strict_orphans |= self.strict_orphans;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Print the summary as JSON
    #[arg(long)]
    pub json: bool,
}

impl ValidateArgs {
    pub fn config(&self) -> Result<RunConfig, CliError> {
        let cfg = self.inputs.base_config()?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub inputs: InputArgs,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Calibrated probability at or above which a patient is predicted depressed
    #[arg(long)]
    pub classification_threshold: Option<f64>,
    /// Fusion weight grid spacing; must divide 1
    #[arg(long)]
    pub grid_step: Option<f64>,
    /// Ridge penalty on the calibrator slope
    #[arg(long)]
    pub ridge_lambda: Option<f64>,
    /// Probability clamp applied before the logit
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Bootstrap resamples for confidence intervals
    #[arg(long)]
    pub n_resamples: Option<usize>,
    /// Confidence level of bootstrap intervals
    #[arg(long)]
    pub level: Option<f64>,
    /// Reliability bins
    #[arg(long)]
    pub n_bins: Option<usize>,
    #[arg(long, value_enum)]
    pub binning: Option<BinningArg>,
    /// Dead band for calibration verdicts
    #[arg(long)]
    pub dead_band: Option<f64>,
    /// Decision curve threshold range and step
    #[arg(long)]
    pub t_min: Option<f64>,
    #[arg(long)]
    pub t_max: Option<f64>,
    #[arg(long)]
    pub t_step: Option<f64>,
    /// FPR grid points for the ROC confidence band
    #[arg(long)]
    pub roc_grid: Option<usize>,
    /// "all" or comma-separated configurations such as audio,audio+text
    #[arg(long, value_parser = Selection::parse)]
    pub configurations: Option<Selection>,
}

impl EvaluateArgs {
    pub fn config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = self.inputs.base_config()?;
        set(&mut cfg.out_dir, self.out.clone().map(Some));
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.classification_threshold, self.classification_threshold);
        set(&mut cfg.grid_step, self.grid_step);
        set(&mut cfg.ridge_lambda, self.ridge_lambda);
        set(&mut cfg.epsilon, self.epsilon);
        set(&mut cfg.n_resamples, self.n_resamples);
        set(&mut cfg.level, self.level);
        set(&mut cfg.n_bins, self.n_bins);
        set(&mut cfg.binning, self.binning.map(Binning::from));
        set(&mut cfg.dead_band, self.dead_band);
        set(&mut cfg.dca.t_min, self.t_min);
        set(&mut cfg.dca.t_max, self.t_max);
        set(&mut cfg.dca.step, self.t_step);
        set(&mut cfg.roc_grid, self.roc_grid);
        set(&mut cfg.configurations, self.configurations.clone());
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Output directory for chunk_scores.csv, labels.csv and splits.csv
    #[arg(long)]
    pub out: PathBuf,
    /// Number of patients
    #[arg(long, default_value_t = 189)]
    pub n: usize,
    /// Fraction of depressed patients; the positive count is round(n * prevalence)
    #[arg(long, default_value_t = 0.30)]
    pub prevalence: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "audio,text,tabular")]
    pub modalities: Vec<String>,
    /// Class separation on the logit scale; one value or one per modality
    #[arg(long, value_delimiter = ',', default_value = "0.4")]
    pub signal: Vec<f64>,
    /// Per-chunk noise scale; one value or one per modality
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub noise: Vec<f64>,
    /// Per-patient offset scale; one value or one per modality
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    pub patient_noise: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    pub chunks_min: u32,
    #[arg(long, default_value_t = 16)]
    pub chunks_max: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreColumn {
    Probability,
    Raw,
}

#[derive(Debug, Clone, Args)]
pub struct PredictionArgs {
    /// Predictions file (patient_id,label,raw,probability)
    #[arg(long)]
    pub predictions: PathBuf,
    /// Which score column to analyse
    #[arg(long, value_enum, default_value = "probability")]
    pub column: ScoreColumn,
}

#[derive(Debug, Clone, Args)]
pub struct DcaArgs {
    #[command(flatten)]
    pub input: PredictionArgs,
    #[arg(long, default_value_t = phqfuse_core::decision::DEFAULT_T_MIN)]
    pub t_min: f64,
    #[arg(long, default_value_t = phqfuse_core::decision::DEFAULT_T_MAX)]
    pub t_max: f64,
    #[arg(long, default_value_t = phqfuse_core::decision::DEFAULT_T_STEP)]
    pub t_step: f64,
    /// Write the curve as CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write the curve as SVG
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CalibrationArgs {
    #[command(flatten)]
    pub input: PredictionArgs,
    #[arg(long, default_value_t = phqfuse_core::reliability::DEFAULT_BINS)]
    pub n_bins: usize,
    #[arg(long, value_enum, default_value = "equal-width")]
    pub binning: BinningArg,
    #[arg(long, default_value_t = phqfuse_core::reliability::DEFAULT_DEAD_BAND)]
    pub dead_band: f64,
    /// Write the bins as CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Write the reliability diagram as SVG
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 5\nn_resamples = 50\n").unwrap();
        let cli = Cli::try_parse_from([
            "phqfuse",
            "evaluate",
            "--config",
            path.to_str().unwrap(),
            "--seed",
            "11",
            "--configurations",
            "audio,audio+text",
        ])
        .unwrap();
        let Command::Evaluate(args) = cli.command else { panic!() };
        let cfg = args.config().unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.n_resamples, 50);
        assert_eq!(cfg.configurations, Selection::List(vec!["audio".into(), "audio+text".into()]));
    }
}
