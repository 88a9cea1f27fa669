//! Run configuration: defaults, optional TOML/JSON file, then flag overrides.

use std::path::{Path, PathBuf};

use phqfuse_core::decision::{DEFAULT_T_MAX, DEFAULT_T_MIN, DEFAULT_T_STEP};
use phqfuse_core::fusion::{DEFAULT_EPSILON, DEFAULT_GRID_STEP, DEFAULT_RIDGE_LAMBDA};
use phqfuse_core::metrics::{DEFAULT_CLASSIFICATION_THRESHOLD, DEFAULT_LEVEL, DEFAULT_RESAMPLES};
use phqfuse_core::plot::DEFAULT_ROC_GRID;
use phqfuse_core::reliability::{Binning, DEFAULT_BINS, DEFAULT_DEAD_BAND};
use phqfuse_core::scorelog::{DEFAULT_PHQ8_THRESHOLD, PHQ8_MAX};
use serde::{Deserialize, Serialize};

use crate::error::{io_error, CliError};

pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcaGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub step: f64,
}

impl Default for DcaGrid {
    fn default() -> Self {
        Self {
            t_min: DEFAULT_T_MIN,
            t_max: DEFAULT_T_MAX,
            step: DEFAULT_T_STEP,
        }
    }
}

/// `"all"` or an explicit list such as `["audio", "audio+text"]`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "SelectionRepr", into = "SelectionRepr")]
pub enum Selection {
    #[default]
    All,
    List(Vec<String>),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SelectionRepr {
    Keyword(String),
    List(Vec<String>),
}

impl TryFrom<SelectionRepr> for Selection {
    type Error = String;

    fn try_from(r: SelectionRepr) -> Result<Self, String> {
        match r {
            SelectionRepr::Keyword(k) => Selection::parse(&k),
            SelectionRepr::List(v) if v.is_empty() => Err("configurations list is empty".into()),
            SelectionRepr::List(v) => Ok(Selection::List(v)),
        }
    }
}

impl From<Selection> for SelectionRepr {
    fn from(s: Selection) -> Self {
        match s {
            Selection::All => SelectionRepr::Keyword("all".into()),
            Selection::List(v) => SelectionRepr::List(v),
        }
    }
}

impl Selection {
    /// `all`, or comma-separated configuration names.
    pub fn parse(text: &str) -> Result<Self, String> {
        let text = text.trim();
        if text.eq_ignore_ascii_case("all") {
            return Ok(Selection::All);
        }
        let items: Vec<String> = text
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if items.is_empty() {
            return Err(format!("invalid configuration selection {text:?}"));
        }
        Ok(Selection::List(items))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub chunks: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub splits: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub modalities: Vec<String>,
    pub phq8_threshold: u8,
    pub classification_threshold: f64,
    pub grid_step: f64,
    pub ridge_lambda: f64,
    pub epsilon: f64,
    pub n_resamples: usize,
    pub level: f64,
    pub seed: u64,
    pub n_bins: usize,
    pub binning: Binning,
    pub dead_band: f64,
    pub dca: DcaGrid,
    pub roc_grid: usize,
    pub configurations: Selection,
    /// Treat labels or splits without chunks as errors instead of warnings.
    pub strict_orphans: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            chunks: None,
            labels: None,
            splits: None,
            out_dir: None,
            modalities: vec!["audio".into(), "text".into(), "tabular".into()],
            phq8_threshold: DEFAULT_PHQ8_THRESHOLD,
            classification_threshold: DEFAULT_CLASSIFICATION_THRESHOLD,
            grid_step: DEFAULT_GRID_STEP,
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
            epsilon: DEFAULT_EPSILON,
            n_resamples: DEFAULT_RESAMPLES,
            level: DEFAULT_LEVEL,
            seed: DEFAULT_SEED,
            n_bins: DEFAULT_BINS,
            binning: Binning::EqualWidth,
            dead_band: DEFAULT_DEAD_BAND,
            dca: DcaGrid::default(),
            roc_grid: DEFAULT_ROC_GRID,
            configurations: Selection::All,
            strict_orphans: false,
        }
    }
}

impl RunConfig {
    /// Reads a TOML or JSON file, chosen by extension; unknown extensions
    /// try TOML first.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_error("config", &e))?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let parsed = match ext {
            "json" => serde_json::from_str(&text).map_err(|e| e.to_string()),
            "toml" => toml::from_str(&text).map_err(|e| e.to_string()),
            _ => toml::from_str(&text)
                .map_err(|e| e.to_string())
                .or_else(|_| serde_json::from_str(&text).map_err(|e| e.to_string())),
        };
        parsed.map_err(|e| CliError::input(format!("config: {}", e.trim())))
    }

    /// Every range violation, not just the first.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut errors = Vec::new();
        let mut check = |ok: bool, msg: String| {
            if !ok {
                errors.push(msg);
            }
        };
        check(
            self.phq8_threshold <= PHQ8_MAX,
            format!("phq8_threshold must be in 0..={PHQ8_MAX}, got {}", self.phq8_threshold),
        );
        check(
            (0.0..=1.0).contains(&self.classification_threshold),
            format!("classification_threshold must be in [0, 1], got {}", self.classification_threshold),
        );
        check(
            self.grid_step > 0.0 && self.grid_step <= 1.0,
            format!("grid_step must be in (0, 1], got {}", self.grid_step),
        );
        check(
            self.ridge_lambda.is_finite() && self.ridge_lambda >= 0.0,
            format!("ridge_lambda must be finite and >= 0, got {}", self.ridge_lambda),
        );
        check(
            self.epsilon > 0.0 && self.epsilon < 0.5,
            format!("epsilon must be in (0, 0.5), got {}", self.epsilon),
        );
        check(self.n_resamples >= 1, "n_resamples must be at least 1".into());
        check(
            self.level > 0.0 && self.level < 1.0,
            format!("level must be in (0, 1), got {}", self.level),
        );
        check(self.n_bins >= 2, format!("n_bins must be at least 2, got {}", self.n_bins));
        check(
            (0.0..0.5).contains(&self.dead_band),
            format!("dead_band must be in [0, 0.5), got {}", self.dead_band),
        );
        let DcaGrid { t_min, t_max, step } = self.dca;
        check(
            t_min > 0.0 && t_min < t_max && t_max < 1.0 && step > 0.0,
            format!("dca grid needs 0 < t_min < t_max < 1 and step > 0, got [{t_min}, {t_max}] step {step}"),
        );
        check(self.roc_grid >= 2, format!("roc_grid must be at least 2, got {}", self.roc_grid));
        check(!self.modalities.is_empty(), "at least one modality is required".into());
        if errors.is_empty() {
            Ok(())
        } else {
            Err(CliError::Input(errors))
        }
    }

    /// Copy with file-system locations removed, for content hashing.
    pub fn without_paths(&self) -> Self {
        Self {
            chunks: None,
            labels: None,
            splits: None,
            out_dir: None,
            ..self.clone()
        }
    }
}
