//! Patient-level late fusion of per-modality classifier scores, logistic
//! calibration, and a clinical evaluation battery (class metrics, AUROC with
//! bootstrap intervals, reliability curves, decision curves).
//!
//! The pipeline consumes chunk-level probabilities produced by upstream
//! per-modality models together with PHQ-8 totals and an explicit fit/test
//! split:
//!
//! 1. [`scorelog`] parses and cross-validates the three input tables.
//! 2. [`chunkops`] averages chunk scores into one score per patient and modality.
//! 3. [`fusion`] searches convex modality weights and fits a Platt-style calibrator
//!    on the fit split only.
//! 4. [`metrics`], [`reliability`] and [`decision`] evaluate the test split.
//!
//! [`synthgen`] produces deterministic synthetic cohorts in the same file formats.

pub mod chunkops;
pub mod decision;
pub mod fusion;
pub mod metrics;
pub mod plot;
pub mod reliability;
pub mod rng;
pub mod scorelog;
pub mod synthgen;

mod numeric;

pub use chunkops::{aggregate_dataset, aggregate_patient, plan_chunks, ChunkPlan, PatientScore};
pub use decision::{decision_curve, dominance_summary, net_benefit, DominanceSummary, NetBenefitCurve};
pub use fusion::{
    apply_calibrator, enumerate_configurations, fit_calibrator, fit_fusion, fit_fusion_weights,
    fuse_raw, CalibratorFitReport, Configuration, FusionOptions, FusionSpec, SplitScores,
};
pub use metrics::{
    bootstrap_ci, class_metrics, confusion_at_threshold, roc_auroc, BootstrapCI, ClassMetrics,
    ConfusionCounts, RocResult, Statistic,
};
pub use reliability::{interpret_calibration, reliability_curve, CalibrationReport, ReliabilityBin};
pub use scorelog::{
    binarize_phq8, parse_chunk_scores, parse_labels, parse_splits, validate_dataset, ChunkScore,
    LabelRecord, Modality, ModalitySet, Split, SplitAssignment, ValidatedDataset,
};
pub use synthgen::{complementary_scenario, generate_cohort, write_cohort, Cohort, SynthConfig};
