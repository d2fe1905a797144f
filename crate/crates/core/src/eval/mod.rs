//! Metrics, per-corpus breakdowns, noise-robustness sweeps, latency
//! statistics and report emission.

mod latency;
mod metrics;
mod report;
mod sweep;

use thiserror::Error;

pub use latency::{latency_benchmark, percentile, stats, LatencyReport, StageStats};
pub use metrics::{accuracy_of, evaluate, per_corpus_breakdown, slice_tag, Breakdown, ClassMetrics, EvalResult, RecordPredictor};
pub use report::{confusion_csv, emit_report, file_stem, fusion_deltas, latency_csv, metrics_csv, summary_md, ReportInput};
pub use sweep::{
    load_clips, noise_seed, noise_sweep, FeaturePredictor, LabelledClip, RobustnessCurve, RobustnessPoint, DEFAULT_SNR_GRID_DB,
};

use crate::features::FeatureError;
use crate::pipeline::PipelineError;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("slice {0:?} has no records")]
    EmptySlice(String),
    #[error("features for {id}: {source}")]
    Feature { id: String, source: FeatureError },
    #[error("prediction for {id} failed: {message}")]
    Predict { id: String, message: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io error: {0}")]
    Io(String),
}
