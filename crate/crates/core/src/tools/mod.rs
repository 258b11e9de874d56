//! Analysis tools: reach envelope, reward-scale forecasts, per-round
//! metrics, the paired statistics used to compare placements, and the
//! evaluation report.

pub mod envelope;
pub mod metrics;
pub mod report;
pub mod scaling;
pub mod stats;

pub use envelope::{check_targets, reach_envelope, whac_a_mole_targets, EnvelopeCloud, Reach, ReachEnvelope, TargetSite};
pub use metrics::{depths_from_dump, metrics_from_log, RoundMetrics};
pub use report::{report, ReportBundle, ReportFile};
pub use scaling::{reward_scale_report, ScaleReport, ScaleRow, ScalingScenario, ScenarioKind};
pub use stats::{ks_normality_test, wilcoxon_signed_rank, Alternative, KsResult, WilcoxonResult};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ToolsError {
    #[error("{0}")]
    Invalid(String),
    #[error("line {line}: {message}")]
    Log { line: usize, message: String },
    #[error("frame dump: {0}")]
    Dump(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String, ToolsError> {
    let bytes = w.into_inner().map_err(|e| ToolsError::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| ToolsError::Invalid(e.to_string()))
}
