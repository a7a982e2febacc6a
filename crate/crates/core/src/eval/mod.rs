//! Rubric, annotation ingestion, aggregation, automatic scores and the
//! human-versus-model cost model.

pub mod aggregate;
pub mod annotations;
pub mod cost;
pub mod report;
pub mod rubric;
pub mod score;

use std::path::PathBuf;

use thiserror::Error;

pub use aggregate::{aggregate, aggregate_partial, agreement, round_half_up, AgreementReport, MetricAgreement, MetricRow, MetricTable};
pub use annotations::{ingest_annotations, ingest_reader, Annotation, Subject};
pub use cost::{cost_per_instance, cost_ratio, format_percent, CostModel, FixedRate, SalaryRow};
pub use rubric::{Level, Metric, SubjectKind};
pub use score::{auto_scores, auto_scores_opt, merge_annotations, Provenance, ScoreCell, Scorecard};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("row {row}: {metric} value {value:?} is outside its allowed range")]
    RangeViolation { row: usize, metric: Metric, value: String },
    #[error("row {row}: duplicate of row {first_row} ({task_id}, {annotator_id}, {subject}, {metric})")]
    DuplicateAnnotation {
        row: usize,
        first_row: usize,
        task_id: String,
        annotator_id: String,
        subject: String,
        metric: Metric,
    },
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("no annotations for {metric} in group {group:?}")]
    EmptyCell { metric: String, group: String },
    #[error("{0} must be positive")]
    NonPositiveInput(&'static str),
    #[error("division by zero")]
    DivisionByZero,
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

/// Shortest decimal form: `2` for 2.0, `0.5` for 0.5.
pub(crate) fn fmt_value(v: f64) -> String {
    format!("{v}")
}
