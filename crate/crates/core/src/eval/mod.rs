//! Metrics, cross-validation over the five pipeline variants, and sweeps.

use std::io;

use thiserror::Error;

use crate::classify::ClassifyError;
use crate::corpus::CorpusError;
use crate::lsa::LsaError;
use crate::quant::QuantError;
use crate::vsm::VsmError;

mod metrics;
mod pipeline;
mod sweep;

pub use metrics::{
    compute_metrics, error_reduction, mean_std, ClassMetrics, ConfusionMatrix, MetricRecord,
};
pub use pipeline::{
    fit_fold, run_cv, run_fold, ExperimentReport, FittedFold, FoldReport, PipelineConfig,
    ReportMetadata, Representation, Summary, Variant,
};
pub use sweep::{
    config_key, csv_record, sweep, write_atomic, write_csv, Grid, ResultStore, SweepFailure,
    SweepOutcome, CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    EmptyEvaluation,
    #[error("reference error must be positive, got {0}")]
    ZeroReferenceError(f64),
    #[error("{truth} true labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("label {label} outside 0..{n_classes}")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<EvalError>,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Vsm(#[from] VsmError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Lsa(#[from] LsaError),
    #[error(transparent)]
    Classify(#[from] ClassifyError),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
