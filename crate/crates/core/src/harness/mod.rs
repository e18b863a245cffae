//! Training loop, evaluation schedule, checkpoints, reports and sweeps.

mod checkpoint;
mod config;
mod report;
mod sweep;
mod trainer;

pub use checkpoint::{checkpoint_file_name, Checkpoint, CHECKPOINT_FORMAT};
pub use config::{valid_keys, DatasetConfig, DiscriminatorConfig, ExperimentConfig, FidReference, GeneratorConfig};
pub use report::{MetricReport, ReportRow, RunSummary, CSV_HEADER};
pub use sweep::{
    median, run_seed_variance, sample_count_csv, sweep_margin, sweep_sample_count, sweep_sample_count_checkpoint,
    MarginRow, MarginTable, RunCell, SampleCountRow, SeedRow, SeedVarianceTable,
};
pub use trainer::{
    evaluate_checkpoint, evaluate_source, generate_samples, train, Evaluation, GeneratorSource, Reference,
    RunOutcome, SampleSource, StepLosses, Trainer, TrueSampler,
};

use thiserror::Error;

use crate::autodiff::{AutodiffError, OptimError};
use crate::data::DataError;
use crate::layers::LayerError;
use crate::losses::LossError;
use crate::metrics::MetricsError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("unknown config key {key:?}; valid keys: {valid}")]
    UnknownKey { key: String, valid: String },
    #[error("config key {key}: {message}")]
    InvalidValue { key: String, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("training diverged at step {step} (non-finite loss); {} evaluation rows kept", report.rows.len())]
    Divergence { step: usize, report: Box<MetricReport> },
    #[error("generator produced non-finite samples")]
    NonFiniteSamples,
    #[error("sweep: {0}")]
    InvalidSweep(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

impl HarnessError {
    /// Whether the error stems from configuration or usage.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            HarnessError::Config(_) | HarnessError::UnknownKey { .. } | HarnessError::InvalidValue { .. } | HarnessError::InvalidSweep(_)
        )
    }
}
