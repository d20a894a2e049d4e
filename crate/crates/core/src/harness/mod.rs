//! Experiment runner: subset, augment to each set size, predict on a fixed
//! test set, score, aggregate across seeds, and test size pairs.

mod config;
mod report;
mod run;

use std::fmt;

pub use config::{AugmenterConfig, BackendConfig, EdaBaselineConfig, ExperimentConfig, MetricsConfig};
pub use report::{comparisons_csv, markdown_tables, results_csv, ComparisonRow, ResultRow};
pub use run::{run_experiment, CellResult, ExperimentReport, SizeKey};

/// Pipeline step a cell failed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Subset,
    Augment,
    Export,
    Predict,
    Score,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Subset => "subset",
            Stage::Augment => "augment",
            Stage::Export => "export",
            Stage::Predict => "predict",
            Stage::Score => "score",
            Stage::Write => "write",
        })
    }
}

/// Broad cause, used for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// Bad data or configuration.
    Input,
    /// Filesystem or provider trouble.
    Environment,
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Dataset {
        path: String,
        #[source]
        source: crate::corpus::DatasetError,
    },
    #[error("seed {seed}, size {size}, stage {stage}: {source}")]
    Cell {
        seed: u64,
        size: String,
        stage: Stage,
        kind: FailureKind,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

impl HarnessError {
    pub fn kind(&self) -> FailureKind {
        match self {
            HarnessError::Config { .. } => FailureKind::Input,
            HarnessError::Io { .. } => FailureKind::Environment,
            HarnessError::Dataset { source, .. } if source.is_io() => FailureKind::Environment,
            HarnessError::Dataset { .. } => FailureKind::Input,
            HarnessError::Cell { kind, .. } => *kind,
        }
    }
}
