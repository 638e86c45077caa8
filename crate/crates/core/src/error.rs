// SPDX-License-Identifier: MIT OR Apache-2.0

//! Crate-wide error type.

use std::path::PathBuf;

use crate::lstm::io::CheckpointError;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Non-finite or otherwise out-of-domain numeric input.
    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A surface form is not in the model vocabulary.
    #[error("form {form:?} is not in the vocabulary")]
    Vocabulary { form: String },

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: loss = {loss}")]
    DivergedTraining { step: usize, loss: f64 },

    /// A stimulus edit could not be produced.
    #[error("generation error: {0}")]
    Generation(String),

    /// The requested edit target does not exist for this construction.
    #[error("unsupported target {target} for task {task}")]
    UnsupportedTarget { task: String, target: String },

    /// Records reference data that does not exist.
    #[error("integrity error: {0}")]
    Integrity(String),

    /// A statistic is undefined for the given samples.
    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),

    /// Logistic regression hit complete separation.
    #[error("complete separation detected on column {column:?}")]
    Separation { column: String },

    /// Iterative fit failed to converge.
    #[error("no convergence after {iterations} iterations (gradient max-norm {gradient})")]
    Convergence { iterations: usize, gradient: f64 },

    /// A contrast needs cells that are absent from the records.
    #[error("incomplete design, missing cells: {}", missing.join(", "))]
    IncompleteDesign { missing: Vec<String> },

    /// Two summary tables cannot be aligned.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// Config file failed validation.
    #[error("config validation failed: {}", paths.join("; "))]
    Config { paths: Vec<String> },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// Stable snake_case name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NumericDomain(_) => "numeric_domain",
            Error::Argument(_) => "argument",
            Error::Vocabulary { .. } => "vocabulary",
            Error::Checkpoint(_) => "checkpoint",
            Error::DivergedTraining { .. } => "diverged_training",
            Error::Generation(_) => "generation",
            Error::UnsupportedTarget { .. } => "unsupported_target",
            Error::Integrity(_) => "integrity",
            Error::UndefinedStatistic(_) => "undefined_statistic",
            Error::Separation { .. } => "separation",
            Error::Convergence { .. } => "convergence",
            Error::IncompleteDesign { .. } => "incomplete_design",
            Error::Alignment(_) => "alignment",
            Error::Config { .. } => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
