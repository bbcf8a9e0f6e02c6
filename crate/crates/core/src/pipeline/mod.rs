//! Batch plumbing around the core library: ingesting sampled cycles, running
//! extraction over a batch, exporting objective grids and generating
//! synthetic batches.

pub mod batch;
pub mod generate;
pub mod grid_io;
pub mod ingest;

use std::path::PathBuf;

use thiserror::Error;

use crate::error::IfError;

/// Batch-level failures. Per-record problems never surface here; they are
/// reported as rejections or failure records instead.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] IfError),
}

impl PipelineError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Self::Parse { path: path.into(), message: message.into() }
    }
}

pub type PipelineResult<T> = std::result::Result<T, PipelineError>;
