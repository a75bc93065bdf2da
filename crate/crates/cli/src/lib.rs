//! Command-line front end and read-mostly HTTP service over the diagnosis
//! pipeline and the report store.

pub mod api;
pub mod backends;
pub mod commands;

use cot_inspector_core::pipeline::{FailureKind, PipelineError};
use cot_inspector_core::store::StoreError;
use thiserror::Error;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_STAGE: u8 = 3;
pub const EXIT_BACKEND: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Store(StoreError::NotFound(_) | StoreError::InvalidId(_)) => EXIT_USAGE,
            CliError::Pipeline(e) if e.kind == FailureKind::Backend => EXIT_BACKEND,
            CliError::Pipeline(_) => EXIT_STAGE,
            CliError::Store(_) | CliError::Io(_) => 1,
        }
    }
}
