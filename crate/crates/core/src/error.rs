//! Error type shared by every module.

use std::path::PathBuf;

use crate::diagnostics::TrajectoryLog;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    #[error("diverged at step {step}")]
    Divergence { step: usize },

    /// Divergence inside `run`, with every record logged before it.
    #[error("run diverged at step {step} after {} records", log.records.len())]
    DivergedRun { step: usize, log: Box<TrajectoryLog> },

    #[error("mode {mode} never settled within epsilon (last |e| = {last_abs_e})")]
    NonConvergent { mode: usize, last_abs_e: f64 },

    #[error("integration failed at t = {t}: step still rejected after {halvings} step halvings")]
    StepSize { t: f64, halvings: u32 },

    /// A scenario precondition failed, e.g. a base run that did not converge.
    #[error("scenario failed: {0}")]
    Scenario(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config line {line}, key `{key}`: {message}")]
    Config { line: usize, key: String, message: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::DivergedRun { .. })
    }
}
