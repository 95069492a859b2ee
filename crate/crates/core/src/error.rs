use std::path::PathBuf;

use thiserror::Error;

use crate::assess::CapacityResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a numeric operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A cgroup tree is malformed (duplicate leaf names, zero period, ...).
    #[error("malformed cgroup tree: {0}")]
    Structure(String),

    #[error("cannot place pod `{pod}`: {reason}")]
    Placement { pod: String, reason: String },

    #[error("calibration unstable: {0}")]
    CalibrationUnstable(String),

    #[error("variability fit is degenerate: all occupancy values are identical")]
    FitDegenerate,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// The requested measurement span has not been completed yet.
    #[error("message {0} has not completed the requested span")]
    NotReady(u64),

    /// Configuration validation failures, one entry per offending field path.
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("trial runner failed at {devices} devices: {message}")]
    Trial {
        devices: u32,
        message: String,
        partial: Box<CapacityResult>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
