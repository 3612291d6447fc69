use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (shapes, ranges, empty inputs).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("class {class} has no samples")]
    MissingClass { class: usize },

    #[error("no valid triplet: {0}")]
    Infeasible(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: line {line}: non-finite value {value:?} in column {column}")]
    NonFinite {
        path: PathBuf,
        line: u64,
        column: String,
        value: String,
    },

    #[error("unsupported {what} version {found} (this build reads version {expected})")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("update {update}: {source}")]
    AtUpdate {
        update: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("level {level}: {source}")]
    AtLevel {
        level: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn at_update(self, update: usize) -> Self {
        Error::AtUpdate {
            update,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_level(self, level: usize) -> Self {
        Error::AtLevel {
            level,
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The innermost error, with update/level context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtUpdate { source, .. } | Error::AtLevel { source, .. } => source.root(),
            other => other,
        }
    }
}
