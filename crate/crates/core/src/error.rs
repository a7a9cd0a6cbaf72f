//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema: {0}")]
    Schema(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("config: {0}")]
    Config(String),

    /// A filtered nearest-neighbor query could not be satisfied.
    #[error("insufficient support: need {needed} entries with z={z_filter}, store has {available}")]
    InsufficientSupport {
        z_filter: u8,
        needed: usize,
        available: usize,
    },

    #[error("embedding record {record_id}: {reason}")]
    Embed { record_id: u32, reason: String },

    #[error("backend {backend}: {reason} (after {attempts} attempt(s))")]
    Backend {
        backend: String,
        reason: String,
        attempts: u32,
    },

    #[error("batch {batch} position {position}: {source}")]
    AtPosition {
        batch: usize,
        position: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("core-set iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub fn at_position(self, batch: usize, position: usize) -> Error {
        Error::AtPosition {
            batch,
            position,
            source: Box::new(self),
        }
    }

    pub fn at_iteration(self, iteration: usize) -> Error {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }

    /// Process exit code: 1 config/usage, 2 backend failure, 3 broken invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Backend { .. } | Error::Embed { .. } => 2,
            Error::Invariant(_) => 3,
            Error::AtPosition { source, .. } | Error::AtIteration { source, .. } => {
                source.exit_code()
            }
            _ => 1,
        }
    }
}
