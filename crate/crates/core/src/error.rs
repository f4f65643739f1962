use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value lies outside the domain of the operation.
    #[error("{field} out of range: {value} ({expected})")]
    Domain {
        field: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Epoch not on the frame clock grid.
    #[error("epoch {epoch} is not aligned to the {cadence_s} s cadence grid starting at {origin}")]
    Cadence {
        epoch: f64,
        cadence_s: f64,
        origin: f64,
    },

    /// Epochs must strictly increase per partition (store) or per star (curves).
    #[error("epoch regression: {epoch} does not follow {last} ({context})")]
    Sequencing {
        epoch: f64,
        last: f64,
        context: String,
    },

    /// A match result that does not describe the frame it was paired with.
    #[error("match result does not correspond to frame {imageid}: {detail}")]
    Mismatch { imageid: u32, detail: String },

    #[error("storage error at {}: {source}", path.display())]
    Storage {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("corrupt file {}: {detail}", path.display())]
    Format { path: PathBuf, detail: String },

    #[error("merge and append overlap on partition {partition}")]
    Overlap { partition: u16 },

    /// Raised by the fault hooks used to simulate crashes.
    #[error("operation interrupted at {0}")]
    Interrupted(&'static str),

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("partition {partition} failed: {source}")]
    Partition {
        partition: u16,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn storage(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Storage {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// True for errors caused by bad inputs or settings rather than by the run itself.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::Domain { .. } => true,
            Error::Partition { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
