use thiserror::Error;

use crate::mapmerge::MergeReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("point count mismatch: {left} vs {right}")]
    CountMismatch { left: usize, right: usize },

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The scale denominator `sum m_i . R d_i` fell to (or below) its
    /// degeneracy floor; the current rotation does not correlate the sets.
    #[error("degenerate scale at iteration {iteration}: denominator {denominator:e} <= floor {floor:e}")]
    DegenerateScale {
        iteration: usize,
        denominator: f64,
        floor: f64,
    },

    #[error("degenerate shape: {0}")]
    DegenerateShape(&'static str),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("grid has no edge points (no occupied cell borders free space)")]
    EmptyEdges,

    #[error("merge rejected: final mse {:e} exceeds sanity bound {:e}", .report.final_mse, .bound)]
    MergeRejected { report: Box<MergeReport>, bound: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }

    /// Attach an iteration number to a scale degeneracy raised by a bare estimator.
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            Error::DegenerateScale {
                denominator, floor, ..
            } => Error::DegenerateScale {
                iteration,
                denominator,
                floor,
            },
            other => other,
        }
    }
}
