use std::path::PathBuf;

use thiserror::Error;

use crate::system::Violation;

/// Failures raised by the LP layer.
#[derive(Debug, Error)]
pub enum LpError {
    #[error("inconsistent model: {0}")]
    Inconsistent(String),
    #[error("solver backend failure: {0}")]
    Backend(String),
    #[error("solution fails residual check (row {row}: {max_row:e}, integrality {max_integrality:e})")]
    Residual {
        max_row: f64,
        max_integrality: f64,
        row: String,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation failed: {}", format_violations(.0))]
    Validation(Vec<Violation>),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("{context}: solver returned {status}")]
    NotOptimal {
        context: String,
        status: crate::lp::SolveStatus,
    },
    #[error("day-ahead problem is infeasible; failing constraint group: {group}")]
    Infeasible { group: String },
    #[error("uncertainty set has {count} vectors, above the enumeration limit of {limit}")]
    EnumerationTooLarge { count: u128, limit: u128 },
    #[error("schedule was produced for system {schedule} but baseline belongs to {baseline}")]
    SystemMismatch { schedule: String, baseline: String },
    #[error("scenario {index}: {source}")]
    Scenario {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for errors caused by bad inputs rather than solver trouble.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Parse(_)
            | Error::Validation(_)
            | Error::InvalidInput(_)
            | Error::Io { .. }
            | Error::EnumerationTooLarge { .. }
            | Error::SystemMismatch { .. } => true,
            Error::Scenario { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}

fn format_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
