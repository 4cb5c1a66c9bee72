//! Error classes to process exit codes and HTTP statuses.

use cape_core::CapeError;
use serde::{Deserialize, Serialize};

pub const EXIT_OK: u8 = 0;
/// Unexpected failure outside the analysis (e.g. writing output).
pub const EXIT_INTERNAL: u8 = 1;
/// Bad command-line usage or argument values.
pub const EXIT_USAGE: u8 = 2;
/// The input table is unreadable or violates the schema.
pub const EXIT_INPUT: u8 = 3;
/// A requested family, model or benchmark is absent or too small.
pub const EXIT_LOOKUP: u8 = 4;
/// The analysis cannot run on this (valid) data.
pub const EXIT_ANALYSIS: u8 = 5;

pub fn exit_code(e: &CapeError) -> u8 {
    match e {
        CapeError::InvalidArgument(_) => EXIT_USAGE,
        e if e.is_input_error() => EXIT_INPUT,
        CapeError::UnknownFamily(_)
        | CapeError::MissingBenchmark { .. }
        | CapeError::SingletonFamily(_)
        | CapeError::MissingWidth { .. } => EXIT_LOOKUP,
        _ => EXIT_ANALYSIS,
    }
}

pub fn http_status(e: &CapeError) -> u16 {
    match e {
        CapeError::UnknownFamily(_) => 404,
        _ => 422,
    }
}

/// JSON error body shared by the API and `--format json` CLI failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl From<&CapeError> for ErrorBody {
    fn from(e: &CapeError) -> Self {
        Self { error: e.class().to_string(), message: e.to_string() }
    }
}
