//! Command-line workflows for the evidential-regression core: config
//! parsing, training loops, evaluation reports, gradient verification, and
//! plain-SVG plotting.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod eval;
pub mod gradcheck;
pub mod sensitivity;
pub mod svg;
pub mod trainer;

use evireg_core::EviregError;

/// Process exit code for an error: 1 for bad input or files the user
/// controls, 2 for runtime failures.
pub fn exit_code_for(err: &EviregError) -> i32 {
    match err {
        EviregError::InvalidInput(_)
        | EviregError::MalformedJson { .. }
        | EviregError::ShapeMismatch(_)
        | EviregError::UnsupportedVersion { .. }
        | EviregError::CsvCell { .. } => 1,
        EviregError::Io { .. } | EviregError::Numeric(_) => 2,
    }
}
