//! Staged command-line pipeline: phantom, acquisition, baselines,
//! pretraining, reconstruction, evaluation and export.

pub mod config;
pub mod container;
pub mod manifest;
pub mod pipeline;

use deblur_core::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Process exit code for a failed command.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonFinite(_) | Error::Diverged(_) | Error::Degenerate(_) => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}
