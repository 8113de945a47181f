//! Library half of the `icla-kit` binary: file formats, report schemas, and
//! the experiment pipelines the subcommands (and the acceptance suite) drive.

pub mod commands;
pub mod format;
pub mod pipeline;
pub mod report;

use icla_core::Error;

/// Exit codes: 0 success, 2 I/O or parse, 3 training divergence,
/// 4 configuration or shape mismatch.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) | Error::CsvParse { .. } => 2,
        Error::TrainingDiverged { .. } => 3,
        _ => 4,
    }
}
