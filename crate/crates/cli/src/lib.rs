//! Filesystem companion to `hvt-core`: binary tensor and mask formats,
//! checkpoint directories, dataset generation and loading, stage config
//! files, run manifests, and the verification suites behind `hvt verify`.

pub mod cfgfile;
pub mod ckpt;
pub mod commands;
pub mod dataset;
pub mod manifest;
pub mod mvm;
pub mod mvt;
pub mod pipeline;
pub mod verify;

use hvt_core::CoreError;
use std::fmt;
use std::path::PathBuf;

/// Errors at the CLI boundary. `exit_code` is the process-level contract:
/// 0 success, 2 usage or config, 3 data or precondition, 4 internal
/// invariant violation.
#[derive(Debug)]
pub enum CliError {
    Core(CoreError),
    Io(PathBuf, std::io::Error),
    /// Malformed or inconsistent file contents.
    Format(String),
    /// Flag combinations clap cannot catch on its own.
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                CoreError::Config(_) => 2,
                CoreError::Data(_) | CoreError::Plan(_) | CoreError::Capacity(_) => 3,
                _ => 4,
            },
            CliError::Io(..) | CliError::Format(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(path, e) => write!(f, "{}: {e}", path.display()),
            CliError::Format(msg) => write!(f, "{msg}"),
            CliError::Usage(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> CliError {
        CliError::Core(e)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Wrap an io::Error with the path it concerns; bare io errors are useless
/// in a multi-file pipeline.
pub fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Io(path.to_path_buf(), e)
}
