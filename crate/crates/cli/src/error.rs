//! CLI-level errors and their exit codes.
//!
//! Exit codes:
//!   0  success
//!   2  usage error (bad flags, malformed config)
//!   3  execution error (missing files, malformed data, shape problems)
//!   4  numeric divergence (NaN/inf reached during training)

use dbvae_core::error::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

/// All failures surfaced by the command-line binary.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] Error),

    #[error("run {run} ({model}) failed: {source}")]
    RunFailed {
        run: usize,
        model: String,
        #[source]
        source: Box<Error>,
    },
}

impl CliError {
    /// The process exit code this failure maps onto.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => code_for(e),
            CliError::RunFailed { source, .. } => code_for(source),
        }
    }
}

fn code_for(e: &Error) -> i32 {
    if e.is_numeric() {
        4
    } else {
        3
    }
}
