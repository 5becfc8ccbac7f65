use std::fmt;
use std::process::ExitCode;

/// Command failure, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// A check or analysis flagged the input (exit 1).
    Failed(String),
    /// Bad arguments or out-of-range values (exit 2).
    Usage(String),
    /// Unreadable or malformed files (exit 3).
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Failed(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        })
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &std::path::Path, e: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Failed(m) | CliError::Usage(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

impl From<qrng_core::Error> for CliError {
    fn from(e: qrng_core::Error) -> Self {
        use qrng_core::Error as E;
        match e {
            E::Domain(_) | E::Config(_) => CliError::Usage(e.to_string()),
            E::Parse { .. } | E::Io(_) => CliError::Io(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
