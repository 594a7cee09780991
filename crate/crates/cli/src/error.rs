use std::fmt;
use std::path::PathBuf;

use rrm_core::Error as CoreError;

/// Process exit codes.
pub mod exit {
    pub const OTHER: u8 = 1;
    pub const SCHEMA: u8 = 2;
    pub const IO: u8 = 3;
    pub const NUMERIC: u8 = 4;
    pub const VERIFICATION: u8 = 5;
}

#[derive(Debug)]
pub enum CliError {
    /// Config or input that does not match the expected schema.
    Schema(String),
    Missing(Vec<PathBuf>),
    Core(CoreError),
    Verification(String),
    /// Some seeds of a training sweep failed; carries the exit code of the
    /// first failure.
    SeedsFailed { code: u8, message: String },
    Other(String),
}

impl CliError {
    pub fn schema(msg: impl Into<String>) -> Self {
        CliError::Schema(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) => exit::SCHEMA,
            CliError::Missing(_) => exit::IO,
            CliError::Verification(_) => exit::VERIFICATION,
            CliError::Other(_) => exit::OTHER,
            CliError::SeedsFailed { code, .. } => *code,
            CliError::Core(e) => match e {
                CoreError::InvalidInput(_) | CoreError::Format { .. } => exit::SCHEMA,
                CoreError::Io { .. } => exit::IO,
                CoreError::Numeric(_) => exit::NUMERIC,
                _ => exit::OTHER,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Schema(m) => write!(f, "invalid configuration: {m}"),
            CliError::Missing(paths) => {
                write!(f, "missing files:")?;
                for p in paths {
                    write!(f, "\n  {}", p.display())?;
                }
                Ok(())
            }
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Verification(m) => write!(f, "verification failed: {m}"),
            CliError::SeedsFailed { message, .. } => write!(f, "training failed: {message}"),
            CliError::Other(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn io_err(path: impl Into<PathBuf>, e: std::io::Error) -> CliError {
    CliError::Core(CoreError::Io {
        path: path.into(),
        source: e,
    })
}
