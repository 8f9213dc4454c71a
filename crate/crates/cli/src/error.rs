use lbs_core::LbsError;
use thiserror::Error;

/// Failures surfaced to the command line, grouped by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("numerical fault: {0}")]
    Numerical(String),
}

impl CliError {
    /// 2 config, 3 I/O, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<LbsError> for CliError {
    fn from(e: LbsError) -> Self {
        let msg = e.to_string();
        match e {
            LbsError::Io(_) | LbsError::Format(_) => CliError::Io(msg),
            LbsError::Dimension(_) | LbsError::Domain(_) => CliError::Config(msg),
            LbsError::Numerical(_) | LbsError::Descent { .. } | LbsError::Training(_) => {
                CliError::Numerical(msg)
            }
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
