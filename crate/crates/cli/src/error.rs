use std::fmt;
use std::path::Path;

/// Failure of a command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config values or input files (exit code 2).
    Config(String),
    /// The numerical work failed (exit code 3).
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    /// Config error naming the offending field.
    pub fn field(name: &str, message: impl fmt::Display) -> Self {
        CliError::Config(format!("`{name}`: {message}"))
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        CliError::Config(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<convintensity::Error> for CliError {
    fn from(e: convintensity::Error) -> Self {
        use convintensity::Error as E;
        match e {
            E::SingularDesign | E::NonfiniteObjective | E::AllInfiniteWeights | E::DegenerateColumn { .. } => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
