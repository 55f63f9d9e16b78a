use std::fmt;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Usage = 1,
    Data = 2,
    Run = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Self {
            exit: Exit::Usage,
            error: anyhow::anyhow!("{msg}"),
        }
    }

    pub fn data(e: impl Into<anyhow::Error>) -> Self {
        Self {
            exit: Exit::Data,
            error: e.into(),
        }
    }

    pub fn run(e: impl Into<anyhow::Error>) -> Self {
        Self {
            exit: Exit::Run,
            error: e.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attach an exit class to foreign errors.
pub trait Classify<T> {
    fn usage_err(self) -> CliResult<T>;
    fn data_err(self) -> CliResult<T>;
    fn run_err(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage_err(self) -> CliResult<T> {
        self.map_err(|e| CliError {
            exit: Exit::Usage,
            error: e.into(),
        })
    }

    fn data_err(self) -> CliResult<T> {
        self.map_err(CliError::data)
    }

    fn run_err(self) -> CliResult<T> {
        self.map_err(CliError::run)
    }
}
