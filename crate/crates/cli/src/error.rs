use std::fmt;

/// Failure of a CLI command, tagged with its process exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad flags, config or input files. Exit 2.
    Usage(String),
    /// Filesystem failure. Exit 3.
    Io(String),
    /// Sampler or model failure. Exit 4.
    Inference(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::Inference(_) => 4,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &std::path::Path, err: impl fmt::Display) -> Self {
        CliError::Io(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
            CliError::Inference(m) => write!(f, "inference failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<lowfr::Error> for CliError {
    fn from(e: lowfr::Error) -> Self {
        use lowfr::Error as E;
        match e {
            E::Input(_)
            | E::Usage(_)
            | E::Configuration(_)
            | E::DegenerateColumn { .. }
            | E::Alignment(_)
            | E::Sizing(_) => CliError::Usage(e.to_string()),
            _ => CliError::Inference(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
