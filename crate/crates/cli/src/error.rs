use std::fmt;

/// Failure of a command; `Display` is a single line `<category>: <detail>`.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration, with the offending key path (empty for the document root).
    Config {
        key: String,
        reason: String,
    },
    Solver(popinv::Error),
    Io {
        path: String,
        reason: String,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Solver(_) => 3,
            CliError::Io { .. } => 4,
        }
    }

    pub fn io(path: &std::path::Path, err: impl fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            reason: err.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let line = match self {
            CliError::Config { key, reason } if key.is_empty() => format!("config: {reason}"),
            CliError::Config { key, reason } => format!("config: {key}: {reason}"),
            CliError::Solver(e) => format!("solver: {e}"),
            CliError::Io { path, reason } => format!("io: {path}: {reason}"),
        };
        f.write_str(&line.replace(['\n', '\r'], " "))
    }
}

impl std::error::Error for CliError {}

impl From<popinv::Error> for CliError {
    fn from(e: popinv::Error) -> Self {
        CliError::Solver(e)
    }
}
