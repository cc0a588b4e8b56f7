use std::fmt;

/// CLI failure classes with their exit codes: malformed CSV input (2),
/// constraint violations (3), I/O failures (4).
#[derive(Debug)]
pub enum CliError {
    Csv(String),
    Constraint(String),
    Io(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            Self::Csv(_) => 2,
            Self::Constraint(_) => 3,
            Self::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Csv(msg) => write!(f, "malformed csv: {msg}"),
            Self::Constraint(msg) => write!(f, "constraint violation: {msg}"),
            Self::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl From<covnet_core::Error> for CliError {
    fn from(e: covnet_core::Error) -> Self {
        Self::Constraint(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            Self::Io(e.to_string())
        } else {
            Self::Csv(e.to_string())
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::Io(e.to_string())
    }
}
