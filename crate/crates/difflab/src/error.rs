use std::fmt;

/// Failure of a harness command, split by exit code.
#[derive(Debug)]
pub enum HarnessError {
    /// Malformed or invalid configuration (exit code 2).
    Config(String),
    /// Anything that goes wrong while running (exit code 1).
    Runtime(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(m) => write!(f, "config error: {m}"),
            HarnessError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<difflab_core::Error> for HarnessError {
    fn from(e: difflab_core::Error) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Runtime(e.to_string())
    }
}

pub type HarnessResult<T> = Result<T, HarnessError>;
