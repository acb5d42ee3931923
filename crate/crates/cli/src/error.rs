use std::fmt;

use ispforge_core::Error as CoreError;

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub kind: &'static str,
    pub source: anyhow::Error,
}

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_CHECKPOINT: u8 = 3;
pub const EXIT_REGISTRY: u8 = 4;

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(e: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_CONFIG,
            kind: "invalid-config",
            source: e.into(),
        }
    }

    /// Checkpoint loading failures; registry mismatches keep their own code.
    pub fn checkpoint(e: CoreError) -> Self {
        if is_registry_mismatch(&e) {
            return Self {
                code: EXIT_REGISTRY,
                kind: "registry-mismatch",
                source: e.into(),
            };
        }
        Self {
            code: EXIT_CHECKPOINT,
            kind: "checkpoint",
            source: e.into(),
        }
    }

    pub fn json(&self) -> String {
        serde_json::json!({
            "error": self.kind,
            "exit_code": self.code,
            "message": self.source.to_string(),
        })
        .to_string()
    }
}

fn is_registry_mismatch(e: &CoreError) -> bool {
    match e {
        CoreError::RegistryMismatch { .. } => true,
        CoreError::Path { source, .. } => is_registry_mismatch(source),
        _ => false,
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.source)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        Self {
            code: EXIT_FAILURE,
            kind: "runtime",
            source: e.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: EXIT_FAILURE,
            kind: "io",
            source: e.into(),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self {
            code: EXIT_FAILURE,
            kind: "runtime",
            source: e.into(),
        }
    }
}
