use serde::Serialize;
use thiserror::Error;

/// Which stage of configuration handling produced a diagnostic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum DiagnosticKind {
    Parse,
    Shape,
    Expr,
    Io,
    Compute,
    Validation,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    /// Dotted key of the offending entry, e.g. `boundary.Ra`.
    pub key: Option<String>,
    /// 1-based line in the configuration text.
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?} error", self.kind)?;
        if let Some(k) = &self.key {
            write!(f, " at {k}")?;
        }
        if let Some(l) = self.line {
            write!(f, " (line {l})")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Config(Vec<Diagnostic>),
    #[error(transparent)]
    Compute(#[from] detline_core::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("validation failed: {0}")]
    Validation(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Compute(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Validation(_) => 3,
        }
    }

    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        match self {
            CliError::Config(d) => d.clone(),
            other => {
                let kind = match other {
                    CliError::Io(_) => DiagnosticKind::Io,
                    CliError::Validation(_) => DiagnosticKind::Validation,
                    _ => DiagnosticKind::Compute,
                };
                vec![Diagnostic { kind, key: None, line: None, message: other.to_string() }]
            }
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
