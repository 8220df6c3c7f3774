use std::fmt;

use thiserror::Error;

/// One problem found while parsing or validating a configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigIssue {
    /// Dotted key path, e.g. `pressure.beta`.
    pub key: String,
    /// 1-based line in the source text, when it could be located.
    pub line: Option<usize>,
    pub reason: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{} (line {}): {}", self.key, line, self.reason),
            None => write!(f, "{}: {}", self.key, self.reason),
        }
    }
}

fn join_issues(issues: &[ConfigIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("barrier violation: density ratio {ratio} at cell {cell}")]
    BarrierViolation { ratio: f64, cell: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },

    #[error("quadrature did not reach tolerance {tol:e} on [{a}, {b}] (estimate {estimate:e})")]
    QuadratureFailure {
        a: f64,
        b: f64,
        tol: f64,
        estimate: f64,
    },

    #[error("invalid barrier specification: {0}")]
    Spec(String),

    #[error("degenerate state: time step {dt:e} underflows")]
    DegenerateState { dt: f64 },

    #[error("non-finite value in `{field}` at cell {cell}")]
    NonFinite { field: &'static str, cell: usize },

    #[error("step failed at t = {t} after {halvings} time-step halvings: {last}")]
    StepFailure {
        t: f64,
        halvings: usize,
        last: Box<Error>,
    },

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("parse error: {}", join_issues(.0))]
    Parse(Vec<ConfigIssue>),

    #[error("validation error: {}", join_issues(.0))]
    Validation(Vec<ConfigIssue>),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_)
            | Error::Validation(_)
            | Error::Parameter { .. }
            | Error::Spec(_)
            | Error::UnknownScenario(_) => 2,
            Error::Io { .. } => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
