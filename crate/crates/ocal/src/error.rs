//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("csv parse error at line {line}: {message}")]
    CsvParse { line: u64, message: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported gamma heuristic `{0}`")]
    UnsupportedHeuristic(String),

    #[error("solver did not converge after {steps} steps (KKT violation {violation:.3e})")]
    SolverDidNotConverge { steps: usize, violation: f64 },

    #[error("infeasible dual program: {0}")]
    InfeasibleProgram(String),

    #[error("KKT certificate failed: residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    KktCertificate { residual: f64, tolerance: f64 },

    #[error("metric `{name}` undefined: {reason}")]
    MetricUndefined { name: String, reason: String },

    #[error("empty progress curve")]
    EmptyCurve,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unknown registry name `{kind}:{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::InvalidConfig(e.to_string())
    }
}
