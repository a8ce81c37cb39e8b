use thiserror::Error;

/// Errors produced by the construction and verification routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("precision exhausted: shift by {shift} bits needs at least {needed} bits, angle has {bits}")]
    PrecisionExhausted { shift: u32, needed: u32, bits: u32 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("a Hölder certificate is required to control the singular node")]
    MissingCertificate,

    #[error("domain violation: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("level set is empty at delta={delta:e}, truncation={truncation}")]
    LevelSetEmpty { delta: f64, truncation: usize },

    #[error("depth {requested} unreachable from the cover; max feasible depth is {feasible}")]
    DepthUnreachable { requested: usize, feasible: usize },

    #[error("point lies on the singular set (distance bracket [{lower:e}, {upper:e}])")]
    SingularPoint { lower: f64, upper: f64 },

    #[error("accuracy unattainable on this grid: need about {required_nodes} nodes")]
    AccuracyUnattainable { required_nodes: usize },

    #[error("gram matrix indefinite beyond tolerance: min eigenvalue {min_eigenvalue:e}, tolerance {tolerance:e}")]
    QuadratureInconsistency { min_eigenvalue: f64, tolerance: f64 },

    #[error("hyperplanes degenerate: relative residual of h against the span is {residual:e}")]
    HyperplaneDegenerate { residual: f64 },

    #[error("audit failure: {quantity} = {value:e} exceeds {limit:e}")]
    AuditFailure { quantity: String, value: f64, limit: f64 },

    #[error("orbit overflow at step {step}")]
    StepLimit { step: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
