use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("unsupported dimension {0}")]
    UnsupportedDim(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("matrix rows are not symmetric at ({0}, {1})")]
    NotSymmetric(usize, usize),
    #[error("jacobi iteration did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("operator `{0}` needs a point x")]
    MissingPoint(&'static str),
    #[error("operator `{0}` has no x-dependence")]
    NotXDependent(&'static str),
    #[error("operator `{0}` is degenerate and cannot be solved")]
    DegenerateOperator(&'static str),
    #[error("ellipticity mismatch: {0}")]
    EllipticityMismatch(String),
    #[error("unknown manufactured case `{0}`")]
    UnknownCase(String),
    #[error("solve diverged: residual {residual:e} after {iterations} iterations")]
    SolveDiverged { iterations: usize, residual: f64 },
    #[error("solve did not converge: residual {residual:e} after {iterations} iterations")]
    SolveNotConverged { iterations: usize, residual: f64 },
    #[error("report precondition failed: {0}")]
    Precondition(String),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
