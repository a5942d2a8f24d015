use thiserror::Error;

/// Errors produced by the solvers, the linear algebra layer and the I/O layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{method} did not converge after {iterations} iterations (best residual {residual:e})")]
    NoConvergence {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("operator is indefinite (curvature {0:e})")]
    Indefinite(f64),

    #[error("matrix is rank deficient (singular value ratio {0:e})")]
    RankDeficient(f64),

    #[error("degenerate instance: {0}")]
    Degenerate(String),

    #[error("instance is not degenerate (‖V_gᵀBC⁻¹‖ = {0:e})")]
    NotDegenerate(f64),

    #[error("point is not critical (first-order residual {0:e})")]
    NotCritical(f64),

    #[error("spectral norm bound violated: {0} > 1")]
    NormBound(f64),

    #[error("infeasible cardinalities: {0}")]
    Cardinality(String),

    #[error("conductance undefined: {0}")]
    Conductance(String),

    #[error("duplicate points {0} and {1}")]
    DuplicatePoints(usize, usize),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Format(e.to_string())
    }
}
