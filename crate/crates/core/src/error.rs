use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (asymmetry {asymmetry:.3e})")]
    NotSkewSymmetric { asymmetry: f64 },

    #[error("rotation axis has zero length but angle is {angle}")]
    ZeroAxis { angle: f64 },

    #[error("cannot normalize a 4-vector of norm {norm:.3e}")]
    DegenerateQuaternion { norm: f64 },

    #[error(
        "Newton solve did not converge after {iterations} iterations (residual {residual:.3e})"
    )]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("innovation covariance is singular (condition number {condition:.3e})")]
    SingularInnovation { condition: f64 },

    #[error("covariance lost positive definiteness")]
    CovarianceNotPsd,

    #[error("gain matrix diverged (norm {norm:.3e})")]
    GainDiverged { norm: f64 },

    #[error("penalty combination is singular")]
    SingularPenalty,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("analysis window holds {samples} samples, need at least {required}")]
    WindowTooShort { samples: usize, required: usize },

    #[error("malformed result file: {0}")]
    MalformedResult(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors raised by a filter or integrator losing track numerically.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            Error::NewtonDiverged { .. }
                | Error::SingularInnovation { .. }
                | Error::CovarianceNotPsd
                | Error::GainDiverged { .. }
                | Error::SingularPenalty
                | Error::DegenerateQuaternion { .. }
        )
    }
}
