use thiserror::Error;

/// Errors raised by the numerical kernels and experiment drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Argument outside the domain of a map or function.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// Evaluation of the zeta-function at its pole `z = 1`.
    #[error("zeta-function pole at z = 1")]
    Pole,

    /// A parameter violates a documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An iterative or adaptive procedure did not reach its tolerance.
    #[error("no convergence in {op}: {detail}")]
    NonConvergence { op: &'static str, detail: String },

    /// The oscillation seminorm estimate grows without bound along the schedule.
    #[error("seminorm estimate diverges (last per-epsilon value {last:.6e})")]
    SeminormDiverges { last: f64 },

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(detail: impl Into<String>) -> Self {
        Error::InvalidParameter(detail.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
