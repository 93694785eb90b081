use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("singular system: condition estimate {cond:.3e} exceeds {limit:.1e}")]
    SingularSystem { cond: f64, limit: f64 },
    #[error("no convergence: {0}")]
    NonConvergence(String),
    #[error("evaluation point coincides with emitter {index}")]
    PointOnEmitter { index: usize },
    #[error("configuration: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
