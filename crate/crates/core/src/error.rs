use thiserror::Error;

/// Failures raised by the solvers and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric state error: {0}")]
    NumericState(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("l_max = {l_max} insufficient: truncation residual {residual:.3e} exceeds {limit:.1e}")]
    LmaxInsufficient { l_max: usize, residual: f64, limit: f64 },

    #[error("partial wave l = {l}: {source}")]
    PartialWave { l: i64, source: Box<Error> },

    #[error("unsupported packet shape: {0}")]
    UnsupportedShape(String),

    #[error("contour quadrature not converged: change {change:.3e} of max|psi| after {nodes} nodes")]
    NotConverged { change: f64, nodes: usize },

    /// Raised when a diagnostic does not apply to the data (too few peaks,
    /// too few zero crossings). Callers usually treat this as a signal rather
    /// than a failure.
    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("fit window error: {0}")]
    Window(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
