use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),

    #[error("numerical failure in {what}: residual {residual:.3e}")]
    NumericalFailure { what: String, residual: f64 },

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    TrainingFailure { epoch: usize },

    #[error("curve fit did not converge (residual rms {residual_rms:.3e})")]
    FitNotConverged {
        residual_rms: f64,
        /// Best parameter vector reached before giving up.
        best: Vec<f64>,
    },

    #[error("parse error in {path} at {location}: {message}")]
    Parse {
        path: String,
        location: String,
        message: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
