use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A parameter or configuration field is invalid.
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },

    /// A state invariant was violated during time evolution.
    #[error("numerical failure at t = {time_ps:.4} ps: {message}")]
    Numerical { time_ps: f64, message: String },

    /// Pulse-area calibration could not locate the requested extremum.
    #[error("calibration failed: {0}")]
    Calibration(String),

    /// A sweep cell failed; wraps the underlying error with its grid point.
    #[error("grid point {point}: {source}")]
    GridPoint {
        point: String,
        #[source]
        source: Box<Error>,
    },

    /// A least-squares fit did not converge or is ill-posed.
    #[error("fit failed: {0}")]
    Fit(String),

    /// Malformed input data (CSV rows, JSON documents).
    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }

    /// True for errors caused by user-supplied configuration or input.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config { .. } | Error::Input(_) | Error::Json(_) | Error::Domain(_) => true,
            Error::GridPoint { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
