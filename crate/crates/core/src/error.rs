use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("prox step did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("cannot sample from a field with mass {0}")]
    ZeroMass(f64),

    #[error("particle {id} left the box at step {step} (position {position:?})")]
    EscapedDomain {
        id: usize,
        step: usize,
        position: Vec<f64>,
    },

    #[error("automatic bandwidth needs a sample with non-zero spread")]
    DegenerateSample,

    #[error("W1 via cumulative distributions needs a one-dimensional grid")]
    NotOneDimensional,

    #[error("support constant is not calibrated")]
    MissingCalibration,

    #[error("no run found at {0}")]
    MissingRun(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("refusing to overwrite {0}")]
    AlreadyExists(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Strips step wrappers, returning the innermost error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            other => other,
        }
    }
}
