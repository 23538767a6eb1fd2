use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A tensor left the admissible range between the Reuss and Voigt bounds.
    #[error("bound violation: eigenvalue {eigenvalue:.3e} outside admissible range ({context})")]
    BoundViolation { eigenvalue: f64, context: String },

    #[error("generation incomplete: reached volume fraction {achieved:.4} for target {target:.4} after {attempts} placements")]
    GenerationIncomplete {
        achieved: f64,
        target: f64,
        attempts: usize,
    },

    #[error("solver did not converge: final residual {:.3e} after {} iterations", .history.last().copied().unwrap_or(f64::NAN), .history.len())]
    SolverDiverged { history: Vec<f64> },

    #[error("training diverged at epoch {epoch}: {reason}")]
    TrainingDiverged { epoch: usize, reason: String },

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("unsupported schema: found {found}, expected {expected}")]
    UnsupportedSchema { found: String, expected: String },

    #[error("corrupt file: {0}")]
    CorruptFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for failures caused by the numerics rather than by the data on disk.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::BoundViolation { .. }
                | Error::GenerationIncomplete { .. }
                | Error::SolverDiverged { .. }
                | Error::TrainingDiverged { .. }
        )
    }
}
