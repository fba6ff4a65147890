use thiserror::Error;

/// Errors raised by the tomography library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),

    #[error("trace is {0}, expected 1")]
    BadTrace(f64),

    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("state is unphysical: minimum eigenvalue {0:e}")]
    Unphysical(f64),

    #[error("negative outcome probability {min:e}")]
    NegativeProbability {
        min: f64,
        dist: Box<crate::povm::OutcomeDistribution>,
    },

    #[error("overinformative POVM has singular overlap; coarse-grain to pauli4 first")]
    SingularOverlap,

    #[error("expected POVM kind {expected}, got {got}")]
    WrongKind {
        expected: crate::povm::PovmKind,
        got: crate::povm::PovmKind,
    },

    #[error("outcome spaces differ")]
    OutcomeSpaceMismatch,

    #[error("dataset has zero total count")]
    ZeroTotal,

    #[error("missing measurement setting {0:?}")]
    MissingSetting(String),

    #[error("invalid basis string {0:?}")]
    InvalidBasis(String),

    #[error("outcome space of {0} entries is too large for exact enumeration")]
    TooLarge(usize),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged {
        epoch: usize,
        loss: f64,
        /// Parameters at the last finite iterate.
        snapshot: Vec<f64>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of numerical procedures as opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Diverged { .. }
                | Error::Unphysical(_)
                | Error::NegativeProbability { .. }
                | Error::SingularOverlap
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
