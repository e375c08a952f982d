use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature grid would hold {points} points, above the budget of {budget}")]
    PointBudgetExceeded { points: usize, budget: usize },

    #[error("non-finite value in {what} at point {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("matrix is not positive definite: pivot {index} = {value:e}")]
    NotPositiveDefinite { index: usize, value: f64 },

    #[error("Gram matrix of the trial functions is singular (smallest eigenvalue {min_eig:e})")]
    SingularGram { min_eig: f64 },

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },

    #[error("Gram matrix has no positive eigenvalues; the basis is unusable")]
    UnusableBasis,

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("unknown problem `{0}` (expected laplace2d, ho-decoupled or ho-coupled)")]
    UnknownProblem(String),

    #[error("malformed parameter file: {0}")]
    Checkpoint(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at_stage(stage))
    }
}
