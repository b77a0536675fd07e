use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The constraint gradient is too small for the projection to be defined.
    #[error("singular constraint gradient: |grad g| = {norm:e} is below the floor {floor:e}")]
    SingularGradient { norm: f64, floor: f64 },

    #[error("temperature must be positive, got {0}")]
    NonPositiveEta(f64),

    #[error("kernel bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),

    #[error("degenerate ensemble: {0}")]
    DegenerateEnsemble(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("bad temperature schedule: {0}")]
    BadSchedule(String),

    #[error("non-finite function evaluation at {0}")]
    NonFiniteEvaluation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("step size eta*alpha = {product} exceeds the stability limit 2")]
    UnstableStepSize { product: f64 },

    #[error("sampler failed at iteration {iteration}: {source}")]
    Step {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::Step {
            iteration,
            source: Box::new(self),
        }
    }

    /// Innermost error, looking through iteration wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            other => other,
        }
    }
}
