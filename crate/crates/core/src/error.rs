use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A decision or constant set violates a constraint of the delay-to-accuracy problem.
    #[error("infeasible ({constraint}): {detail}")]
    Infeasible { constraint: &'static str, detail: String },

    /// The convergence-bound denominator is not positive.
    #[error("bound denominator is not positive ({denominator:e})")]
    BoundInfeasible { denominator: f64 },

    /// The learning rate does not satisfy `0 < eta < sum(phi) / (8 beta)`.
    #[error("learning rate {eta} violates 0 < eta < {limit}")]
    LearningRate { eta: f64, limit: f64 },

    #[error("numeric error in round {round}: {detail}")]
    Numeric { round: usize, detail: String },

    #[error("configuration error at `{key}`: {detail}")]
    Config { key: String, detail: String },

    #[error("constant estimation failed: {0}")]
    Estimation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Config { key: key.into(), detail: detail.into() }
    }

    pub(crate) fn infeasible(constraint: &'static str, detail: impl Into<String>) -> Self {
        Error::Infeasible { constraint, detail: detail.into() }
    }

    /// True for every flavour of infeasibility (constraint violation or bound denominator).
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Error::Infeasible { .. } | Error::BoundInfeasible { .. })
    }
}
