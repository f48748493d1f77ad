use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure in {context}: {detail}")]
    Numeric { context: String, detail: String },

    /// Non-finite entries, as `(row, col)` pairs of the offending matrix.
    #[error("non-finite values in {context} at {indices:?}")]
    NonFinite {
        context: String,
        indices: Vec<(usize, usize)>,
    },

    #[error("all particle weights are zero or non-finite")]
    DegenerateWeights,

    #[error("run {run}, step {step}, {stage}: {source}")]
    Run {
        run: usize,
        step: usize,
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{failed} of {total} Monte Carlo runs failed (quota is 10%)")]
    TooManyFailures { failed: usize, total: usize },
}

impl Error {
    pub(crate) fn numeric(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn in_run(self, run: usize, step: usize, stage: impl Into<String>) -> Self {
        Error::Run {
            run,
            step,
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
