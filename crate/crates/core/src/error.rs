use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("instance too large for brute force: n = {n}, limit = {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("Gibbs kernel underflowed to zero on {axis} {index}; raise the entropy weight or use the log-domain solver")]
    NumericalUnderflow { axis: &'static str, index: usize },

    #[error("marginal `{0}` has zero total mass")]
    EmptyMarginal(&'static str),

    #[error("invalid dataset spec: {0}")]
    InvalidSpec(String),

    #[error("sampling diverged for class {class} at step {step}")]
    SamplingDiverged { class: usize, step: usize },

    #[error("training diverged: {0}")]
    TrainingDiverged(String),

    #[error("no class has mass on both sides of the label-image coupling")]
    NoValidClasses,

    #[error("config error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, detail: impl ToString) -> Self {
        Error::Format {
            what,
            detail: detail.to_string(),
        }
    }

    /// Wraps the error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// True for errors caused by user configuration rather than computation.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::InvalidSpec(_) => true,
            Error::Stage { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
