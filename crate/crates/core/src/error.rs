use std::path::PathBuf;

/// Errors produced anywhere in the probing pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("non-finite value at step {step}: {what}")]
    Numeric { step: usize, what: String },

    #[error("only {achievable} distinct captions are realizable, {requested} requested")]
    Unrealizable { requested: usize, achievable: usize },

    #[error("matcher training diverged: dev accuracy {accuracy:.3} below {required:.2}")]
    Divergence {
        accuracy: f64,
        required: f64,
        loss_trace: Vec<f64>,
    },

    #[error("training aborted at step {step}: {reason}")]
    Aborted {
        step: usize,
        reason: String,
        last_finite: Option<Box<crate::trainer::Checkpoint>>,
    },

    #[error("enumeration bound exceeded: {0}")]
    Bound(String),

    #[error("parse error in {source_name} line {line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("missing artifact {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(source_name: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }
}
