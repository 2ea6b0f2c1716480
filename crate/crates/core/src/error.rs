use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("subject {subject}: {rule}")]
    Validation { subject: String, rule: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("history for course {k} requested but subject has only {kappa} courses")]
    CourseOutOfRange { k: usize, kappa: usize },
    #[error("sampler initialization failed: {0}")]
    Initialization(String),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn validation(subject: impl Into<String>, rule: impl Into<String>) -> Self {
        Error::Validation {
            subject: subject.into(),
            rule: rule.into(),
        }
    }
}
