use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("resolution {resolution:?} is not valid for preset `{preset}`: {reason}")]
    Resolution {
        preset: String,
        resolution: Vec<usize>,
        reason: String,
    },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("active element {element} is not reachable from the start region")]
    Unreachable { element: usize },

    #[error("node selector `{0}` matched no nodes")]
    EmptySelection(String),

    #[error("invalid node selector: {0}")]
    InvalidSelector(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("element {element} has no active neighbours")]
    IsolatedElement { element: usize },

    #[error("invalid time field: {0}")]
    InvalidField(String),

    #[error("linear solve failed{}: {reason}", stage.map(|s| format!(" at stage {s}")).unwrap_or_default())]
    Solve { stage: Option<usize>, reason: String },

    #[error("expected {expected} retained stages, found {found}")]
    StageMismatch { expected: usize, found: usize },

    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
