use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: String, index: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("journey {id}: expected {expected} features, found {found}")]
    FeatureCount {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("need at least {required} journeys, found {found}")]
    TooFewJourneys { found: usize, required: usize },

    #[error("metric needs both classes: {0}")]
    SingleClass(String),

    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),

    #[error("training diverged at epoch {epoch} (last finite epoch: {last_finite:?})")]
    Diverged {
        epoch: usize,
        last_finite: Option<usize>,
    },

    #[error("prevalence calibration failed: {0}")]
    Calibration(String),

    #[error("run {index}: {source}")]
    Run {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
