use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the CLI to choose an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Validation,
    Internal,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    // dictionary
    #[error("image `{image_id}` is labeled with `{concept}` but has no mask")]
    MissingMask { image_id: String, concept: String },
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("unknown subgroup `{subgroup}` in category `{category}`")]
    UnknownSubgroup { category: String, subgroup: String },
    #[error("unknown region `{0}`")]
    UnknownRegion(String),
    #[error("unknown image `{0}`")]
    UnknownImage(String),
    #[error("dimension mismatch for {what}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        what: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("mask for image `{image_id}` concept `{concept}` has no foreground")]
    EmptyMask { image_id: String, concept: String },
    #[error("degenerate landmarks: {0}")]
    DegenerateLandmarks(String),
    #[error("invalid dictionary: {0}")]
    InvalidDictionary(String),

    // activation store
    #[error("bad magic: expected HNDA")]
    BadMagic,
    #[error("unsupported HNDA version {0}")]
    VersionUnsupported(u32),
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error("non-finite activation at unit {unit}, image {image}, offset {offset}")]
    NonFiniteValue {
        unit: usize,
        image: usize,
        offset: usize,
    },
    #[error("index out of range: {0}")]
    OutOfRange(String),

    // stages
    #[error("empty selection for category `{0}`")]
    EmptySelection(String),
    #[error("category `{0}` has fewer than two subgroups with images")]
    InsufficientSubgroups(String),
    #[error("region `{0}` has no supporting images")]
    EmptyRegionSupport(String),
    #[error("unknown class label `{label}` for image `{image_id}`")]
    UnknownClassLabel { image_id: String, label: String },

    // bench / config
    #[error("invalid planted spec: {0}")]
    SpecInvalid(String),
    #[error("ground truth and report come from different runs: {0}")]
    MismatchedRun(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::Internal(_) => ErrorClass::Internal,
            _ => ErrorClass::Validation,
        }
    }
}
