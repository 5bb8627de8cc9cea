use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series too short: need at least {min} samples, got {got}")]
    Length { min: usize, got: usize },

    #[error("format error in {context}: {message}")]
    Format { context: String, message: String },

    #[error("timestamps not strictly increasing at row {row} in {context}")]
    Monotonicity { context: String, row: usize },

    #[error("non-finite value at row {row}, column `{column}` in {context}")]
    Value {
        context: String,
        row: usize,
        column: String,
    },

    #[error("no tap found: max |diff| {peak:.6} does not exceed threshold {threshold:.6}")]
    NoTap { peak: f64, threshold: f64 },

    #[error("overlap error: {0}")]
    Overlap(String),

    #[error("recording too short: {samples} samples, window needs {window}")]
    TooShort { samples: usize, window: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("no minority samples to augment")]
    EmptyMinority,

    #[error("too few samples: {got} minority rows, need more than k = {k}")]
    TooFewSamples { got: usize, k: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("labels are degenerate: {0}")]
    DegenerateLabels(String),

    #[error("dimension mismatch: model expects {expected} features, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("degenerate segment: peak at index {peak_idx} has no interior extremum")]
    DegenerateSegment { peak_idx: usize },

    #[error("too few participants: {got} for {k} folds")]
    TooFewParticipants { got: usize, k: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checksum mismatch: {0}")]
    Checksum(String),

    #[error("leakage guard violated: {0}")]
    Leakage(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by bad input data or configuration, as opposed
    /// to internal failures.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, Error::Leakage(_))
    }
}
