use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. `InvalidInput` covers everything a caller handed us
/// that cannot be acted on (bad config values, shape mismatches, out-of-range
/// addresses); the remaining variants mark specific pipeline failures that
/// callers may want to branch on.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("file version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },

    #[error("layer {layer} quantized to all zeros; no scale can be formed")]
    DegenerateLayer { layer: usize },

    #[error("no candidate beats the linear baseline on both tasks")]
    NoQualifyingSolution,

    #[error("layer {layer} shape {rows}x{cols} does not fit a kernel")]
    LayerTooLarge {
        layer: usize,
        rows: usize,
        cols: usize,
    },

    #[error("mapping for layer {layer} is incomplete; pass force to run anyway")]
    MappingUnsuccessful { layer: usize },

    #[error("calibration is degenerate: {0}")]
    DegenerateCalibration(String),

    #[error("missing input: {0}")]
    MissingInput(String),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn json(path: impl AsRef<std::path::Path>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn parse(path: impl AsRef<std::path::Path>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            line,
            msg: msg.into(),
        }
    }

    /// True for errors that indicate the caller's input was unusable, as
    /// opposed to a failure discovered while running. The CLI maps these to
    /// its "invalid input" exit code.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Parse { .. }
                | Error::VersionMismatch { .. }
                | Error::MissingInput(_)
        )
    }
}
