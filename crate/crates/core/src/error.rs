use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Tensor shapes disagree along a named axis.
    #[error("dimension mismatch in {op}: {axis} expected {expected}, found {found}")]
    Dimension {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        found: usize,
    },

    /// A layer or run configuration cannot be realized.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller violated an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Bytes do not follow the expected file layout.
    #[error("format error: {0}")]
    Format(String),

    /// Payload shorter (or longer) than its header announces.
    #[error("length error: expected {expected} bytes, found {actual}")]
    Length { expected: usize, actual: usize },

    /// Well-formed file carrying out-of-range values.
    #[error("data error: {0}")]
    Data(String),

    /// Reading or writing a file failed.
    #[error("I/O error on {path}: {message}")]
    Io { path: String, message: String },

    /// Training produced a non-finite loss.
    #[error("training diverged in epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}
