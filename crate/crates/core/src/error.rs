use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = SaversError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum SaversError {
    /// Incompatible tensor or image extents.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Internal bookkeeping out of sync (indices, parameter names, shapes).
    #[error("corruption error: {0}")]
    Corruption(String),

    /// Malformed label or class data.
    #[error("data error: {0}")]
    Data(String),

    /// Malformed file contents. `offset` is the byte position where parsing stopped.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    /// Thresholding produced no foreground pixels.
    #[error("empty mask: {0}")]
    EmptyMask(String),

    #[error("placement error (placement {index}): {message}")]
    Placement { index: usize, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl SaversError {
    pub fn format(offset: usize, message: impl Into<String>) -> Self {
        SaversError::Format {
            offset,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SaversError::Io {
            path: path.into(),
            source,
        }
    }
}
