use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid settings: bad ratios, non-positive rank, negative lambda, ...
    #[error("configuration error: {0}")]
    Config(String),

    /// A text input could not be parsed; `line` is 1-based.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An (i, j, k) index fell outside the tensor shape.
    #[error("index ({i}, {j}, {k}) out of range for shape ({dim_i}, {dim_j}, {dim_k})")]
    Bounds {
        i: usize,
        j: usize,
        k: usize,
        dim_i: usize,
        dim_j: usize,
        dim_k: usize,
    },

    /// A value fell outside its admissible interval (timestamp, weight, ...).
    #[error("value out of range: {0}")]
    Range(String),

    /// A metric was requested on an input it is undefined for.
    #[error("evaluation error: {0}")]
    Eval(String),

    /// A parameter or velocity became non-finite during training.
    #[error("training diverged on entry ({i}, {j}, {k}){}",
            epoch.map(|e| format!(" during epoch {e}")).unwrap_or_default())]
    Divergence {
        i: usize,
        j: usize,
        k: usize,
        epoch: Option<usize>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Attaches the offending path to an I/O error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
